#include "gbl/lbfgs.hpp"
#include "gbl/mlp.hpp"
#include "gbl/normalization.hpp"
#include "gbl/surrogate.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace gbl;

namespace {

Eigen::MatrixXd random_matrix(Index rows, Index cols, std::uint64_t seed, double scale = 1.0)
{
    std::uint64_t state = seed;
    Eigen::MatrixXd m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i)
            m(i, j) = scale * (2.0 * uniform01(state) - 1.0);
    return m;
}

Eigen::VectorXd central_difference(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double h)
{
    Mlp work = net;
    const Eigen::VectorXd theta = net.parameters();
    Eigen::VectorXd g(theta.size());
    for (Index k = 0; k < theta.size(); ++k) {
        Eigen::VectorXd t = theta;
        t[k] += h;
        work.set_parameters(t);
        const double fp = mlp_loss(work, x, y);
        t[k] -= 2.0 * h;
        work.set_parameters(t);
        const double fm = mlp_loss(work, x, y);
        g[k] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Fake reduced trajectories: coefficients are smooth functions of (p, t).
std::vector<TrajectoryRecord> synthetic_records(int n_sets, int n_times, Index n_pod, std::uint64_t seed)
{
    const auto spec = NormalizationSpec::biological();
    const auto params = sample_parameters(n_sets, spec, seed);
    std::vector<TrajectoryRecord> out;
    for (const auto& p : params) {
        const Eigen::VectorXd z = normalize_params(p, spec);
        TrajectoryRecord r;
        r.params = p;
        r.phi.resize(n_pod, n_times);
        for (int j = 0; j < n_times; ++j) {
            const double t = 0.5 * j;
            r.times.push_back(t);
            for (Index i = 0; i < n_pod; ++i)
                r.phi(i, j) = std::sin(double(i + 1) * z[i % 6]) * (1.0 + 0.02 * t * z[(i + 1) % 6]);
            r.volumes.push_back(100.0 + t);
        }
        out.push_back(std::move(r));
    }
    return out;
}

ReducedBasis identity_basis(Index n, Index n_pod)
{
    ReducedBasis b;
    b.variable = Variable::Phi;
    b.inner_product = InnerProduct::Euclidean;
    b.modes = Eigen::MatrixXd::Identity(n, n_pod);
    b.weighted = b.modes;
    return b;
}

} // namespace

TEST_CASE("forward pass examples")
{
    SUBCASE("single layer, no hidden units")
    {
        Mlp net;
        net.weights = {Eigen::MatrixXd::Identity(3, 3)};
        net.biases = {Eigen::VectorXd::Zero(3)};
        const Eigen::Vector3d x(0.5, -2.0, 7.0);
        CHECK(mlp_forward(net, x) == x);
    }
    SUBCASE("zero weights return the output bias")
    {
        Mlp net = Mlp::create({4, 5, 2}, 0.01, 3);
        for (auto& w : net.weights)
            w.setZero();
        net.biases.back() << 0.25, -1.5;
        CHECK(mlp_forward(net, Eigen::Vector4d(1, 2, 3, 4)) == net.biases.back());
    }
    SUBCASE("leaky activation")
    {
        CHECK(leaky_relu(-2.0, 0.01) == doctest::Approx(-0.02));
        CHECK(leaky_relu(3.0, 0.01) == 3.0);
        Mlp net;
        net.slope = 0.01;
        net.weights = {Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1)};
        net.biases = {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
        CHECK(mlp_forward(net, Eigen::VectorXd::Constant(1, -2.0))[0] == doctest::Approx(-0.02));
    }
    SUBCASE("batch equals per-sample evaluation")
    {
        const Mlp net = Mlp::create({3, 8, 8, 2}, 0.01, 5);
        const Eigen::MatrixXd x = random_matrix(3, 6, 11);
        const Eigen::MatrixXd y = mlp_forward_batch(net, x);
        for (Index j = 0; j < 6; ++j)
            CHECK((y.col(j) - mlp_forward(net, x.col(j))).norm() <= 1e-14);
    }
}

TEST_CASE("network construction")
{
    const Mlp a = Mlp::create({7, 64, 64, 64, 15}, 0.01, 42);
    const Mlp b = Mlp::create({7, 64, 64, 64, 15}, 0.01, 42);
    CHECK(a.parameters() == b.parameters());
    CHECK(a.parameters() != Mlp::create({7, 64, 64, 64, 15}, 0.01, 43).parameters());
    CHECK(a.parameter_count() == 7 * 64 + 64 + 2 * (64 * 64 + 64) + 64 * 15 + 15);
    CHECK(a.weights[0].cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(7.0));
    CHECK(a.weights[1].cwiseAbs().maxCoeff() <= 1.0 / 8.0);
    CHECK(a.layer_sizes() == std::vector<Index>{7, 64, 64, 64, 15});
    CHECK_THROWS_AS(Mlp::create({3}, 0.01, 1), std::invalid_argument);

    Mlp c = a;
    CHECK_THROWS_AS(c.set_parameters(Eigen::VectorXd::Zero(3)), std::invalid_argument);
    c.set_parameters(a.parameters());
    CHECK(c.parameters() == a.parameters());
    CHECK_THROWS_AS(mlp_forward(a, Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("reverse-mode gradient matches central differences")
{
    for (std::uint64_t k = 0; k < 20; ++k) {
        std::uint64_t state = 1000 + k;
        const Index n_in = 1 + Index(uniform01(state) * 6);
        const Index n_out = 1 + Index(uniform01(state) * 4);
        const int n_hidden = int(uniform01(state) * 4);
        std::vector<Index> sizes{n_in};
        for (int l = 0; l < n_hidden; ++l)
            sizes.push_back(2 + Index(uniform01(state) * 15));
        sizes.push_back(n_out);
        const Mlp net = Mlp::create(sizes, 0.01, 77 + k);
        const Eigen::MatrixXd x = random_matrix(n_in, 9, 500 + k, 2.0);
        const Eigen::MatrixXd y = random_matrix(n_out, 9, 900 + k);
        const LossGradient lg = mlp_gradient(net, x, y);
        CHECK(lg.loss == doctest::Approx(mlp_loss(net, x, y)).epsilon(1e-14));
        const Eigen::VectorXd fd = central_difference(net, x, y, 1e-6);
        CHECK((lg.gradient - fd).norm() <= 1e-5 * lg.gradient.norm());
    }
}

TEST_CASE("L-BFGS fits a linear model")
{
    const Eigen::MatrixXd a = random_matrix(2, 3, 1);
    const Eigen::Vector2d b(0.3, -0.7);
    const Eigen::MatrixXd x = random_matrix(3, 50, 2);
    const Eigen::MatrixXd y = (a * x).colwise() + b;
    Mlp net = Mlp::create({3, 2}, 0.01, 9);
    Mlp work = net;
    const Objective f = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& g) {
        work.set_parameters(theta);
        auto lg = mlp_gradient(work, x, y);
        g = lg.gradient;
        return lg.loss;
    };
    LbfgsOptions o;
    o.max_iterations = 100;
    std::vector<double> losses{mlp_loss(net, x, y)};
    const LbfgsResult r = minimize_lbfgs(f, net.parameters(), o,
                                         [&](const LbfgsIteration& it, const Eigen::VectorXd&) { losses.push_back(it.loss); });
    CHECK(r.loss <= 1e-8);
    CHECK(r.iterations <= 100);
    for (std::size_t i = 1; i < losses.size(); ++i)
        CHECK(losses[i] <= losses[i - 1]);
}

TEST_CASE("L-BFGS accepted steps satisfy Armijo")
{
    // Rosenbrock, a classic curved valley.
    const Objective f = [](const Eigen::VectorXd& v, Eigen::VectorXd& g) {
        const double x = v[0], y = v[1];
        g.resize(2);
        g[0] = -2.0 * (1.0 - x) - 400.0 * x * (y - x * x);
        g[1] = 200.0 * (y - x * x);
        return (1.0 - x) * (1.0 - x) + 100.0 * (y - x * x) * (y - x * x);
    };
    LbfgsOptions o;
    o.max_iterations = 200;
    double prev = 24.2;
    bool monotone = true;
    const LbfgsResult r = minimize_lbfgs(f, Eigen::Vector2d(-1.2, 1.0), o,
                                         [&](const LbfgsIteration& it, const Eigen::VectorXd&) {
                                             monotone = monotone && it.loss < prev;
                                             prev = it.loss;
                                         });
    CHECK(monotone);
    CHECK((r.x - Eigen::Vector2d(1, 1)).norm() <= 1e-5);

    LbfgsOptions bad;
    bad.history = 0;
    CHECK_THROWS(minimize_lbfgs(f, Eigen::Vector2d(0, 0), bad));
}

TEST_CASE("parameter normalization")
{
    const auto spec = NormalizationSpec::biological();
    ParameterSet mid = reference_patient();
    mid.delta = 0.215;
    CHECK(normalize_params(mid, spec)[3] == doctest::Approx(0.5).epsilon(1e-14));
    mid.delta_n = 1e4;
    CHECK(normalize_params(mid, spec)[4] == doctest::Approx(0.5).epsilon(1e-14));

    for (const auto& p : sample_parameters(50, spec, 3)) {
        const ParameterSet back = denormalize_params(normalize_params(p, spec), spec);
        const Eigen::VectorXd a = p.to_vector(), b = back.to_vector();
        for (int k = 0; k < 6; ++k)
            CHECK(std::abs(a[k] - b[k]) <= 1e-12 * std::abs(a[k]));
    }

    ParameterSet out = reference_patient();
    out.kappa = 2000.0;
    CHECK_THROWS_AS(normalize_params(out, spec, true), ParameterError);
    bool clipped = false;
    CHECK(normalize_params(out, spec, false, &clipped)[2] == 1.0);
    CHECK(clipped);
    CHECK_THROWS_AS(denormalize_params(Eigen::VectorXd::Zero(5), spec), ParameterError);
}

TEST_CASE("parameter sampling is seeded")
{
    const auto spec = NormalizationSpec::biological();
    const auto a = sample_parameters(40, spec, 7);
    const auto b = sample_parameters(40, spec, 7);
    const auto c = sample_parameters(40, spec, 8);
    CHECK(a == b);
    CHECK(a != c);
    for (const auto& p : a)
        CHECK_NOTHROW(validate(p, true));
}

TEST_CASE("direct dataset layout")
{
    const auto records = synthetic_records(40, 61, 5, 1);
    TrainingSet set = build_direct_dataset(records, NormalizationSpec::biological(), 30.0);
    CHECK(set.rows() == 40 * 61);
    CHECK(set.inputs.rows() == 7);
    CHECK(set.targets.rows() == 5);
    CHECK(set.inputs(6, 0) == 0.0);
    CHECK(set.inputs(6, 60) == doctest::Approx(1.0));
    CHECK(set.targets.col(61 + 3) == records[1].phi.col(3));

    split_by_group(set, 10, 99);
    CHECK(set.train.size() + set.test.size() == std::size_t(set.rows()));
    CHECK(set.test.size() == 10 * 61);
    std::vector<int> held;
    for (Index j : set.test)
        held.push_back(set.groups[std::size_t(j)]);
    for (Index j : set.train)
        CHECK(std::find(held.begin(), held.end(), set.groups[std::size_t(j)]) == held.end());
    CHECK_THROWS_AS(split_by_group(set, 40, 1), SurrogateError);
}

TEST_CASE("inverse dataset layout")
{
    const auto records = synthetic_records(6, 61, 4, 2);
    InversePairOptions o;
    o.gap_steps = 40;
    o.pairs_per_trajectory = 20;
    o.seed = 5;
    const TrainingSet set = build_inverse_dataset(records, NormalizationSpec::biological(), o);
    CHECK(set.rows() == 6 * 20);
    CHECK(set.inputs.rows() == 8);
    for (Index j = 0; j < set.rows(); ++j) {
        const auto& r = records[std::size_t(set.groups[std::size_t(j)])];
        Index t0 = -1;
        for (Index c = 0; c + 40 < r.phi.cols(); ++c)
            if (r.phi.col(c) == set.inputs.col(j).head(4))
                t0 = c;
        REQUIRE(t0 >= 0);
        CHECK(set.inputs.col(j).tail(4) == r.phi.col(t0 + 40));
    }
    o.fixed_start = true;
    o.pairs_per_trajectory = 1;
    const TrainingSet fixed = build_inverse_dataset(records, NormalizationSpec::biological(), o);
    CHECK(fixed.inputs.col(0).head(4) == records[0].phi.col(0));
    o.gap_steps = 61;
    CHECK_THROWS_AS(build_inverse_dataset(records, NormalizationSpec::biological(), o), SurrogateError);
}

TEST_CASE("training, prediction and archives")
{
    const Index n_pod = 4;
    const auto records = synthetic_records(12, 21, n_pod, 4);
    const ReducedBasis basis = identity_basis(10, n_pod);
    const auto spec = NormalizationSpec::biological();
    TrainOptions o;
    o.hidden = {16, 16};
    o.epochs = 60;
    o.seed = 3;

    TrainingSet dset = build_direct_dataset(records, spec, 10.0);
    split_by_group(dset, 3, 1);
    const TrainResult d1 = train_direct(dset, spec, 10.0, basis, o);
    const TrainResult d2 = train_direct(dset, spec, 10.0, basis, o);
    CHECK(d1.surrogate.net.parameters() == d2.surrogate.net.parameters());
    CHECK(d1.curve.size() >= 2);
    CHECK(d1.curve.back().train_mse < d1.curve.front().train_mse);

    const auto& p = records[0].params;
    const Eigen::MatrixXd c = predict_direct_coefficients(d1.surrogate, p, {0.0, 5.0, 10.0});
    CHECK(c.rows() == n_pod);
    CHECK(c.cols() == 3);
    CHECK_THROWS_AS(predict_direct_coefficients(d1.surrogate, p, {11.0}), SurrogateError);
    CHECK(predict_direct(d1.surrogate, p, 5.0, basis).size() == 10);
    ReducedBasis other = basis;
    other.modes(0, 0) = 2.0;
    CHECK_THROWS_AS(predict_direct(d1.surrogate, p, 5.0, other), SurrogateError);

    const auto dir = std::filesystem::temp_directory_path() / "gbl-test-net";
    std::filesystem::create_directories(dir);
    save_surrogate(dir / "direct.txt", d1.surrogate);
    const Surrogate back = load_surrogate(dir / "direct.txt");
    CHECK(back.net.parameters() == d1.surrogate.net.parameters());
    CHECK(back.fingerprint == d1.surrogate.fingerprint);
    CHECK(back.input.shift == d1.surrogate.input.shift);
    CHECK(back.output.scale == d1.surrogate.output.scale);
    CHECK(back.spec == spec);
    CHECK(back.horizon == 10.0);
    CHECK(predict_direct_coefficients(back, p, {5.0}) == predict_direct_coefficients(d1.surrogate, p, {5.0}));
    CHECK_THROWS_AS(save_surrogate(dir / "untrained.txt", Surrogate{}), SurrogateError);
    CHECK_THROWS_AS(load_surrogate(dir / "absent.txt"), SurrogateError);

    InversePairOptions po;
    po.gap_steps = 10;
    po.pairs_per_trajectory = 5;
    TrainingSet iset = build_inverse_dataset(records, spec, po);
    split_by_group(iset, 3, 1);
    const TrainResult inv = train_inverse(iset, spec, 10, basis, o);
    CHECK_THROWS_AS(predict_direct(inv.surrogate, p, 1.0, basis), SurrogateError);
    const NodalField f0 = basis.modes * records[0].phi.col(0);
    const NodalField f1 = basis.modes * records[0].phi.col(10);
    const EstimateResult e = estimate_parameters(inv.surrogate, f0, f1, basis);
    CHECK(e.normalized.minCoeff() >= 0.0);
    CHECK(e.normalized.maxCoeff() <= 1.0);
    CHECK(e.clipped == ((e.raw - e.normalized).norm() > 0.0));
    CHECK_NOTHROW(validate(e.params, true));
    CHECK_THROWS_AS(estimate_parameters(inv.surrogate, NodalField::Zero(3), f1, basis), SurrogateError);
}

TEST_CASE("affine scaling")
{
    Eigen::MatrixXd x(2, 4);
    x << 1, 2, 3, 4, 5, 5, 5, 5;
    const AffineScaling s = AffineScaling::fit(x);
    const Eigen::MatrixXd y = s.apply(x);
    CHECK(std::abs(y.row(0).mean()) <= 1e-14);
    CHECK(y.row(0).squaredNorm() / 4.0 == doctest::Approx(1.0));
    CHECK(s.scale[1] == 1.0);
    CHECK((s.invert(y) - x).norm() <= 1e-14);
    CHECK(basis_fingerprint(identity_basis(5, 2)) != basis_fingerprint(identity_basis(5, 3)));
}
