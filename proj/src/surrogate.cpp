#include "gbl/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace gbl {

AffineScaling AffineScaling::identity(Index n)
{
    return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n)};
}

AffineScaling AffineScaling::fit(const Eigen::MatrixXd& x)
{
    if (x.cols() == 0)
        throw SurrogateError("cannot fit a scaling to an empty matrix");
    AffineScaling s;
    s.shift = x.rowwise().mean();
    s.scale.resize(x.rows());
    for (Index i = 0; i < x.rows(); ++i) {
        const double sd = std::sqrt((x.row(i).array() - s.shift[i]).square().mean());
        s.scale[i] = sd > 1e-12 * std::max(1.0, std::abs(s.shift[i])) ? sd : 1.0;
    }
    return s;
}

Eigen::MatrixXd AffineScaling::apply(const Eigen::MatrixXd& x) const
{
    if (x.rows() != shift.size())
        throw SurrogateError("scaling dimension mismatch");
    return (x.colwise() - shift).array().colwise() / scale.array();
}

Eigen::MatrixXd AffineScaling::invert(const Eigen::MatrixXd& y) const
{
    if (y.rows() != shift.size())
        throw SurrogateError("scaling dimension mismatch");
    return (y.array().colwise() * scale.array()).matrix().colwise() + shift;
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t basis_fingerprint(const ReducedBasis& basis)
{
    const std::int64_t dims[2] = {basis.dimension(), basis.size()};
    std::uint64_t h = fnv1a(dims, sizeof dims);
    return fnv1a(basis.modes.data(), sizeof(double) * std::size_t(basis.modes.size()), h);
}

std::string to_string(SurrogateKind k)
{
    return k == SurrogateKind::Direct ? "direct" : "inverse";
}

TrainingSet build_direct_dataset(const std::vector<TrajectoryRecord>& records, const NormalizationSpec& spec,
                                 double horizon)
{
    if (records.empty())
        throw SurrogateError("no trajectories for the direct dataset");
    if (!(horizon > 0.0))
        throw SurrogateError("time horizon must be positive");
    const Index n_pod = records.front().phi.rows();
    Index total = 0;
    for (const auto& r : records) {
        if (r.phi.rows() != n_pod || Index(r.times.size()) != r.phi.cols())
            throw SurrogateError("inconsistent trajectory record");
        total += r.phi.cols();
    }
    TrainingSet set;
    set.inputs.resize(ParameterSet::size + 1, total);
    set.targets.resize(n_pod, total);
    Index col = 0;
    for (std::size_t g = 0; g < records.size(); ++g) {
        const Eigen::VectorXd z = normalize_params(records[g].params, spec);
        for (Index j = 0; j < records[g].phi.cols(); ++j, ++col) {
            set.inputs.col(col).head(ParameterSet::size) = z;
            set.inputs(ParameterSet::size, col) = records[g].times[j] / horizon;
            set.targets.col(col) = records[g].phi.col(j);
            set.groups.push_back(int(g));
        }
    }
    set.train.resize(total);
    std::iota(set.train.begin(), set.train.end(), Index(0));
    return set;
}

TrainingSet build_inverse_dataset(const std::vector<TrajectoryRecord>& records, const NormalizationSpec& spec,
                                  const InversePairOptions& o)
{
    if (records.empty())
        throw SurrogateError("no trajectories for the inverse dataset");
    if (o.gap_steps < 1 || o.pairs_per_trajectory < 1)
        throw SurrogateError("gap and pair count must be positive");
    const Index n_pod = records.front().phi.rows();
    std::uint64_t state = o.seed;
    TrainingSet set;
    std::vector<Eigen::VectorXd> xs, ys;
    for (std::size_t g = 0; g < records.size(); ++g) {
        const auto& r = records[g];
        if (r.phi.rows() != n_pod)
            throw SurrogateError("inconsistent trajectory record");
        const Index admissible = r.phi.cols() - o.gap_steps;
        if (admissible < 1)
            throw SurrogateError("observation gap of " + std::to_string(o.gap_steps) +
                                 " steps exceeds the trajectory length");
        std::vector<Index> starts(admissible);
        std::iota(starts.begin(), starts.end(), Index(0));
        const Index pairs = o.fixed_start ? 1 : std::min<Index>(o.pairs_per_trajectory, admissible);
        if (!o.fixed_start) {
            for (Index k = 0; k < pairs; ++k) {
                const Index pick = k + Index(uniform01(state) * double(admissible - k));
                std::swap(starts[k], starts[std::min(pick, admissible - 1)]);
            }
        }
        const Eigen::VectorXd z = normalize_params(r.params, spec);
        for (Index k = 0; k < pairs; ++k) {
            Eigen::VectorXd x(2 * n_pod);
            x << r.phi.col(starts[k]), r.phi.col(starts[k] + o.gap_steps);
            xs.push_back(std::move(x));
            ys.push_back(z);
            set.groups.push_back(int(g));
        }
    }
    set.inputs.resize(2 * n_pod, Index(xs.size()));
    set.targets.resize(ParameterSet::size, Index(ys.size()));
    for (std::size_t j = 0; j < xs.size(); ++j) {
        set.inputs.col(Index(j)) = xs[j];
        set.targets.col(Index(j)) = ys[j];
    }
    set.train.resize(set.rows());
    std::iota(set.train.begin(), set.train.end(), Index(0));
    return set;
}

void split_by_group(TrainingSet& set, int n_test_groups, std::uint64_t seed)
{
    std::vector<int> ids = set.groups;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (n_test_groups < 0 || n_test_groups >= int(ids.size()))
        throw SurrogateError("test split must leave at least one training parameter set");
    std::uint64_t state = seed;
    for (int k = 0; k < n_test_groups; ++k) {
        const int pick = k + int(uniform01(state) * double(int(ids.size()) - k));
        std::swap(ids[k], ids[std::min(pick, int(ids.size()) - 1)]);
    }
    std::vector<char> held(*std::max_element(set.groups.begin(), set.groups.end()) + 1, 0);
    for (int k = 0; k < n_test_groups; ++k)
        held[ids[k]] = 1;
    set.train.clear();
    set.test.clear();
    for (Index j = 0; j < set.rows(); ++j)
        (held[set.groups[j]] ? set.test : set.train).push_back(j);
}

namespace {

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<Index>& cols)
{
    Eigen::MatrixXd out(m.rows(), Index(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j)
        out.col(Index(j)) = m.col(cols[j]);
    return out;
}

TrainResult train_network(const TrainingSet& set, Surrogate s, bool scale_targets, const TrainOptions& o)
{
    if (set.train.empty())
        throw SurrogateError("empty training split");
    if (o.epochs < 0)
        throw SurrogateError("epoch count must be non-negative");
    const Eigen::MatrixXd x_train_raw = gather(set.inputs, set.train);
    const Eigen::MatrixXd y_train_raw = gather(set.targets, set.train);
    s.input = AffineScaling::fit(x_train_raw);
    s.output = scale_targets ? AffineScaling::fit(y_train_raw) : AffineScaling::identity(set.targets.rows());

    const Eigen::MatrixXd x_train = s.input.apply(x_train_raw);
    const Eigen::MatrixXd y_train = s.output.apply(y_train_raw);
    Eigen::MatrixXd x_test, y_test;
    if (!set.test.empty()) {
        x_test = s.input.apply(gather(set.inputs, set.test));
        y_test = s.output.apply(gather(set.targets, set.test));
    }

    std::vector<Index> sizes{set.inputs.rows()};
    sizes.insert(sizes.end(), o.hidden.begin(), o.hidden.end());
    sizes.push_back(set.targets.rows());
    s.net = Mlp::create(sizes, o.slope, o.seed);

    TrainResult out;
    Mlp work = s.net;
    auto test_mse = [&](const Eigen::VectorXd& theta) {
        if (set.test.empty())
            return std::nan("");
        work.set_parameters(theta);
        return mlp_loss(work, x_test, y_test);
    };
    const Objective f = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& g) {
        work.set_parameters(theta);
        auto lg = mlp_gradient(work, x_train, y_train);
        g = std::move(lg.gradient);
        return lg.loss;
    };
    LbfgsOptions lo;
    lo.max_iterations = o.epochs;
    lo.history = o.history;
    const Eigen::VectorXd theta0 = s.net.parameters();
    work.set_parameters(theta0);
    out.curve.push_back({0, mlp_loss(work, x_train, y_train), test_mse(theta0)});
    const auto result = minimize_lbfgs(f, theta0, lo, [&](const LbfgsIteration& it, const Eigen::VectorXd& theta) {
        out.curve.push_back({it.iteration, it.loss, test_mse(theta)});
    });
    out.fallbacks = result.fallbacks;
    s.net.set_parameters(result.x);
    s.trained = true;
    out.surrogate = std::move(s);
    return out;
}

void check_ready(const Surrogate& s, SurrogateKind kind)
{
    if (!s.trained)
        throw SurrogateError("network has not been trained");
    if (s.kind != kind)
        throw SurrogateError("expected a " + to_string(kind) + " network, got " + to_string(s.kind));
}

void check_basis(const Surrogate& s, const ReducedBasis& basis)
{
    if (basis.size() != s.n_pod || basis_fingerprint(basis) != s.fingerprint)
        throw SurrogateError("network was trained against a different POD basis");
}

} // namespace

TrainResult train_direct(const TrainingSet& set, const NormalizationSpec& spec, double horizon,
                         const ReducedBasis& phi_basis, const TrainOptions& options)
{
    if (set.inputs.rows() != ParameterSet::size + 1 || set.targets.rows() != phi_basis.size())
        throw SurrogateError("direct dataset does not match the basis");
    Surrogate s;
    s.kind = SurrogateKind::Direct;
    s.spec = spec;
    s.fingerprint = basis_fingerprint(phi_basis);
    s.n_pod = phi_basis.size();
    s.horizon = horizon;
    return train_network(set, std::move(s), true, options);
}

TrainResult train_inverse(const TrainingSet& set, const NormalizationSpec& spec, int gap_steps,
                          const ReducedBasis& phi_basis, const TrainOptions& options)
{
    if (set.inputs.rows() != 2 * phi_basis.size() || set.targets.rows() != ParameterSet::size)
        throw SurrogateError("inverse dataset does not match the basis");
    Surrogate s;
    s.kind = SurrogateKind::Inverse;
    s.spec = spec;
    s.fingerprint = basis_fingerprint(phi_basis);
    s.n_pod = phi_basis.size();
    s.gap_steps = gap_steps;
    return train_network(set, std::move(s), false, options);
}

Eigen::MatrixXd predict_direct_coefficients(const Surrogate& s, const ParameterSet& params,
                                            const std::vector<double>& times, bool strict)
{
    check_ready(s, SurrogateKind::Direct);
    validate(params);
    const Eigen::VectorXd z = normalize_params(params, s.spec, strict);
    Eigen::MatrixXd x(ParameterSet::size + 1, Index(times.size()));
    for (std::size_t j = 0; j < times.size(); ++j) {
        if (!std::isfinite(times[j]) || times[j] < 0.0 || times[j] > s.horizon * (1.0 + 1e-12))
            throw SurrogateError("time outside the trained horizon [0, " + std::to_string(s.horizon) + "]");
        x.col(Index(j)) << z, times[j] / s.horizon;
    }
    return s.output.invert(mlp_forward_batch(s.net, s.input.apply(x)));
}

NodalField predict_direct(const Surrogate& s, const ParameterSet& params, double t, const ReducedBasis& phi_basis,
                          bool strict)
{
    check_ready(s, SurrogateKind::Direct);
    check_basis(s, phi_basis);
    return reconstruct(predict_direct_coefficients(s, params, {t}, strict).col(0), phi_basis);
}

EstimateResult estimate_parameters(const Surrogate& s, const NodalField& phi_t0, const NodalField& phi_t1,
                                   const ReducedBasis& phi_basis)
{
    check_ready(s, SurrogateKind::Inverse);
    check_basis(s, phi_basis);
    if (phi_t0.size() != phi_basis.dimension() || phi_t1.size() != phi_basis.dimension())
        throw SurrogateError("observed fields do not match the mesh of the basis");
    if (!phi_t0.allFinite() || !phi_t1.allFinite())
        throw SurrogateError("observed fields contain non-finite values");
    Eigen::VectorXd x(2 * s.n_pod);
    x << project(phi_t0, phi_basis), project(phi_t1, phi_basis);
    EstimateResult out;
    out.raw = s.output.invert(mlp_forward_batch(s.net, s.input.apply(Eigen::MatrixXd(x)))).col(0);
    out.normalized = out.raw.cwiseMax(0.0).cwiseMin(1.0);
    out.clipped = (out.normalized - out.raw).cwiseAbs().maxCoeff() > 0.0;
    out.params = denormalize_params(out.normalized, s.spec);
    return out;
}

namespace {

void write_vector(std::ostream& out, const char* key, const Eigen::VectorXd& v)
{
    out << key << ' ' << v.size();
    for (Index i = 0; i < v.size(); ++i)
        out << ' ' << v[i];
    out << '\n';
}

void expect(std::istream& in, const std::string& key)
{
    std::string got;
    if (!(in >> got) || got != key)
        throw SurrogateError("network archive: expected '" + key + "', found '" + got + "'");
}

Eigen::VectorXd read_vector(std::istream& in, const char* key)
{
    expect(in, key);
    Index n = -1;
    if (!(in >> n) || n < 0)
        throw SurrogateError(std::string("network archive: bad length for ") + key);
    Eigen::VectorXd v(n);
    for (Index i = 0; i < n; ++i)
        if (!(in >> v[i]))
            throw SurrogateError(std::string("network archive: truncated ") + key);
    return v;
}

} // namespace

void save_surrogate(const std::filesystem::path& path, const Surrogate& s)
{
    if (!s.trained)
        throw SurrogateError("refusing to save an untrained network");
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw SurrogateError("cannot write " + path.string());
    out << std::setprecision(17);
    out << "gbl-network 1\n";
    out << "kind " << to_string(s.kind) << '\n';
    out << "fingerprint " << std::hex << s.fingerprint << std::dec << '\n';
    out << "n_pod " << s.n_pod << '\n';
    out << "horizon " << s.horizon << '\n';
    out << "gap_steps " << s.gap_steps << '\n';
    out << "slope " << s.net.slope << '\n';
    for (int k = 0; k < ParameterSet::size; ++k)
        out << "range " << ParameterSet::names[k] << ' ' << s.spec.ranges[k].min << ' ' << s.spec.ranges[k].max
            << ' ' << to_string(s.spec.modes[k]) << '\n';
    write_vector(out, "input_shift", s.input.shift);
    write_vector(out, "input_scale", s.input.scale);
    write_vector(out, "output_shift", s.output.shift);
    write_vector(out, "output_scale", s.output.scale);
    out << "layers " << s.net.weights.size() << '\n';
    for (std::size_t l = 0; l < s.net.weights.size(); ++l) {
        const auto& w = s.net.weights[l];
        out << "weight " << w.rows() << ' ' << w.cols() << '\n';
        for (Index i = 0; i < w.rows(); ++i) {
            for (Index j = 0; j < w.cols(); ++j)
                out << (j ? " " : "") << w(i, j);
            out << '\n';
        }
        write_vector(out, "bias", s.net.biases[l]);
    }
    if (!out)
        throw SurrogateError("failed writing " + path.string());
}

Surrogate load_surrogate(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw SurrogateError("cannot read network archive " + path.string());
    Surrogate s;
    expect(in, "gbl-network");
    int version = 0;
    in >> version;
    if (version != 1)
        throw SurrogateError("unsupported network archive version");
    std::string word;
    expect(in, "kind");
    in >> word;
    if (word == "direct")
        s.kind = SurrogateKind::Direct;
    else if (word == "inverse")
        s.kind = SurrogateKind::Inverse;
    else
        throw SurrogateError("unknown network kind '" + word + "'");
    expect(in, "fingerprint");
    in >> std::hex >> s.fingerprint >> std::dec;
    expect(in, "n_pod");
    in >> s.n_pod;
    expect(in, "horizon");
    in >> s.horizon;
    expect(in, "gap_steps");
    in >> s.gap_steps;
    expect(in, "slope");
    in >> s.net.slope;
    for (int k = 0; k < ParameterSet::size; ++k) {
        expect(in, "range");
        std::string name, mode;
        in >> name >> s.spec.ranges[k].min >> s.spec.ranges[k].max >> mode;
        if (name != ParameterSet::names[k])
            throw SurrogateError("network archive: parameter '" + name + "' out of order");
        s.spec.modes[k] = scale_mode_from_string(mode);
    }
    s.input.shift = read_vector(in, "input_shift");
    s.input.scale = read_vector(in, "input_scale");
    s.output.shift = read_vector(in, "output_shift");
    s.output.scale = read_vector(in, "output_scale");
    expect(in, "layers");
    std::size_t layers = 0;
    in >> layers;
    if (!in || layers == 0 || layers > 64)
        throw SurrogateError("network archive: bad layer count");
    for (std::size_t l = 0; l < layers; ++l) {
        expect(in, "weight");
        Index rows = -1, cols = -1;
        in >> rows >> cols;
        if (!in || rows < 1 || cols < 1)
            throw SurrogateError("network archive: bad weight shape");
        Eigen::MatrixXd w(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j)
                if (!(in >> w(i, j)))
                    throw SurrogateError("network archive: truncated weights");
        s.net.weights.push_back(std::move(w));
        s.net.biases.push_back(read_vector(in, "bias"));
    }
    try {
        s.net.validate();
        s.spec.validate();
    } catch (const std::exception& e) {
        throw SurrogateError(std::string("network archive: ") + e.what());
    }
    if (s.input.shift.size() != s.net.input_size() || s.input.scale.size() != s.net.input_size() ||
        s.output.shift.size() != s.net.output_size() || s.output.scale.size() != s.net.output_size())
        throw SurrogateError("network archive: scaling does not match the layer sizes");
    s.trained = true;
    return s;
}

void save_loss_csv(const std::filesystem::path& path, const std::vector<EpochLoss>& curve)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw SurrogateError("cannot write " + path.string());
    out << std::setprecision(17) << "epoch,train_mse,test_mse\n";
    for (const auto& e : curve) {
        out << e.epoch << ',' << e.train_mse << ',';
        if (std::isfinite(e.test_mse))
            out << e.test_mse;
        out << '\n';
    }
}

} // namespace gbl
