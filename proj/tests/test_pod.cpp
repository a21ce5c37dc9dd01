#include "gbl/galerkin.hpp"
#include "gbl/pod.hpp"

#include <doctest.h>

#include <Eigen/SVD>

#include <cmath>
#include <filesystem>
#include <random>

using namespace gbl;

namespace {

Eigen::MatrixXd random_matrix(Index rows, Index cols, unsigned seed)
{
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> dist;
    Eigen::MatrixXd m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i)
            m(i, j) = dist(gen);
    return m;
}

} // namespace

TEST_CASE("method of snapshots matches a dense SVD")
{
    for (unsigned seed = 1; seed <= 5; ++seed) {
        const Eigen::MatrixXd f = random_matrix(30, 10, seed);
        const auto dec = method_of_snapshots(f, 1.0, InnerProductSpace::euclidean());
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(f, Eigen::ComputeThinU);
        const Eigen::VectorXd s2 = svd.singularValues().array().square();
        REQUIRE(dec.eigenvalues.size() == 10);
        for (Index i = 0; i < 10; ++i)
            CHECK(std::abs(dec.eigenvalues[i] - s2[i]) <= 1e-10 * s2[i]);
        CHECK(dec.n_pod == 10);
        const Eigen::MatrixXd g = dec.modes.transpose() * dec.modes;
        CHECK((g - Eigen::MatrixXd::Identity(10, 10)).norm() <= 1e-12);
        // Same subspaces as the left singular vectors.
        for (Index k = 1; k <= 10; ++k) {
            const Eigen::MatrixXd u = svd.matrixU().leftCols(k);
            const Eigen::MatrixXd x = dec.modes.leftCols(k);
            CHECK((u - x * (x.transpose() * u)).norm() <= 1e-8);
        }
    }
}

TEST_CASE("rank one snapshots")
{
    Eigen::MatrixXd f(2, 1);
    f << 1, 2;
    const auto dec = method_of_snapshots(f, 0.95, InnerProductSpace::euclidean());
    REQUIRE(dec.modes.cols() == 1);
    const Eigen::Vector2d expect = Eigen::Vector2d(1, 2) / std::sqrt(5.0);
    CHECK((dec.modes.col(0) - expect).norm() <= 1e-14);
    CHECK(dec.n_pod == 1);
    CHECK(dec.retained_ratio == doctest::Approx(1.0));

    Eigen::MatrixXd twice(2, 2);
    twice << 1, 2, 2, 4;
    CHECK(method_of_snapshots(twice, 1.0, InnerProductSpace::euclidean()).modes.cols() == 1);
}

TEST_CASE("invalid snapshot input")
{
    const auto ip = InnerProductSpace::euclidean();
    CHECK_THROWS_AS(method_of_snapshots(Eigen::MatrixXd::Zero(4, 3), 0.9, ip), PodError);
    CHECK_THROWS_AS(method_of_snapshots(random_matrix(4, 3, 1), 0.0, ip), PodError);
    CHECK_THROWS_AS(method_of_snapshots(random_matrix(4, 3, 1), 1.5, ip), PodError);
}

TEST_CASE("truncation and energy accounting")
{
    // Prescribed spectrum: singular values 10, 3, 1, 0.1.
    const Eigen::MatrixXd q = random_matrix(20, 4, 9).householderQr().householderQ() * Eigen::MatrixXd::Identity(20, 4);
    const Eigen::MatrixXd r = random_matrix(4, 4, 10).householderQr().householderQ();
    const Eigen::Vector4d sv(10, 3, 1, 0.1);
    const Eigen::MatrixXd f = q * sv.asDiagonal() * r.transpose();
    const double total = sv.squaredNorm();
    const auto ip = InnerProductSpace::euclidean();

    const auto d90 = method_of_snapshots(f, 0.9, ip);
    CHECK(d90.n_pod == 1);
    CHECK(d90.retained_ratio == doctest::Approx(100.0 / total));
    const auto d99 = method_of_snapshots(f, 0.99, ip);
    CHECK(d99.n_pod == 2);
    // ic exactly equal to a cumulative ratio stops there.
    CHECK(method_of_snapshots(f, 109.0 / total, ip).n_pod == 2);

    const ReducedBasis b = make_basis(Variable::Phi, d99, d99.n_pod, 0.99, ip);
    const double kept = captured_energy(b, f, ip);
    CHECK(kept >= 0.99);
    const Eigen::MatrixXd resid = f - b.modes * project(f, b);
    CHECK(std::abs(resid.squaredNorm() / f.squaredNorm() - (1.0 - kept)) <= 1e-12);
}

TEST_CASE("projection is the weighted least-squares fit")
{
    const Mesh mesh = build_box_mesh(3, 3, 3, Eigen::Vector3d(3, 3, 3));
    const SparseMatrix mass = assemble_mass(mesh);
    const auto ip = InnerProductSpace::mass(mass);
    const Eigen::MatrixXd f = random_matrix(mesh.num_vertices(), 6, 3);
    const auto dec = method_of_snapshots(f, 0.8, ip);
    const ReducedBasis b = make_basis(Variable::Mu, dec, dec.n_pod, 0.8, ip);
    const Eigen::MatrixXd gram = ip.gram(b.modes, b.modes);
    CHECK((gram - Eigen::MatrixXd::Identity(b.size(), b.size())).norm() <= 1e-12);

    const Eigen::VectorXd g = random_matrix(mesh.num_vertices(), 1, 4).col(0);
    const Eigen::MatrixXd w = Eigen::MatrixXd(mass);
    const Eigen::LLT<Eigen::MatrixXd> chol(w);
    const Eigen::MatrixXd lt = chol.matrixU();
    const Eigen::VectorXd ls = (lt * b.modes).colPivHouseholderQr().solve(lt * g);
    CHECK((project(g, b) - ls).norm() <= 1e-10 * ls.norm());
    CHECK((reconstruct(project(g, b), b) - b.modes * ls).norm() <= 1e-10 * g.norm());
}

TEST_CASE("two-stage POD shares one size and pads")
{
    const Mesh mesh = build_box_mesh(3, 3, 3, Eigen::Vector3d(3, 3, 3));
    const SparseMatrix mass = assemble_mass(mesh);
    const Index n = mesh.num_vertices();
    std::array<std::vector<SnapshotSet>, 3> snaps;
    for (int k = 0; k < 3; ++k) {
        // phi varies in many directions, nhat in one.
        snaps[0].push_back({Variable::Phi, k, random_matrix(n, 8, 20 + k)});
        snaps[1].push_back({Variable::Mu, k, random_matrix(n, 8, 40 + k)});
        const Eigen::VectorXd dir = random_matrix(n, 1, 60).col(0);
        snaps[2].push_back({Variable::Nhat, k, dir * Eigen::RowVectorXd::LinSpaced(8, 1.0, 2.0 + k)});
    }
    PodOptions o;
    o.ic = 0.9;
    const PodBases b = two_stage_pod(snaps, o, mass);
    const auto ip = InnerProductSpace::mass(mass);
    CHECK(b.natural_sizes[2] == 1);
    for (const auto& basis : b.bases) {
        CHECK(basis.size() == b.n_pod);
        const Eigen::MatrixXd g = ip.gram(basis.modes, basis.modes);
        CHECK((g - Eigen::MatrixXd::Identity(b.n_pod, b.n_pod)).norm() <= 1e-10);
    }
    CHECK(b.n_pod == std::max(b.natural_sizes[0], b.natural_sizes[1]));
}

TEST_CASE("basis archive round trip")
{
    const auto dir = std::filesystem::temp_directory_path() / "gbl-test-basis";
    std::filesystem::remove_all(dir);
    const Mesh mesh = build_box_mesh(2, 2, 2, Eigen::Vector3d(2, 2, 2));
    const SparseMatrix mass = assemble_mass(mesh);
    const auto ip = InnerProductSpace::mass(mass);
    const auto dec = method_of_snapshots(random_matrix(mesh.num_vertices(), 5, 8), 0.9, ip);
    const ReducedBasis b = make_basis(Variable::Nhat, dec, dec.n_pod, 0.9, ip);
    save_basis(dir, b);
    const ReducedBasis back = load_basis(dir, ip);
    CHECK(back.variable == Variable::Nhat);
    CHECK(back.modes == b.modes);
    CHECK(back.ic == 0.9);
    CHECK_THROWS(load_basis(dir / "missing", ip));
}

TEST_CASE("POD-Galerkin at full rank reproduces the FOM")
{
    const Mesh m = build_box_mesh(4, 4, 4, Eigen::Vector3d(16, 16, 16));
    const OperatorBundle ops = assemble_operators(m, isotropic_field(m, 30.0),
                                                  isotropic_field(m, 1e6, TensorRole::Diffusivity));
    SimulationConfig sim;
    sim.n_steps = 10;
    sim.epsilon = default_epsilon(4.0, std::sqrt(106.0 * 1530.0));
    const NodalField phi0 = gaussian_bump(m, Eigen::Vector3d::Zero(), 1.5e-4, 2.0, -1.0);
    const ParameterSet p = reference_patient();
    const State s0 = initial_state(phi0, NodalField::Ones(m.num_vertices()), p, sim, ops);
    const Trajectory tr = run(s0, p, sim, ops);

    std::array<std::vector<SnapshotSet>, 3> snaps;
    for (auto v : {Variable::Phi, Variable::Mu, Variable::Nhat})
        snaps[std::size_t(v)].push_back(snapshot_set(tr, v, 0));
    PodOptions o;
    o.ic = 1.0;
    const PodBases b = two_stage_pod(snaps, o, ops.mass);
    const ReducedTrajectory red = pod_galerkin_run(s0, p, sim, b, ops);
    REQUIRE(red.phi.cols() == 11);
    for (Index j = 0; j <= 10; ++j) {
        const Eigen::VectorXd a = project(tr.states[std::size_t(j)].phi, b[Variable::Phi]);
        CHECK((red.phi.col(j) - a).norm() <= 1e-6 * a.norm());
    }
}
