#include "gbl/pod.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace gbl {

std::string to_string(Variable v)
{
    switch (v) {
    case Variable::Phi: return "phi";
    case Variable::Mu: return "mu";
    case Variable::Nhat: return "nhat";
    }
    return "?";
}

Variable variable_from_string(const std::string& s)
{
    if (s == "phi")
        return Variable::Phi;
    if (s == "mu")
        return Variable::Mu;
    if (s == "nhat")
        return Variable::Nhat;
    throw PodError("unknown variable '" + s + "'");
}

std::string to_string(InnerProduct ip)
{
    return ip == InnerProduct::Mass ? "mass" : "euclidean";
}

InnerProduct inner_product_from_string(const std::string& s)
{
    if (s == "mass")
        return InnerProduct::Mass;
    if (s == "euclidean")
        return InnerProduct::Euclidean;
    throw PodError("unknown inner product '" + s + "' (expected mass or euclidean)");
}

SnapshotSet snapshot_set(const Trajectory& traj, Variable variable, int parameter_id)
{
    if (traj.states.empty())
        throw PodError("empty trajectory");
    SnapshotSet s;
    s.variable = variable;
    s.parameter_id = parameter_id;
    const Index n = traj.states.front().phi.size();
    s.columns.resize(n, static_cast<Index>(traj.states.size()));
    for (std::size_t j = 0; j < traj.states.size(); ++j) {
        const State& st = traj.states[j];
        const NodalField& f = variable == Variable::Phi ? st.phi : variable == Variable::Mu ? st.mu : st.nhat;
        if (f.size() != n)
            throw PodError("snapshot columns differ in length");
        s.columns.col(static_cast<Index>(j)) = f;
    }
    return s;
}

SnapshotDecomposition method_of_snapshots(const Eigen::MatrixXd& snapshots, double ic, const InnerProductSpace& ip)
{
    if (!(ic > 0.0 && ic <= 1.0))
        throw PodError("ic must lie in (0, 1]");
    if (snapshots.cols() == 0)
        throw PodError("snapshot matrix has no columns");

    Eigen::MatrixXd corr = ip.gram(snapshots, snapshots);
    corr = 0.5 * (corr + corr.transpose()).eval();
    SnapshotDecomposition dec;
    dec.trace = corr.trace();
    if (!(dec.trace > 0.0))
        throw PodError("snapshot matrix is identically zero");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
    if (eig.info() != Eigen::Success)
        throw PodError("eigen-decomposition of the correlation matrix failed");
    const Eigen::VectorXd lambda = eig.eigenvalues().reverse();
    const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
    if (lambda.minCoeff() < -1e-12 * dec.trace)
        throw PodError("correlation matrix has a negative eigenvalue beyond round-off");
    dec.eigenvalues = lambda.cwiseMax(0.0);

    // Numerical rank: eigenvalues resolvable relative to the largest. The Gram
    // matrix carries round-off near 1e-15 * lambda_max.
    Index rank = 0;
    while (rank < dec.eigenvalues.size() && dec.eigenvalues[rank] > 1e-13 * dec.eigenvalues[0])
        ++rank;

    // ic = 1 keeps every resolvable mode rather than stopping within round-off of the trace.
    double cumulative = 0.0;
    dec.n_pod = ic >= 1.0 ? rank : 0;
    while (dec.n_pod < rank) {
        cumulative += dec.eigenvalues[dec.n_pod++];
        if (cumulative / dec.trace >= ic - 1e-12)
            break;
    }
    dec.retained_ratio = dec.eigenvalues.head(dec.n_pod).sum() / dec.trace;

    // xi_s = F v_s / sqrt(lambda_s), then two Cholesky-QR sweeps in W. The
    // triangular corrections keep every leading span unchanged.
    dec.modes = snapshots * vectors.leftCols(rank) *
                dec.eigenvalues.head(rank).cwiseSqrt().cwiseInverse().asDiagonal();
    for (int sweep = 0; sweep < 2; ++sweep) {
        const Eigen::MatrixXd gram = ip.gram(dec.modes, dec.modes);
        Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (gram + gram.transpose()));
        if (llt.info() != Eigen::Success)
            throw PodError("POD modes are numerically dependent");
        dec.modes = llt.matrixU().solve<Eigen::OnTheRight>(dec.modes);
    }
    return dec;
}

ReducedBasis make_basis(Variable variable, const SnapshotDecomposition& dec, Index n_modes, double ic,
                        const InnerProductSpace& ip)
{
    if (n_modes < 1 || n_modes > dec.modes.cols())
        throw PodError("requested " + std::to_string(n_modes) + " modes, " + std::to_string(dec.modes.cols()) +
                       " available");
    ReducedBasis b;
    b.variable = variable;
    b.inner_product = ip.mode();
    b.modes = dec.modes.leftCols(n_modes);
    b.weighted = ip.weight(b.modes);
    b.eigenvalues = dec.eigenvalues;
    b.ic = ic;
    b.retained_ratio = dec.eigenvalues.head(n_modes).sum() / dec.trace;
    return b;
}

ReducedBasis pod_stage1(const SnapshotSet& traj, double ic, const InnerProductSpace& ip)
{
    const auto dec = method_of_snapshots(traj.columns, ic, ip);
    return make_basis(traj.variable, dec, dec.n_pod, ic, ip);
}

ReducedBasis pod_stage2(const std::vector<ReducedBasis>& bases, double ic, const InnerProductSpace& ip, bool weighted,
                        Index exact_modes)
{
    if (bases.empty())
        throw PodError("stage-2 POD needs at least one stage-1 basis");
    Index total = 0;
    for (const auto& b : bases) {
        if (b.variable != bases.front().variable)
            throw PodError("stage-1 bases mix variables");
        if (b.dimension() != bases.front().dimension())
            throw PodError("stage-1 bases have different nodal dimensions");
        total += b.size();
    }
    Eigen::MatrixXd collected(bases.front().dimension(), total);
    Index col = 0;
    for (const auto& b : bases) {
        if (weighted)
            collected.middleCols(col, b.size()) =
                b.modes * b.eigenvalues.head(b.size()).cwiseSqrt().asDiagonal();
        else
            collected.middleCols(col, b.size()) = b.modes;
        col += b.size();
    }
    const auto dec = method_of_snapshots(collected, ic, ip);
    const Index n = std::min<Index>(exact_modes > 0 ? exact_modes : dec.n_pod, dec.modes.cols());
    return make_basis(bases.front().variable, dec, n, ic, ip);
}

namespace {

// The snapshots of this variable span fewer than `target` directions: extend
// with donor modes, W-orthogonalized against the basis (two Gram-Schmidt passes).
void pad_with_complement(ReducedBasis& basis, const std::vector<const Eigen::MatrixXd*>& donors, Index target,
                         const InnerProductSpace& ip)
{
    Eigen::MatrixXd modes = basis.modes;
    for (const auto* d : donors) {
        for (Index j = 0; j < d->cols() && modes.cols() < target; ++j) {
            Eigen::VectorXd x = d->col(j);
            const double norm0 = std::sqrt(ip.gram(x, x)(0, 0));
            for (int pass = 0; pass < 2; ++pass)
                x -= modes * ip.gram(modes, x);
            const double norm = std::sqrt(ip.gram(x, x)(0, 0));
            if (!(norm > 1e-8 * norm0))
                continue;
            modes.conservativeResize(Eigen::NoChange, modes.cols() + 1);
            modes.col(modes.cols() - 1) = x / norm;
        }
    }
    if (modes.cols() < target)
        throw PodError("variable " + to_string(basis.variable) + " cannot be extended to the shared N_POD " +
                       std::to_string(target));
    basis.modes = std::move(modes);
    basis.weighted = ip.weight(basis.modes);
}

} // namespace

PodBases two_stage_pod(const std::array<std::vector<SnapshotSet>, 3>& snapshots, const PodOptions& options,
                       const SparseMatrix& mass)
{
    const InnerProductSpace ip =
        options.inner_product == InnerProduct::Mass ? InnerProductSpace::mass(mass) : InnerProductSpace::euclidean();
    PodBases out;
    std::array<std::vector<ReducedBasis>, 3> stage1;
    for (std::size_t v = 0; v < 3; ++v) {
        if (snapshots[v].empty())
            throw PodError("no snapshot sets for variable " + to_string(static_cast<Variable>(v)));
        for (const auto& s : snapshots[v])
            stage1[v].push_back(pod_stage1(s, options.ic, ip));
        out.bases[v] = pod_stage2(stage1[v], options.ic, ip, options.weighted_stage2);
        out.natural_sizes[v] = out.bases[v].size();
        out.n_pod = std::max(out.n_pod, out.natural_sizes[v]);
    }
    for (std::size_t v = 0; v < 3; ++v) {
        if (out.bases[v].size() == out.n_pod)
            continue;
        out.bases[v] = pod_stage2(stage1[v], options.ic, ip, options.weighted_stage2, out.n_pod);
        if (out.bases[v].size() < out.n_pod) {
            std::vector<ReducedBasis> full;
            for (const auto& s : snapshots[v])
                full.push_back(pod_stage1(s, 1.0, ip));
            out.bases[v] = pod_stage2(full, options.ic, ip, options.weighted_stage2, out.n_pod);
        }
    }
    for (std::size_t v = 0; v < 3; ++v) {
        if (out.bases[v].size() >= out.n_pod)
            continue;
        std::vector<const Eigen::MatrixXd*> donors;
        for (std::size_t w = 0; w < 3; ++w)
            if (w != v)
                donors.push_back(&out.bases[w].modes);
        pad_with_complement(out.bases[v], donors, out.n_pod, ip);
    }
    return out;
}

Eigen::VectorXd project(const Eigen::VectorXd& field, const ReducedBasis& basis)
{
    if (field.size() != basis.dimension())
        throw PodError("field length " + std::to_string(field.size()) + " does not match basis dimension " +
                       std::to_string(basis.dimension()));
    return basis.weighted.transpose() * field;
}

Eigen::MatrixXd project(const Eigen::MatrixXd& fields, const ReducedBasis& basis)
{
    if (fields.rows() != basis.dimension())
        throw PodError("snapshot length does not match basis dimension");
    return basis.weighted.transpose() * fields;
}

NodalField reconstruct(const Eigen::VectorXd& coeffs, const ReducedBasis& basis)
{
    if (coeffs.size() != basis.size())
        throw PodError("coefficient vector has length " + std::to_string(coeffs.size()) + ", basis has " +
                       std::to_string(basis.size()) + " modes");
    return basis.modes * coeffs;
}

double captured_energy(const ReducedBasis& basis, const Eigen::MatrixXd& snapshots, const InnerProductSpace& ip)
{
    const double total = ip.gram(snapshots, snapshots).trace();
    return project(snapshots, basis).squaredNorm() / total;
}

void save_basis(const std::filesystem::path& dir, const ReducedBasis& basis)
{
    std::filesystem::create_directories(dir);
    std::ofstream meta(dir / "meta");
    if (!meta)
        throw PodError("cannot write basis archive in '" + dir.string() + "'");
    meta << std::setprecision(17);
    meta << "variable " << to_string(basis.variable) << '\n';
    meta << "n_pod " << basis.size() << '\n';
    meta << "dimension " << basis.dimension() << '\n';
    meta << "ic " << basis.ic << '\n';
    meta << "inner_product " << to_string(basis.inner_product) << '\n';
    meta << "retained_ratio " << basis.retained_ratio << '\n';
    meta << "eigenvalues " << basis.eigenvalues.size();
    for (Index i = 0; i < basis.eigenvalues.size(); ++i)
        meta << ' ' << basis.eigenvalues[i];
    meta << '\n';
    for (Index i = 0; i < basis.size(); ++i) {
        std::ostringstream name;
        name << "mode_" << std::setw(3) << std::setfill('0') << i << ".txt";
        save_nodal_field(dir / name.str(), to_string(basis.variable) + "_mode_" + std::to_string(i),
                         basis.modes.col(i));
    }
}

ReducedBasis load_basis(const std::filesystem::path& dir, const InnerProductSpace& ip)
{
    std::ifstream meta(dir / "meta");
    if (!meta)
        throw PodError("no basis archive in '" + dir.string() + "'");
    ReducedBasis b;
    Index n_pod = -1, dim = -1;
    std::string key;
    while (meta >> key) {
        if (key == "variable") {
            std::string v;
            meta >> v;
            b.variable = variable_from_string(v);
        } else if (key == "n_pod") {
            meta >> n_pod;
        } else if (key == "dimension") {
            meta >> dim;
        } else if (key == "ic") {
            meta >> b.ic;
        } else if (key == "inner_product") {
            std::string v;
            meta >> v;
            b.inner_product = inner_product_from_string(v);
        } else if (key == "retained_ratio") {
            meta >> b.retained_ratio;
        } else if (key == "eigenvalues") {
            Index n = 0;
            meta >> n;
            b.eigenvalues.resize(n);
            for (Index i = 0; i < n; ++i)
                meta >> b.eigenvalues[i];
        } else {
            throw PodError("unknown key '" + key + "' in basis meta");
        }
        if (!meta)
            throw PodError("malformed value for '" + key + "' in basis meta");
    }
    if (n_pod < 1 || dim < 1)
        throw PodError("basis meta lacks n_pod or dimension");
    if (b.inner_product != ip.mode())
        throw PodError("basis archive uses the " + to_string(b.inner_product) + " inner product, caller supplied " +
                       to_string(ip.mode()));
    b.modes.resize(dim, n_pod);
    for (Index i = 0; i < n_pod; ++i) {
        std::ostringstream name;
        name << "mode_" << std::setw(3) << std::setfill('0') << i << ".txt";
        const auto f = load_nodal_field(dir / name.str());
        if (f.values.size() != dim)
            throw PodError("mode " + std::to_string(i) + " has the wrong length");
        b.modes.col(i) = f.values;
    }
    b.weighted = ip.weight(b.modes);
    return b;
}

void save_coefficients_csv(const std::filesystem::path& path, const std::vector<double>& times,
                           const Eigen::MatrixXd& coeffs)
{
    if (static_cast<Index>(times.size()) != coeffs.cols())
        throw PodError("one time per coefficient column expected");
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    out << std::setprecision(17);
    out << "time";
    for (Index i = 0; i < coeffs.rows(); ++i)
        out << ",a_" << i + 1;
    out << '\n';
    for (Index j = 0; j < coeffs.cols(); ++j) {
        out << times[static_cast<std::size_t>(j)];
        for (Index i = 0; i < coeffs.rows(); ++i)
            out << ',' << coeffs(i, j);
        out << '\n';
    }
}

} // namespace gbl
