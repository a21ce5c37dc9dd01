#pragma once

#include "gbl/assembly.hpp"
#include "gbl/fom.hpp"

#include <Eigen/Dense>

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace gbl {

struct PodError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Variable { Phi, Mu, Nhat };
enum class InnerProduct { Euclidean, Mass };

std::string to_string(Variable v);
Variable variable_from_string(const std::string& s);
std::string to_string(InnerProduct ip);
InnerProduct inner_product_from_string(const std::string& s);

/// Applies the weight W of the declared inner product <f, g> = f^T W g.
class InnerProductSpace {
public:
    InnerProductSpace() = default;
    static InnerProductSpace euclidean() { return {}; }
    static InnerProductSpace mass(const SparseMatrix& m) { return InnerProductSpace(&m); }

    InnerProduct mode() const { return mass_ ? InnerProduct::Mass : InnerProduct::Euclidean; }
    Eigen::MatrixXd weight(const Eigen::MatrixXd& x) const { return mass_ ? Eigen::MatrixXd(*mass_ * x) : x; }
    Eigen::MatrixXd gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const { return a.transpose() * weight(b); }

private:
    explicit InnerProductSpace(const SparseMatrix* m) : mass_(m) {}
    const SparseMatrix* mass_ = nullptr;
};

/// Snapshots [f^0, ..., f^N] of one variable for one parameter set.
struct SnapshotSet {
    Variable variable = Variable::Phi;
    int parameter_id = 0;
    Eigen::MatrixXd columns;
};

SnapshotSet snapshot_set(const Trajectory& traj, Variable variable, int parameter_id);

/// Orthonormal POD modes (columns) plus the spectrum they came from.
/// `weighted` caches W * modes so projection needs no access to W.
struct ReducedBasis {
    Variable variable = Variable::Phi;
    InnerProduct inner_product = InnerProduct::Mass;
    Eigen::MatrixXd modes;
    Eigen::MatrixXd weighted;
    Eigen::VectorXd eigenvalues;   ///< full spectrum of the last correlation matrix, descending
    double ic = 1.0;
    double retained_ratio = 1.0;   ///< sum of kept eigenvalues over the trace

    Index size() const { return modes.cols(); }
    Index dimension() const { return modes.rows(); }
};

/// Eigen-decomposition of the correlation matrix F^T W F.
struct SnapshotDecomposition {
    Eigen::VectorXd eigenvalues;   ///< descending, tiny negative round-off clamped to 0
    Eigen::MatrixXd modes;         ///< all numerically nonzero modes, W-orthonormal
    Index n_pod = 0;               ///< smallest m with sum_{i<=m} lambda_i / trace >= ic
    double trace = 0.0;
    double retained_ratio = 0.0;   ///< for the first n_pod modes
};

/// Method of snapshots. Throws PodError for an all-zero matrix, ic outside
/// (0, 1] or eigenvalues below -1e-12 * trace.
SnapshotDecomposition method_of_snapshots(const Eigen::MatrixXd& snapshots, double ic,
                                          const InnerProductSpace& ip);

ReducedBasis make_basis(Variable variable, const SnapshotDecomposition& dec, Index n_modes, double ic,
                        const InnerProductSpace& ip);

/// Per-parameter-set basis truncated at `ic`.
ReducedBasis pod_stage1(const SnapshotSet& traj, double ic, const InnerProductSpace& ip);

/// Second POD over the collected stage-1 modes. With `weighted`, each stage-1
/// mode enters scaled by its singular value sqrt(lambda). A positive
/// `exact_modes` replaces the ic truncation by that count (capped at the rank).
ReducedBasis pod_stage2(const std::vector<ReducedBasis>& bases, double ic, const InnerProductSpace& ip,
                        bool weighted = false, Index exact_modes = 0);

struct PodOptions {
    double ic = 0.95;
    InnerProduct inner_product = InnerProduct::Mass;
    bool weighted_stage2 = false;
};

/// Final bases for (phi, mu, nhat) sharing N_POD = max over variables.
struct PodBases {
    std::array<ReducedBasis, 3> bases;
    std::array<Index, 3> natural_sizes{}; ///< per-variable N_POD before padding
    Index n_pod = 0;

    const ReducedBasis& operator[](Variable v) const { return bases[static_cast<std::size_t>(v)]; }
    ReducedBasis& operator[](Variable v) { return bases[static_cast<std::size_t>(v)]; }
};

/// Two-stage POD. `snapshots[v]` holds one SnapshotSet per parameter set.
/// Shorter bases are padded with their own next stage-2 modes; when a
/// variable's stage-2 collection has too small a rank, its stage-1 bases are
/// rebuilt at ic = 1 first. A variable whose snapshots still span fewer
/// directions is completed with the other variables' modes, orthogonalized
/// against its own.
PodBases two_stage_pod(const std::array<std::vector<SnapshotSet>, 3>& snapshots, const PodOptions& options,
                       const SparseMatrix& mass);

/// a_i = <f, xi_i>.
Eigen::VectorXd project(const Eigen::VectorXd& field, const ReducedBasis& basis);
/// Column-wise projection of a snapshot matrix.
Eigen::MatrixXd project(const Eigen::MatrixXd& fields, const ReducedBasis& basis);
/// sum_i a_i xi_i.
NodalField reconstruct(const Eigen::VectorXd& coeffs, const ReducedBasis& basis);

/// Fraction of the snapshots' energy inside span(basis):
/// sum_j |P f_j|^2 / sum_j |f_j|^2 in the basis' inner product.
double captured_energy(const ReducedBasis& basis, const Eigen::MatrixXd& snapshots, const InnerProductSpace& ip);

/// Basis archive: `meta` text file plus one nodal-field file per mode.
void save_basis(const std::filesystem::path& dir, const ReducedBasis& basis);
ReducedBasis load_basis(const std::filesystem::path& dir, const InnerProductSpace& ip);

/// CSV `time,a_1,...,a_N`; `coeffs` has one column per time.
void save_coefficients_csv(const std::filesystem::path& path, const std::vector<double>& times,
                           const Eigen::MatrixXd& coeffs);

} // namespace gbl
