#pragma once

#include "gbl/lbfgs.hpp"
#include "gbl/mlp.hpp"
#include "gbl/normalization.hpp"
#include "gbl/pod.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gbl {

struct SurrogateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// x -> (x - shift) / scale, row-wise.
struct AffineScaling {
    Eigen::VectorXd shift;
    Eigen::VectorXd scale;

    static AffineScaling identity(Index n);
    /// Mean and standard deviation per row; rows with (near) zero spread keep scale 1.
    static AffineScaling fit(const Eigen::MatrixXd& x);
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
    Eigen::MatrixXd invert(const Eigen::MatrixXd& y) const;
};

/// FNV-1a over the basis dimensions and mode values.
std::uint64_t basis_fingerprint(const ReducedBasis& basis);
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);

enum class SurrogateKind { Direct, Inverse };
std::string to_string(SurrogateKind k);

/// A trained network plus everything needed to feed it and read it back.
struct Surrogate {
    SurrogateKind kind = SurrogateKind::Direct;
    Mlp net;
    AffineScaling input;
    AffineScaling output;
    NormalizationSpec spec = NormalizationSpec::biological();
    std::uint64_t fingerprint = 0; ///< of the phi basis the coefficients refer to
    Index n_pod = 0;
    double horizon = 0.0;          ///< direct: time normalization T
    int gap_steps = 0;             ///< inverse: steps between the two observations
    bool trained = false;
};

/// Per-parameter-set reduced phi trajectory; column j of `phi` is time j.
struct TrajectoryRecord {
    ParameterSet params;
    std::vector<double> times;
    Eigen::MatrixXd phi;
    std::vector<double> volumes;
};

/// Samples are columns. `groups[j]` is the parameter set that produced column j.
struct TrainingSet {
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd targets;
    std::vector<int> groups;
    std::vector<Index> train;
    std::vector<Index> test;

    Index rows() const { return inputs.cols(); }
};

/// Columns ([normalized params, t / horizon], a_phi(t)) for every record and time.
TrainingSet build_direct_dataset(const std::vector<TrajectoryRecord>& records, const NormalizationSpec& spec,
                                 double horizon);

struct InversePairOptions {
    int gap_steps = 40;
    int pairs_per_trajectory = 1;
    bool fixed_start = false;   ///< always use t0 = 0
    std::uint64_t seed = 0;
};

/// Columns ([a_phi(t0); a_phi(t0 + gap)], normalized params). Start times are
/// drawn without replacement from the admissible ones.
TrainingSet build_inverse_dataset(const std::vector<TrajectoryRecord>& records, const NormalizationSpec& spec,
                                  const InversePairOptions& options);

/// Holds out `n_test_groups` whole parameter sets, chosen by seed.
void split_by_group(TrainingSet& set, int n_test_groups, std::uint64_t seed);

struct EpochLoss {
    int epoch = 0;
    double train_mse = 0.0;
    double test_mse = 0.0;
};

struct TrainOptions {
    std::vector<Index> hidden{64, 64, 64};
    double slope = 0.01;
    int epochs = 500;
    int history = 10;
    std::uint64_t seed = 0;
};

struct TrainResult {
    Surrogate surrogate;
    std::vector<EpochLoss> curve;
    int fallbacks = 0;
};

/// Full-batch L-BFGS, one iteration per epoch. Losses are in scaled target units.
TrainResult train_direct(const TrainingSet& set, const NormalizationSpec& spec, double horizon,
                         const ReducedBasis& phi_basis, const TrainOptions& options);
TrainResult train_inverse(const TrainingSet& set, const NormalizationSpec& spec, int gap_steps,
                          const ReducedBasis& phi_basis, const TrainOptions& options);

/// Reduced coefficients for each requested time (one column per time).
Eigen::MatrixXd predict_direct_coefficients(const Surrogate& s, const ParameterSet& params,
                                            const std::vector<double>& times, bool strict = true);
NodalField predict_direct(const Surrogate& s, const ParameterSet& params, double t, const ReducedBasis& phi_basis,
                          bool strict = true);

struct EstimateResult {
    ParameterSet params;
    Eigen::VectorXd raw;        ///< network output in normalized units
    Eigen::VectorXd normalized; ///< raw clipped to [0, 1]
    bool clipped = false;
};

EstimateResult estimate_parameters(const Surrogate& s, const NodalField& phi_t0, const NodalField& phi_t1,
                                   const ReducedBasis& phi_basis);

void save_surrogate(const std::filesystem::path& path, const Surrogate& s);
Surrogate load_surrogate(const std::filesystem::path& path);

void save_loss_csv(const std::filesystem::path& path, const std::vector<EpochLoss>& curve);

} // namespace gbl
