#pragma once

#include "gbl/fom.hpp"
#include "gbl/mesh.hpp"
#include "gbl/normalization.hpp"
#include "gbl/pod.hpp"
#include "gbl/surrogate.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gbl {

enum class ErrorKind { Config, MissingInput, Numerical, Io, Internal };

/// Error carrying the category the CLI maps to an exit code.
struct PipelineError : std::runtime_error {
    PipelineError(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind(kind) {}
    ErrorKind kind;
};

std::string to_string(ErrorKind k);
int exit_code(ErrorKind k);

/// Everything one experiment needs; parsed from a single JSON document.
/// Relative paths resolve against the config file's directory.
struct RunConfig {
    std::filesystem::path config_path;
    std::string config_hash;        ///< FNV-1a of the config file bytes, hex
    std::filesystem::path out_dir;
    std::uint64_t seed = 1;
    bool strict_ranges = false;

    // Geometry. Files take precedence over the generated box.
    std::optional<std::filesystem::path> mesh_file, motility_file, diffusivity_file, phi0_file, nhat0_file;
    std::array<int, 3> cells{8, 8, 8};
    Eigen::Vector3d extent{16.0, 16.0, 16.0};
    Eigen::Vector3d origin{0.0, 0.0, 0.0};
    double motility = 30.0;
    double diffusivity = 1e6;
    Eigen::Vector3d bump_center{0.0, 0.0, 0.0};
    double bump_sharpness = 2.4e-4;
    double bump_amplitude = 2.0;
    double bump_offset = -1.0;
    double nhat0 = 1.0;

    SimulationConfig simulation;
    bool auto_epsilon = true;
    int workers = 1;                ///< concurrent FOM runs; 0 = hardware threads

    ParameterSet patient = reference_patient();

    int n_sets = 40;                ///< sampled parameter sets
    int n_test_sets = 10;           ///< held out from training
    int n_pod_sets = 8;             ///< first sets used for the POD
    NormalizationSpec spec = NormalizationSpec::biological();
    PodOptions pod;

    TrainOptions direct;
    TrainOptions inverse;
    double gap_days = 20.0;
    int pairs_per_trajectory = 20;

    std::optional<ParameterSet> predict_params;
    std::vector<double> predict_times;
    std::optional<std::filesystem::path> observation_t0, observation_t1;

    double horizon() const { return simulation.dt * simulation.n_steps; }
    int gap_steps() const;
    /// Stage seed derived from the root seed and a stage name.
    std::uint64_t stage_seed(const std::string& stage) const;
    void validate() const;
};

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out_dir;
    bool strict_ranges = false;
};

RunConfig load_run_config(const std::filesystem::path& path, const CliOverrides& overrides = {});
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                           const CliOverrides& overrides = {});

/// Mesh, tensors, operators and initial condition of one experiment.
struct Problem {
    Mesh mesh;
    TensorField motility;
    TensorField diffusivity;
    OperatorBundle ops;
    NodalField phi0;
    NodalField nhat0;
    SimulationConfig simulation; ///< with epsilon resolved
};

Problem build_problem(const RunConfig& cfg);

/// FOM runs for every sampled set; column j of each matrix is step j.
struct SimulationData {
    ParameterSet params;
    bool ok = false;
    std::string failure;
    Eigen::MatrixXd phi, mu, nhat;
    std::vector<double> times;
    std::vector<double> volumes;
};

struct Dataset {
    std::vector<SimulationData> runs;
    std::vector<int> usable() const;
};

/// Runs `sets` through the FOM with at most `workers` threads; results keep input order.
std::vector<SimulationData> simulate_many(const Problem& problem, const std::vector<ParameterSet>& sets, int workers);

/// Loads out/dataset when its key matches the config, otherwise simulates and stores it.
Dataset load_or_build_dataset(const RunConfig& cfg, const Problem& problem);

/// Reduced phi trajectories for the usable runs.
std::vector<TrajectoryRecord> project_dataset(const Dataset& data, const std::vector<int>& ids,
                                              const ReducedBasis& phi_basis);

/// Group split shared by both networks, over the usable runs.
struct SetSplit {
    std::vector<int> train;
    std::vector<int> test;
};
SetSplit split_sets(const RunConfig& cfg, const Dataset& data);

/// Column-stacked snapshots of one variable over the POD parameter sets.
Eigen::MatrixXd pod_snapshot_matrix(const RunConfig& cfg, const Dataset& data, Variable v);

/// Training sets exactly as the train commands build them, split by parameter set.
TrainingSet make_direct_set(const RunConfig& cfg, const Dataset& data, const ReducedBasis& phi_basis);
TrainingSet make_inverse_set(const RunConfig& cfg, const Dataset& data, const ReducedBasis& phi_basis);

PodBases build_bases(const RunConfig& cfg, const Problem& problem, const Dataset& data);
void save_bases(const std::filesystem::path& dir, const PodBases& bases);
PodBases load_bases(const std::filesystem::path& dir, const OperatorBundle& ops, InnerProduct mode);

void write_diagnostics_csv(const std::filesystem::path& path, const std::vector<EnergyReport>& reports);

/// Output of a command: files written plus values echoed to stdout.
struct CommandResult {
    std::filesystem::path out_dir;
    std::vector<std::string> lines;
    std::vector<std::filesystem::path> inputs; ///< hashed into the manifest
};

CommandResult cmd_generate_mesh(const RunConfig& cfg);
CommandResult cmd_simulate(const RunConfig& cfg);
CommandResult cmd_build_pod(const RunConfig& cfg);
CommandResult cmd_train_direct(const RunConfig& cfg);
CommandResult cmd_predict(const RunConfig& cfg);
CommandResult cmd_train_inverse(const RunConfig& cfg);
CommandResult cmd_estimate(const RunConfig& cfg);
CommandResult cmd_reproduce(const RunConfig& cfg);

/// Runs a command by name and writes its manifest.
CommandResult run_command(const std::string& name, const RunConfig& cfg, const std::vector<std::string>& argv);

/// One deterministic acceptance metric emitted by reproduce.
struct Metric {
    std::string name;
    double value = 0.0;
    std::string comparison; ///< "<=", ">=" or "info" (reported, not checked)
    double threshold = 0.0;
    bool pass() const;
};

/// Prior-stage artifact or a PipelineError(MissingInput) naming the command that makes it.
std::filesystem::path require_artifact(const std::filesystem::path& path, const std::string& producer);

std::string hash_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

extern const char* const version_string;

} // namespace gbl
