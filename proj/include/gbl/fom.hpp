#pragma once

#include "gbl/assembly.hpp"
#include "gbl/parameters.hpp"

#include <Eigen/SparseLU>
#include <Eigen/IterativeLinearSolvers>

#include <memory>
#include <vector>

namespace gbl {

struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Newton failed to reach `newton_tol`; carries the last residual norm.
struct NewtonError : SolverError {
    NewtonError(const std::string& what, double residual) : SolverError(what), residual(residual) {}
    double residual;
};

struct SimulationConfig {
    double dt = 0.5;            ///< days
    int n_steps = 60;
    double epsilon = 1.0;       ///< interface parameter, fixed a priori
    double newton_tol = 1e-9;   ///< on the scaled Euclidean residual norm
    int newton_max_iter = 30;
    double linear_tol = 1e-10;  ///< relative residual of the iterative solves

    void validate() const;
};

/// Epsilon giving a phi = -0.9..0.9 interface transition of three cells for
/// the Young modulus kappa_ref.
double default_epsilon(double cell_size, double kappa_ref);

struct State {
    NodalField phi;
    NodalField mu;
    NodalField nhat;
    double time = 0.0;
};

struct EnergyReport {
    double time = 0.0;
    double free_energy = 0.0;
    double total_mass = 0.0;   ///< integral of phi
    double tumor_volume = 0.0; ///< integral of (1 + phi) / 2, mm^3
};

/// Per-step solver statistics.
struct StepInfo {
    std::vector<double> newton_residuals; ///< scaled residual norm before each update and at exit
    int nutrient_iterations = 0;
};

/// Discrete free energy
///   kappa * sum_i m_i Psi_c(phi_i) - kappa/2 phi^T M phi + eps^2/2 phi^T K phi,
/// i.e. the convex part integrated with the vertex rule and the quadratic parts
/// exactly, matching the quadrature of the time-stepping scheme.
double free_energy(const NodalField& phi, double kappa, double epsilon, const OperatorBundle& ops);
double total_mass(const NodalField& phi, const OperatorBundle& ops);
double tumor_volume(const NodalField& phi, const OperatorBundle& ops);
EnergyReport diagnose(const State& state, const ParameterSet& params, const SimulationConfig& config,
                      const OperatorBundle& ops);

/// Builds a state from phi0 and nhat0 with the chemical potential consistent
/// with phi0 (the mu-equation solved with phi^{j+1} = phi^j = phi0).
State initial_state(const NodalField& phi0, const NodalField& nhat0, const ParameterSet& params,
                    const SimulationConfig& config, const OperatorBundle& ops);

/// Semi-implicit stepper. Holds the factorization pattern of the (phi, mu)
/// Newton block so consecutive steps reuse the symbolic analysis.
class FomStepper {
public:
    FomStepper(const OperatorBundle& ops, const ParameterSet& params, const SimulationConfig& config);

    /// One time step: linear nutrient solve, then Newton on the (phi, mu) block.
    State step(const State& state, StepInfo* info = nullptr);

    /// Nutrient update for a given previous phi and nhat.
    NodalField solve_nutrient(const NodalField& phi_prev, const NodalField& nhat_prev, int* iterations = nullptr) const;

    const ParameterSet& params() const { return params_; }
    const SimulationConfig& config() const { return config_; }

private:
    const OperatorBundle& ops_;
    ParameterSet params_;
    SimulationConfig config_;
    double mean_mass_;
    SparseMatrix jacobian_;
    std::vector<Index> coupling_diag_;     ///< value offsets of the (mu-row, phi-col) diagonal
    Eigen::VectorXd coupling_diag_base_;   ///< -eps^2 K_ii
    Eigen::SparseLU<SparseMatrix> lu_;
};

State step(const State& state, const ParameterSet& params, const SimulationConfig& config,
           const OperatorBundle& ops, StepInfo* info = nullptr);

struct Trajectory {
    std::vector<State> states;          ///< every `record_every` steps, plus the last
    std::vector<EnergyReport> reports;  ///< every step, including step 0
    std::vector<int> newton_iterations; ///< per step
};

Trajectory run(const State& initial, const ParameterSet& params, const SimulationConfig& config,
               const OperatorBundle& ops, int record_every = 1);

} // namespace gbl
