#pragma once

#include "gbl/pod.hpp"

namespace gbl {

/// Reduced coefficients at each step; column j belongs to times[j].
struct ReducedTrajectory {
    std::vector<double> times;
    Eigen::MatrixXd phi;
    Eigen::MatrixXd mu;
    Eigen::MatrixXd nhat;
    std::vector<int> newton_iterations;
};

/// Intrusive POD-Galerkin counterpart of the full-order scheme. Each equation
/// is tested with the basis of its own variable. Nonlinear terms are evaluated
/// on the lifted full-order fields at every Newton iteration, so the cost per
/// iteration still scales with the mesh size.
class GalerkinStepper {
public:
    GalerkinStepper(const PodBases& bases, const OperatorBundle& ops, const ParameterSet& params,
                    const SimulationConfig& config);

    /// Advances (a_phi, a_mu, a_nhat) by one step in place.
    void step(Eigen::VectorXd& a_phi, Eigen::VectorXd& a_mu, Eigen::VectorXd& a_nhat, int* newton_iterations = nullptr) const;

private:
    const PodBases& bases_;
    const OperatorBundle& ops_;
    ParameterSet params_;
    SimulationConfig config_;
    double mean_mass_;
    Eigen::MatrixXd mass_pp_, mass_mm_, mass_mp_, mass_nn_;
    Eigen::MatrixXd flux_pm_;      ///< Xi_phi^T K_T Xi_mu
    Eigen::MatrixXd laplace_mp_;   ///< Xi_mu^T K Xi_phi
    Eigen::MatrixXd diffusion_nn_; ///< Xi_n^T K_D Xi_n
};

ReducedTrajectory pod_galerkin_run(const State& initial, const ParameterSet& params, const SimulationConfig& config,
                                   const PodBases& bases, const OperatorBundle& ops);

} // namespace gbl
