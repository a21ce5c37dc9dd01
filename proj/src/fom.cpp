#include "gbl/fom.hpp"
#include "gbl/potential.hpp"

#include <cmath>
#include <sstream>

namespace gbl {

void SimulationConfig::validate() const
{
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw SolverError("dt must be positive");
    if (n_steps < 0)
        throw SolverError("n_steps must be >= 0");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
        throw SolverError("epsilon must be positive");
    if (!(newton_tol > 0.0 && newton_tol < 1.0))
        throw SolverError("newton_tol must lie in (0, 1)");
    if (!(linear_tol > 0.0 && linear_tol < 1.0))
        throw SolverError("linear_tol must lie in (0, 1)");
    if (newton_max_iter < 1)
        throw SolverError("newton_max_iter must be >= 1");
}

double default_epsilon(double cell_size, double kappa_ref)
{
    // The planar profile is tanh(x / (sqrt(2) eps / sqrt(kappa))); its -0.9..0.9
    // transition spans 2 sqrt(2) atanh(0.9) eps / sqrt(kappa).
    const double width_factor = 2.0 * std::sqrt(2.0) * std::atanh(0.9);
    return 3.0 * cell_size * std::sqrt(kappa_ref) / width_factor;
}

double free_energy(const NodalField& phi, double kappa, double epsilon, const OperatorBundle& ops)
{
    const double convex = ops.lumped.dot(phi.unaryExpr([](double x) { return psi_c(x); }));
    const double concave = -0.5 * phi.dot(ops.mass * phi);
    const double gradient = 0.5 * epsilon * epsilon * phi.dot(ops.stiffness * phi);
    return kappa * (convex + concave) + gradient;
}

double total_mass(const NodalField& phi, const OperatorBundle& ops)
{
    return ops.lumped.dot(phi);
}

double tumor_volume(const NodalField& phi, const OperatorBundle& ops)
{
    return 0.5 * (ops.volume + ops.lumped.dot(phi));
}

EnergyReport diagnose(const State& state, const ParameterSet& params, const SimulationConfig& config,
                      const OperatorBundle& ops)
{
    return {state.time, free_energy(state.phi, params.kappa, config.epsilon, ops), total_mass(state.phi, ops),
            tumor_volume(state.phi, ops)};
}

State initial_state(const NodalField& phi0, const NodalField& nhat0, const ParameterSet& params,
                    const SimulationConfig& config, const OperatorBundle& ops)
{
    if (phi0.size() != ops.size() || nhat0.size() != ops.size())
        throw SolverError("initial fields do not match the mesh");
    const double eps2 = config.epsilon * config.epsilon;
    const Eigen::VectorXd rhs = eps2 * (ops.stiffness * phi0) +
                                params.kappa * ops.lumped.cwiseProduct(phi0.unaryExpr([](double x) { return psi_c_prime(x); })) -
                                params.kappa * (ops.mass * phi0);
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg(ops.mass);
    cg.setTolerance(config.linear_tol);
    State s;
    s.phi = phi0;
    s.mu = cg.solve(rhs);
    if (cg.info() != Eigen::Success)
        throw SolverError("mass-matrix solve for the initial chemical potential failed");
    s.nhat = nhat0;
    s.time = 0.0;
    return s;
}

FomStepper::FomStepper(const OperatorBundle& ops, const ParameterSet& params, const SimulationConfig& config)
    : ops_(ops), params_(params), config_(config)
{
    validate(params_);
    config_.validate();
    const Index n = ops_.size();
    mean_mass_ = ops_.volume / double(n);

    // Jacobian of the (phi, mu) block:
    //   [ M                      dt/M0 K_T ]
    //   [ -eps^2 K - 3k diag(m phi^2)   M  ]
    const double eps2 = config_.epsilon * config_.epsilon;
    const double flux = config_.dt / params_.m0;
    std::vector<Eigen::Triplet<double>> triplets;
    auto add_block = [&](const SparseMatrix& a, double scale, Index row0, Index col0) {
        for (Index k = 0; k < a.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(a, k); it; ++it)
                triplets.emplace_back(row0 + it.row(), col0 + it.col(), scale * it.value());
    };
    add_block(ops_.mass, 1.0, 0, 0);
    add_block(ops_.stiffness_t, flux, 0, n);
    add_block(ops_.stiffness, -eps2, n, 0);
    add_block(ops_.mass, 1.0, n, n);
    // Structural zeros keep the diagonal of the coupling block present even for
    // a degenerate stiffness.
    for (Index i = 0; i < n; ++i)
        triplets.emplace_back(n + i, i, 0.0);
    jacobian_.resize(2 * n, 2 * n);
    jacobian_.setFromTriplets(triplets.begin(), triplets.end());
    jacobian_.makeCompressed();

    coupling_diag_.resize(static_cast<std::size_t>(n));
    coupling_diag_base_.resize(n);
    for (Index col = 0; col < n; ++col) {
        const auto* outer = jacobian_.outerIndexPtr();
        const auto* inner = jacobian_.innerIndexPtr();
        for (Index k = outer[col]; k < outer[col + 1]; ++k)
            if (inner[k] == n + col) {
                coupling_diag_[static_cast<std::size_t>(col)] = k;
                coupling_diag_base_[col] = jacobian_.valuePtr()[k];
            }
    }
    lu_.analyzePattern(jacobian_);
}

NodalField FomStepper::solve_nutrient(const NodalField& phi_prev, const NodalField& nhat_prev, int* iterations) const
{
    const Index n = ops_.size();
    Eigen::VectorXd supply(n), uptake(n);
    for (Index i = 0; i < n; ++i) {
        supply[i] = params_.s_n * (2.0 - phi_prev[i]) / 3.0;
        uptake[i] = params_.delta_n * h(phi_prev[i]);
    }
    const double inv_dt = 1.0 / config_.dt;
    SparseMatrix a = inv_dt * ops_.mass + ops_.stiffness_d;
    Eigen::VectorXd diag = ops_.lumped.cwiseProduct(supply + uptake);
    for (Index i = 0; i < n; ++i)
        a.coeffRef(i, i) += diag[i];
    const Eigen::VectorXd rhs = inv_dt * (ops_.mass * nhat_prev) + ops_.lumped.cwiseProduct(supply);

    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg(a);
    cg.setTolerance(config_.linear_tol);
    cg.setMaxIterations(10 * n);
    NodalField nhat = cg.solveWithGuess(rhs, nhat_prev);
    if (cg.info() != Eigen::Success)
        throw SolverError("nutrient solve did not converge (relative residual " + std::to_string(cg.error()) + ")");
    if (iterations)
        *iterations = static_cast<int>(cg.iterations());
    return nhat;
}

State FomStepper::step(const State& state, StepInfo* info)
{
    const Index n = ops_.size();
    if (state.phi.size() != n || state.mu.size() != n || state.nhat.size() != n)
        throw SolverError("state does not match the operators");

    State next;
    next.time = state.time + config_.dt;
    int nutrient_iterations = 0;
    next.nhat = solve_nutrient(state.phi, state.nhat, &nutrient_iterations);

    const double kappa = params_.kappa;
    const double eps2 = config_.epsilon * config_.epsilon;
    const double flux = config_.dt / params_.m0;

    // Explicit parts: old mass, source and the concave potential term.
    Eigen::VectorXd source(n);
    for (Index i = 0; i < n; ++i)
        source[i] = ops_.lumped[i] * (next.nhat[i] - params_.delta) * h(state.phi[i]);
    const Eigen::VectorXd rhs_phi = ops_.mass * state.phi + config_.dt * params_.nu * source;
    const Eigen::VectorXd rhs_mu = -kappa * (ops_.mass * state.phi);

    // Residuals are scaled to nodal units: phi-rows by the mean vertex mass,
    // mu-rows additionally by kappa.
    const double scale_phi = 1.0 / mean_mass_;
    const double scale_mu = 1.0 / (kappa * mean_mass_);
    auto residual = [&](const Eigen::VectorXd& phi, const Eigen::VectorXd& mu, Eigen::VectorXd& r) {
        r.resize(2 * n);
        r.head(n) = ops_.mass * phi + flux * (ops_.stiffness_t * mu) - rhs_phi;
        r.tail(n) = ops_.mass * mu - eps2 * (ops_.stiffness * phi) -
                    kappa * ops_.lumped.cwiseProduct(phi.unaryExpr([](double x) { return psi_c_prime(x); })) - rhs_mu;
        return std::sqrt(scale_phi * scale_phi * r.head(n).squaredNorm() + scale_mu * scale_mu * r.tail(n).squaredNorm());
    };

    Eigen::VectorXd phi = state.phi, mu = state.mu, r;
    double norm = residual(phi, mu, r);
    std::vector<double> history{norm};
    int iter = 0;
    while (norm >= config_.newton_tol) {
        if (iter == config_.newton_max_iter) {
            std::ostringstream os;
            os << "Newton did not converge in " << iter << " iterations at t=" << next.time << " (residual " << norm
               << ")";
            throw NewtonError(os.str(), norm);
        }
        for (Index i = 0; i < n; ++i)
            jacobian_.valuePtr()[coupling_diag_[static_cast<std::size_t>(i)]] =
                coupling_diag_base_[i] - 3.0 * kappa * ops_.lumped[i] * phi[i] * phi[i];
        lu_.factorize(jacobian_);
        if (lu_.info() != Eigen::Success)
            throw SolverError("factorization of the Newton system failed: " + lu_.lastErrorMessage());
        const Eigen::VectorXd delta = lu_.solve(-r);

        // Damped update: halve until the residual decreases.
        double alpha = 1.0;
        Eigen::VectorXd trial_phi, trial_mu, trial_r;
        double trial_norm = norm;
        for (int k = 0; k < 20; ++k) {
            trial_phi = phi + alpha * delta.head(n);
            trial_mu = mu + alpha * delta.tail(n);
            trial_norm = residual(trial_phi, trial_mu, trial_r);
            if (trial_norm < norm || !std::isfinite(trial_norm))
                break;
            alpha *= 0.5;
        }
        if (!std::isfinite(trial_norm))
            throw NewtonError("Newton produced a non-finite residual", norm);
        phi = std::move(trial_phi);
        mu = std::move(trial_mu);
        r = std::move(trial_r);
        norm = trial_norm;
        history.push_back(norm);
        ++iter;
    }
    next.phi = std::move(phi);
    next.mu = std::move(mu);
    if (info) {
        info->newton_residuals = std::move(history);
        info->nutrient_iterations = nutrient_iterations;
    }
    return next;
}

State step(const State& state, const ParameterSet& params, const SimulationConfig& config,
           const OperatorBundle& ops, StepInfo* info)
{
    FomStepper stepper(ops, params, config);
    return stepper.step(state, info);
}

Trajectory run(const State& initial, const ParameterSet& params, const SimulationConfig& config,
               const OperatorBundle& ops, int record_every)
{
    if (record_every < 1)
        throw SolverError("record_every must be >= 1");
    FomStepper stepper(ops, params, config);
    Trajectory traj;
    traj.states.push_back(initial);
    traj.reports.push_back(diagnose(initial, params, config, ops));
    State current = initial;
    StepInfo info;
    for (int j = 1; j <= config.n_steps; ++j) {
        current = stepper.step(current, &info);
        traj.newton_iterations.push_back(static_cast<int>(info.newton_residuals.size()) - 1);
        traj.reports.push_back(diagnose(current, params, config, ops));
        if (j % record_every == 0 || j == config.n_steps)
            traj.states.push_back(current);
    }
    return traj;
}

} // namespace gbl
