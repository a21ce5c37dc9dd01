#include "gbl/galerkin.hpp"
#include "gbl/potential.hpp"

#include <cmath>
#include <sstream>

namespace gbl {

GalerkinStepper::GalerkinStepper(const PodBases& bases, const OperatorBundle& ops, const ParameterSet& params,
                                 const SimulationConfig& config)
    : bases_(bases), ops_(ops), params_(params), config_(config)
{
    validate(params_);
    config_.validate();
    const auto& xp = bases_[Variable::Phi].modes;
    const auto& xm = bases_[Variable::Mu].modes;
    const auto& xn = bases_[Variable::Nhat].modes;
    if (xp.rows() != ops_.size() || xm.rows() != ops_.size() || xn.rows() != ops_.size())
        throw PodError("basis dimension does not match the operators");
    if (xp.cols() != xm.cols() || xp.cols() != xn.cols())
        throw PodError("Galerkin solver needs bases of equal size");
    mean_mass_ = ops_.volume / double(ops_.size());
    mass_pp_ = xp.transpose() * (ops_.mass * xp);
    mass_mm_ = xm.transpose() * (ops_.mass * xm);
    mass_mp_ = xm.transpose() * (ops_.mass * xp);
    mass_nn_ = xn.transpose() * (ops_.mass * xn);
    flux_pm_ = xp.transpose() * (ops_.stiffness_t * xm);
    laplace_mp_ = xm.transpose() * (ops_.stiffness * xp);
    diffusion_nn_ = xn.transpose() * (ops_.stiffness_d * xn);
}

void GalerkinStepper::step(Eigen::VectorXd& a_phi, Eigen::VectorXd& a_mu, Eigen::VectorXd& a_nhat,
                           int* newton_iterations) const
{
    const auto& xp = bases_[Variable::Phi].modes;
    const auto& xm = bases_[Variable::Mu].modes;
    const auto& xn = bases_[Variable::Nhat].modes;
    const Index n = ops_.size();
    const Index r = xp.cols();
    const double dt = config_.dt;
    const double kappa = params_.kappa;

    // Nutrient: linear, coefficients from the lifted previous phi.
    const Eigen::VectorXd phi_prev = xp * a_phi;
    Eigen::VectorXd supply(n), reaction(n);
    for (Index i = 0; i < n; ++i) {
        supply[i] = ops_.lumped[i] * params_.s_n * (2.0 - phi_prev[i]) / 3.0;
        reaction[i] = supply[i] + ops_.lumped[i] * params_.delta_n * h(phi_prev[i]);
    }
    const Eigen::MatrixXd a_n = mass_nn_ / dt + diffusion_nn_ + xn.transpose() * reaction.asDiagonal() * xn;
    const Eigen::VectorXd b_n = mass_nn_ * a_nhat / dt + xn.transpose() * supply;
    a_nhat = a_n.ldlt().solve(b_n);
    const Eigen::VectorXd nhat = xn * a_nhat;

    Eigen::VectorXd source(n);
    for (Index i = 0; i < n; ++i)
        source[i] = ops_.lumped[i] * (nhat[i] - params_.delta) * h(phi_prev[i]);
    const Eigen::VectorXd rhs_phi = mass_pp_ * a_phi + dt * params_.nu * (xp.transpose() * source);
    const Eigen::VectorXd rhs_mu = -kappa * (mass_mp_ * a_phi);
    const double flux = dt / params_.m0;
    const double eps2 = config_.epsilon * config_.epsilon;
    const double scale_phi = 1.0 / mean_mass_;
    const double scale_mu = 1.0 / (kappa * mean_mass_);

    auto residual = [&](const Eigen::VectorXd& ap, const Eigen::VectorXd& am, Eigen::VectorXd& res) {
        const Eigen::VectorXd phi = xp * ap;
        const Eigen::VectorXd cubic = ops_.lumped.cwiseProduct(phi.unaryExpr([](double x) { return psi_c_prime(x); }));
        res.resize(2 * r);
        res.head(r) = mass_pp_ * ap + flux * (flux_pm_ * am) - rhs_phi;
        res.tail(r) = mass_mm_ * am - eps2 * (laplace_mp_ * ap) - kappa * (xm.transpose() * cubic) - rhs_mu;
        return std::sqrt(scale_phi * scale_phi * res.head(r).squaredNorm() +
                         scale_mu * scale_mu * res.tail(r).squaredNorm());
    };

    Eigen::VectorXd ap = a_phi, am = a_mu, res;
    double norm = residual(ap, am, res);
    int iter = 0;
    Eigen::MatrixXd jac(2 * r, 2 * r);
    while (norm >= config_.newton_tol) {
        if (iter == config_.newton_max_iter) {
            std::ostringstream os;
            os << "reduced Newton did not converge in " << iter << " iterations (residual " << norm << ")";
            throw NewtonError(os.str(), norm);
        }
        const Eigen::VectorXd phi = xp * ap;
        const Eigen::VectorXd curvature = 3.0 * kappa * ops_.lumped.cwiseProduct(phi.cwiseAbs2());
        jac.topLeftCorner(r, r) = mass_pp_;
        jac.topRightCorner(r, r) = flux * flux_pm_;
        jac.bottomLeftCorner(r, r) = -eps2 * laplace_mp_ - xm.transpose() * curvature.asDiagonal() * xp;
        jac.bottomRightCorner(r, r) = mass_mm_;
        const Eigen::VectorXd delta = jac.partialPivLu().solve(-res);

        double alpha = 1.0;
        Eigen::VectorXd trial_p, trial_m, trial_res;
        double trial_norm = norm;
        for (int k = 0; k < 20; ++k) {
            trial_p = ap + alpha * delta.head(r);
            trial_m = am + alpha * delta.tail(r);
            trial_norm = residual(trial_p, trial_m, trial_res);
            if (trial_norm < norm || !std::isfinite(trial_norm))
                break;
            alpha *= 0.5;
        }
        if (!std::isfinite(trial_norm))
            throw NewtonError("reduced Newton produced a non-finite residual", norm);
        ap = std::move(trial_p);
        am = std::move(trial_m);
        res = std::move(trial_res);
        norm = trial_norm;
        ++iter;
    }
    a_phi = std::move(ap);
    a_mu = std::move(am);
    if (newton_iterations)
        *newton_iterations = iter;
}

ReducedTrajectory pod_galerkin_run(const State& initial, const ParameterSet& params, const SimulationConfig& config,
                                   const PodBases& bases, const OperatorBundle& ops)
{
    GalerkinStepper stepper(bases, ops, params, config);
    const Index r = bases.n_pod;
    const Index cols = config.n_steps + 1;
    ReducedTrajectory out;
    out.phi.resize(r, cols);
    out.mu.resize(r, cols);
    out.nhat.resize(r, cols);
    Eigen::VectorXd ap = project(initial.phi, bases[Variable::Phi]);
    Eigen::VectorXd am = project(initial.mu, bases[Variable::Mu]);
    Eigen::VectorXd an = project(initial.nhat, bases[Variable::Nhat]);
    double t = initial.time;
    out.times.push_back(t);
    out.phi.col(0) = ap;
    out.mu.col(0) = am;
    out.nhat.col(0) = an;
    for (int j = 1; j <= config.n_steps; ++j) {
        int iters = 0;
        stepper.step(ap, am, an, &iters);
        t += config.dt;
        out.times.push_back(t);
        out.phi.col(j) = ap;
        out.mu.col(j) = am;
        out.nhat.col(j) = an;
        out.newton_iterations.push_back(iters);
    }
    return out;
}

} // namespace gbl
