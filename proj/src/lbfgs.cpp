#include "gbl/lbfgs.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>

namespace gbl {

namespace {

struct Pair {
    Eigen::VectorXd s, y;
    double rho;
};

Eigen::VectorXd two_loop(const std::deque<Pair>& hist, const Eigen::VectorXd& g)
{
    Eigen::VectorXd q = g;
    std::vector<double> alpha(hist.size());
    for (std::size_t i = hist.size(); i-- > 0;) {
        alpha[i] = hist[i].rho * hist[i].s.dot(q);
        q -= alpha[i] * hist[i].y;
    }
    if (!hist.empty()) {
        const auto& last = hist.back();
        q *= last.s.dot(last.y) / last.y.squaredNorm();
    }
    for (std::size_t i = 0; i < hist.size(); ++i) {
        const double beta = hist[i].rho * hist[i].y.dot(q);
        q += (alpha[i] - beta) * hist[i].s;
    }
    return -q;
}

// Backtracks from t0 until the Armijo condition holds. Returns the accepted step or 0.
double armijo(const Objective& f, const Eigen::VectorXd& x, double fx, const Eigen::VectorXd& g,
              const Eigen::VectorXd& d, double t0, const LbfgsOptions& o, Eigen::VectorXd& x_new, double& f_new,
              Eigen::VectorXd& g_new)
{
    const double slope = g.dot(d);
    double t = t0;
    for (int k = 0; k <= o.max_backtracks; ++k) {
        x_new = x + t * d;
        f_new = f(x_new, g_new);
        if (std::isfinite(f_new) && f_new <= fx + o.armijo_c1 * t * slope)
            return t;
        t *= o.backtrack;
    }
    return 0.0;
}

} // namespace

LbfgsResult minimize_lbfgs(const Objective& f, Eigen::VectorXd x0, const LbfgsOptions& o,
                           const std::function<void(const LbfgsIteration&, const Eigen::VectorXd&)>& callback)
{
    if (o.history < 1 || o.max_iterations < 0 || !(o.backtrack > 0.0 && o.backtrack < 1.0))
        throw std::invalid_argument("invalid L-BFGS options");

    LbfgsResult out;
    out.x = std::move(x0);
    Eigen::VectorXd g(out.x.size());
    out.loss = f(out.x, g);
    if (!std::isfinite(out.loss))
        throw std::runtime_error("objective is not finite at the starting point");

    std::deque<Pair> hist;
    Eigen::VectorXd x_new, g_new;
    double f_new = 0.0;
    for (int it = 1; it <= o.max_iterations; ++it) {
        if (g.norm() <= o.gradient_tol)
            break;
        bool fallback = false;
        Eigen::VectorXd d = two_loop(hist, g);
        double t0 = o.initial_step;
        if (hist.empty())
            t0 = std::min(o.initial_step, 1.0 / g.norm());
        if (!(g.dot(d) < 0.0)) {
            d = -g;
            hist.clear();
            fallback = true;
        }
        double t = armijo(f, out.x, out.loss, g, d, t0, o, x_new, f_new, g_new);
        if (t == 0.0 && !fallback) {
            hist.clear();
            fallback = true;
            d = -g;
            t = armijo(f, out.x, out.loss, g, d, std::min(1.0, 1.0 / g.norm()), o, x_new, f_new, g_new);
        }
        if (t == 0.0) {
            out.stalled = true;
            break;
        }
        if (fallback)
            ++out.fallbacks;

        Pair p{x_new - out.x, g_new - g, 0.0};
        const double sy = p.s.dot(p.y);
        if (sy > 1e-12 * p.s.norm() * p.y.norm()) {
            p.rho = 1.0 / sy;
            hist.push_back(std::move(p));
            if (int(hist.size()) > o.history)
                hist.pop_front();
        }
        out.x = x_new;
        out.loss = f_new;
        g = g_new;
        out.iterations = it;
        if (callback)
            callback(LbfgsIteration{it, out.loss, t, fallback}, out.x);
    }
    return out;
}

} // namespace gbl
