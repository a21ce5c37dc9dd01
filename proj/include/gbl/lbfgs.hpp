#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace gbl {

struct LbfgsOptions {
    int max_iterations = 100;
    int history = 10;
    double armijo_c1 = 1e-4;
    double backtrack = 0.5;
    double initial_step = 1.0;
    int max_backtracks = 40;
    double gradient_tol = 1e-12;
};

/// Returns f(x) and writes the gradient into g.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& g)>;

struct LbfgsIteration {
    int iteration = 0;
    double loss = 0.0;
    double step = 0.0;
    bool steepest_fallback = false;
};

struct LbfgsResult {
    Eigen::VectorXd x;
    double loss = 0.0;
    int iterations = 0;
    int fallbacks = 0;      ///< iterations where the quasi-Newton direction was abandoned
    bool stalled = false;   ///< no descent step could be found
};

/// Two-loop recursion with an Armijo backtracking line search. On a failed
/// line search the history is cleared and a steepest-descent step is tried.
LbfgsResult minimize_lbfgs(const Objective& f, Eigen::VectorXd x0, const LbfgsOptions& options,
                           const std::function<void(const LbfgsIteration&, const Eigen::VectorXd&)>& callback = {});

} // namespace gbl
