#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace gbl {

using Index = Eigen::Index;

/// Feed-forward network: affine + LeakyReLU on hidden layers, affine output.
/// Batches are column-major: one sample per column.
struct Mlp {
    std::vector<Eigen::MatrixXd> weights; ///< layer l maps sizes[l] -> sizes[l+1]
    std::vector<Eigen::VectorXd> biases;
    double slope = 0.01;                  ///< LeakyReLU negative slope

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
    static Mlp create(const std::vector<Index>& sizes, double slope, std::uint64_t seed);

    std::vector<Index> layer_sizes() const;
    Index input_size() const { return weights.front().cols(); }
    Index output_size() const { return weights.back().rows(); }
    Index parameter_count() const;

    /// Flattened [W_0 (column-major), b_0, W_1, b_1, ...].
    Eigen::VectorXd parameters() const;
    void set_parameters(const Eigen::VectorXd& theta);

    /// Throws std::invalid_argument when consecutive layers do not chain.
    void validate() const;
};

double leaky_relu(double x, double slope);

Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& x);
Eigen::MatrixXd mlp_forward_batch(const Mlp& net, const Eigen::MatrixXd& x);

/// Mean over all entries of (net(x) - y)^2.
double mlp_loss(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

struct LossGradient {
    double loss = 0.0;
    Eigen::VectorXd gradient; ///< same layout as Mlp::parameters()
};

/// Exact MSE gradient by reverse accumulation over the batch.
LossGradient mlp_gradient(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

/// Deterministic 64-bit generator helpers shared by the sampling code.
double uniform01(std::uint64_t& state);

} // namespace gbl
