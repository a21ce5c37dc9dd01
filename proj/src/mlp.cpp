#include "gbl/mlp.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace gbl {

double uniform01(std::uint64_t& state)
{
    // splitmix64; stable across standard libraries, unlike the std distributions.
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return double(z >> 11) * 0x1.0p-53;
}

Mlp Mlp::create(const std::vector<Index>& sizes, double slope, std::uint64_t seed)
{
    if (sizes.size() < 2)
        throw std::invalid_argument("an MLP needs at least input and output sizes");
    Mlp net;
    net.slope = slope;
    std::uint64_t state = seed;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        if (sizes[l] < 1 || sizes[l + 1] < 1)
            throw std::invalid_argument("layer sizes must be positive");
        const double bound = 1.0 / std::sqrt(double(sizes[l]));
        Eigen::MatrixXd w(sizes[l + 1], sizes[l]);
        Eigen::VectorXd b(sizes[l + 1]);
        for (Index j = 0; j < w.cols(); ++j)
            for (Index i = 0; i < w.rows(); ++i)
                w(i, j) = bound * (2.0 * uniform01(state) - 1.0);
        for (Index i = 0; i < b.size(); ++i)
            b[i] = bound * (2.0 * uniform01(state) - 1.0);
        net.weights.push_back(std::move(w));
        net.biases.push_back(std::move(b));
    }
    return net;
}

std::vector<Index> Mlp::layer_sizes() const
{
    std::vector<Index> sizes{weights.front().cols()};
    for (const auto& w : weights)
        sizes.push_back(w.rows());
    return sizes;
}

Index Mlp::parameter_count() const
{
    Index n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += weights[l].size() + biases[l].size();
    return n;
}

Eigen::VectorXd Mlp::parameters() const
{
    Eigen::VectorXd theta(parameter_count());
    Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        theta.segment(k, weights[l].size()) = weights[l].reshaped();
        k += weights[l].size();
        theta.segment(k, biases[l].size()) = biases[l];
        k += biases[l].size();
    }
    return theta;
}

void Mlp::set_parameters(const Eigen::VectorXd& theta)
{
    if (theta.size() != parameter_count())
        throw std::invalid_argument("parameter vector has the wrong length");
    Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l].reshaped() = theta.segment(k, weights[l].size());
        k += weights[l].size();
        biases[l] = theta.segment(k, biases[l].size());
        k += biases[l].size();
    }
}

void Mlp::validate() const
{
    if (weights.empty() || weights.size() != biases.size())
        throw std::invalid_argument("MLP has no layers or mismatched biases");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (biases[l].size() != weights[l].rows())
            throw std::invalid_argument("bias " + std::to_string(l) + " does not match its weight rows");
        if (l > 0 && weights[l].cols() != weights[l - 1].rows())
            throw std::invalid_argument("layer " + std::to_string(l) + " does not chain with its predecessor");
        if (!weights[l].allFinite() || !biases[l].allFinite())
            throw std::invalid_argument("MLP has non-finite parameters");
    }
}

double leaky_relu(double x, double slope)
{
    return x >= 0.0 ? x : slope * x;
}

Eigen::MatrixXd mlp_forward_batch(const Mlp& net, const Eigen::MatrixXd& x)
{
    if (x.rows() != net.input_size())
        throw std::invalid_argument("input has " + std::to_string(x.rows()) + " features, network expects " +
                                    std::to_string(net.input_size()));
    Eigen::MatrixXd a = x;
    const std::size_t last = net.weights.size() - 1;
    for (std::size_t l = 0; l <= last; ++l) {
        Eigen::MatrixXd z = net.weights[l] * a;
        z.colwise() += net.biases[l];
        if (l < last)
            a = z.unaryExpr([s = net.slope](double v) { return leaky_relu(v, s); });
        else
            a = std::move(z);
    }
    return a;
}

Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& x)
{
    return mlp_forward_batch(net, Eigen::MatrixXd(x)).col(0);
}

double mlp_loss(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y)
{
    const Eigen::MatrixXd out = mlp_forward_batch(net, x);
    if (out.rows() != y.rows() || out.cols() != y.cols())
        throw std::invalid_argument("target shape does not match network output");
    return (out - y).squaredNorm() / double(y.size());
}

LossGradient mlp_gradient(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y)
{
    if (x.cols() == 0)
        throw std::invalid_argument("empty batch");
    if (x.rows() != net.input_size() || y.rows() != net.output_size() || y.cols() != x.cols())
        throw std::invalid_argument("batch shape does not match the network");

    const std::size_t layers = net.weights.size();
    std::vector<Eigen::MatrixXd> pre(layers), act(layers + 1);
    act[0] = x;
    for (std::size_t l = 0; l < layers; ++l) {
        pre[l] = net.weights[l] * act[l];
        pre[l].colwise() += net.biases[l];
        if (l + 1 < layers)
            act[l + 1] = pre[l].unaryExpr([s = net.slope](double v) { return leaky_relu(v, s); });
        else
            act[l + 1] = pre[l];
    }

    LossGradient out;
    const Eigen::MatrixXd diff = act[layers] - y;
    out.loss = diff.squaredNorm() / double(y.size());

    std::vector<Eigen::MatrixXd> grad_w(layers);
    std::vector<Eigen::VectorXd> grad_b(layers);
    Eigen::MatrixXd delta = (2.0 / double(y.size())) * diff;
    for (std::size_t l = layers; l-- > 0;) {
        if (l + 1 < layers)
            delta.array() *= pre[l].array().unaryExpr([s = net.slope](double v) { return v >= 0.0 ? 1.0 : s; });
        grad_w[l] = delta * act[l].transpose();
        grad_b[l] = delta.rowwise().sum();
        if (l > 0)
            delta = net.weights[l].transpose() * delta;
    }

    out.gradient.resize(net.parameter_count());
    Index k = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        out.gradient.segment(k, grad_w[l].size()) = grad_w[l].reshaped();
        k += grad_w[l].size();
        out.gradient.segment(k, grad_b[l].size()) = grad_b[l];
        k += grad_b[l].size();
    }
    return out;
}

} // namespace gbl
