#include "gbl/normalization.hpp"
#include "gbl/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gbl {

std::string to_string(ScaleMode m)
{
    return m == ScaleMode::Log ? "log" : "linear";
}

ScaleMode scale_mode_from_string(const std::string& s)
{
    if (s == "log")
        return ScaleMode::Log;
    if (s == "linear")
        return ScaleMode::Linear;
    throw ParameterError("unknown scale mode '" + s + "'");
}

NormalizationSpec NormalizationSpec::biological()
{
    NormalizationSpec spec;
    spec.ranges = biological_ranges;
    spec.modes.fill(ScaleMode::Linear);
    spec.modes[4] = ScaleMode::Log;
    spec.modes[5] = ScaleMode::Log;
    return spec;
}

void NormalizationSpec::validate() const
{
    for (int k = 0; k < ParameterSet::size; ++k) {
        const auto [lo, hi] = ranges[k];
        if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
            throw ParameterError(std::string("empty normalization range for ") + ParameterSet::names[k]);
        if (modes[k] == ScaleMode::Log && !(lo > 0.0))
            throw ParameterError(std::string("log normalization needs a positive range for ") + ParameterSet::names[k]);
    }
}

Eigen::VectorXd normalize_params(const ParameterSet& p, const NormalizationSpec& spec, bool strict, bool* clipped)
{
    spec.validate();
    const auto v = p.to_vector();
    Eigen::VectorXd z(ParameterSet::size);
    bool any = false;
    for (int k = 0; k < ParameterSet::size; ++k) {
        const auto [lo, hi] = spec.ranges[k];
        if (!std::isfinite(v[k]))
            throw ParameterError(std::string("non-finite ") + ParameterSet::names[k]);
        if (v[k] < lo || v[k] > hi) {
            if (strict) {
                std::ostringstream os;
                os << ParameterSet::names[k] << " = " << v[k] << " outside [" << lo << ", " << hi << "]";
                throw ParameterError(os.str());
            }
            any = true;
        }
        if (spec.modes[k] == ScaleMode::Log) {
            if (!(v[k] > 0.0))
                throw ParameterError(std::string("log-scaled ") + ParameterSet::names[k] + " must be positive");
            z[k] = std::log(v[k] / lo) / std::log(hi / lo);
        } else {
            z[k] = (v[k] - lo) / (hi - lo);
        }
        z[k] = std::clamp(z[k], 0.0, 1.0);
    }
    if (clipped)
        *clipped = any;
    return z;
}

ParameterSet denormalize_params(const Eigen::VectorXd& z, const NormalizationSpec& spec)
{
    spec.validate();
    if (z.size() != ParameterSet::size)
        throw ParameterError("normalized parameter vector must have 6 entries");
    Eigen::VectorXd v(ParameterSet::size);
    for (int k = 0; k < ParameterSet::size; ++k) {
        const auto [lo, hi] = spec.ranges[k];
        if (spec.modes[k] == ScaleMode::Log)
            v[k] = lo * std::pow(hi / lo, z[k]);
        else
            v[k] = lo + z[k] * (hi - lo);
        // Rounding can push an endpoint one ulp outside the interval.
        if (z[k] >= 0.0 && z[k] <= 1.0)
            v[k] = std::clamp(v[k], lo, hi);
    }
    return ParameterSet::from_vector(v);
}

std::vector<ParameterSet> sample_parameters(int n, const NormalizationSpec& spec, std::uint64_t seed)
{
    if (n < 0)
        throw ParameterError("sample count must be non-negative");
    std::uint64_t state = seed;
    std::vector<ParameterSet> out;
    out.reserve(n);
    Eigen::VectorXd z(ParameterSet::size);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < ParameterSet::size; ++k)
            z[k] = uniform01(state);
        out.push_back(denormalize_params(z, spec));
    }
    return out;
}

} // namespace gbl
