#pragma once

#include "gbl/parameters.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace gbl {

enum class ScaleMode { Linear, Log };

std::string to_string(ScaleMode m);
ScaleMode scale_mode_from_string(const std::string& s);

/// Per-parameter interval and scale used to map parameters onto [0, 1].
struct NormalizationSpec {
    std::array<ParameterRange, ParameterSet::size> ranges;
    std::array<ScaleMode, ParameterSet::size> modes;

    /// Biological ranges; the two nutrient rates are log-scaled.
    static NormalizationSpec biological();
    void validate() const;
    bool operator==(const NormalizationSpec&) const = default;
};

/// Throws ParameterError outside the ranges when strict; otherwise clamps to
/// [0, 1] and sets *clipped.
Eigen::VectorXd normalize_params(const ParameterSet& p, const NormalizationSpec& spec, bool strict = true,
                                 bool* clipped = nullptr);
ParameterSet denormalize_params(const Eigen::VectorXd& z, const NormalizationSpec& spec);

/// Uniform in normalized space, i.e. log-uniform on log-scaled entries.
std::vector<ParameterSet> sample_parameters(int n, const NormalizationSpec& spec, std::uint64_t seed);

} // namespace gbl
