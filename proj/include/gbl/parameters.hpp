#pragma once

#include <Eigen/Dense>

#include <array>
#include <stdexcept>
#include <string>

namespace gbl {

struct ParameterError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Patient-specific growth parameters, ordered [nu, M0, kappa, delta, delta_n, S_n].
struct ParameterSet {
    double nu = 0.0;      ///< proliferation rate, 1/day
    double m0 = 0.0;      ///< inter-phase friction, Pa day / mm^2
    double kappa = 0.0;   ///< brain Young modulus, Pa
    double delta = 0.0;   ///< hypoxia threshold, dimensionless
    double delta_n = 0.0; ///< oxygen consumption rate, 1/day
    double s_n = 0.0;     ///< oxygen supply rate, 1/day

    static constexpr int size = 6;
    static const std::array<const char*, size> names;

    Eigen::Matrix<double, size, 1> to_vector() const;
    static ParameterSet from_vector(const Eigen::Ref<const Eigen::VectorXd>& v);

    bool operator==(const ParameterSet&) const = default;
};

struct ParameterRange {
    double min;
    double max;
    bool operator==(const ParameterRange&) const = default;
};

/// Literature ranges, same order as ParameterSet::to_vector.
inline constexpr std::array<ParameterRange, ParameterSet::size> biological_ranges{{
    {1.2e-2, 0.5},     // nu
    {1.38e3, 5.03e3},  // M0
    {1.06e2, 1.53e3},  // kappa
    {0.1, 0.33},       // delta
    {1e3, 1e5},        // delta_n
    {1e3, 1e5},        // S_n
}};

/// Throws ParameterError unless every value is finite and positive (nu may be 0) and
/// delta lies in (0, 1). With `strict`, every value must also lie in its
/// biological range.
void validate(const ParameterSet& p, bool strict = false);

/// The reference patient used throughout the examples and the bundled
/// synthetic fixture.
ParameterSet reference_patient();

/// Growth term nu (nhat - delta) h(phi), 1/day.
double growth_rate(double phi, double nhat, const ParameterSet& p);

std::string describe(const ParameterSet& p);

} // namespace gbl
