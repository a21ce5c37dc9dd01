#include "gbl/parameters.hpp"
#include "gbl/potential.hpp"

#include <cmath>
#include <sstream>

namespace gbl {

const std::array<const char*, ParameterSet::size> ParameterSet::names{"nu", "m0", "kappa", "delta", "delta_n", "s_n"};

Eigen::Matrix<double, ParameterSet::size, 1> ParameterSet::to_vector() const
{
    Eigen::Matrix<double, size, 1> v;
    v << nu, m0, kappa, delta, delta_n, s_n;
    return v;
}

ParameterSet ParameterSet::from_vector(const Eigen::Ref<const Eigen::VectorXd>& v)
{
    if (v.size() != size)
        throw ParameterError("parameter vector must have 6 entries, got " + std::to_string(v.size()));
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

void validate(const ParameterSet& p, bool strict)
{
    const auto v = p.to_vector();
    for (int i = 0; i < ParameterSet::size; ++i) {
        // nu = 0 switches proliferation off, which the conservative checks rely on.
        const bool ok = i == 0 ? v[i] >= 0.0 : v[i] > 0.0;
        if (!std::isfinite(v[i]) || !ok)
            throw ParameterError(std::string("parameter ") + ParameterSet::names[i] + " must be finite and positive");
        if (strict && (v[i] < biological_ranges[i].min || v[i] > biological_ranges[i].max)) {
            std::ostringstream os;
            os << "parameter " << ParameterSet::names[i] << " = " << v[i] << " outside [" << biological_ranges[i].min
               << ", " << biological_ranges[i].max << "]";
            throw ParameterError(os.str());
        }
    }
    if (p.delta >= 1.0)
        throw ParameterError("parameter delta must lie in (0, 1)");
}

ParameterSet reference_patient()
{
    ParameterSet p;
    p.m0 = 3860.7;
    p.nu = 0.356;
    p.s_n = 41978.0;
    p.delta_n = 21041.0;
    p.kappa = 700.4;
    p.delta = 0.24;
    return p;
}

double growth_rate(double phi, double nhat, const ParameterSet& p)
{
    return p.nu * (nhat - p.delta) * h(phi);
}

std::string describe(const ParameterSet& p)
{
    std::ostringstream os;
    os.precision(6);
    const auto v = p.to_vector();
    for (int i = 0; i < ParameterSet::size; ++i)
        os << (i ? " " : "") << ParameterSet::names[i] << '=' << v[i];
    return os.str();
}

} // namespace gbl
