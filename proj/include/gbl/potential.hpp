#pragma once

#include <algorithm>

namespace gbl {

// Double-well mixing potential and its convex/concave split. Templated on the
// scalar so the same expressions serve plain doubles and Eigen array
// coefficient-wise maps (via unaryExpr).

/// Psi(phi) = (1 - phi^2)^2 / 4, minima at the pure phases +-1.
template <typename Scalar>
constexpr Scalar psi(Scalar phi)
{
    const Scalar s = Scalar(1) - phi * phi;
    return Scalar(0.25) * s * s;
}

template <typename Scalar>
constexpr Scalar psi_prime(Scalar phi)
{
    return phi * phi * phi - phi;
}

/// Convex part Psi_c = (phi^4 + 1) / 4, treated implicitly.
template <typename Scalar>
constexpr Scalar psi_c(Scalar phi)
{
    return Scalar(0.25) * (phi * phi * phi * phi + Scalar(1));
}

template <typename Scalar>
constexpr Scalar psi_c_prime(Scalar phi)
{
    return phi * phi * phi;
}

/// Concave part Psi_e = -phi^2 / 2, treated explicitly.
template <typename Scalar>
constexpr Scalar psi_e(Scalar phi)
{
    return Scalar(-0.5) * phi * phi;
}

template <typename Scalar>
constexpr Scalar psi_e_prime(Scalar phi)
{
    return -phi;
}

/// Proliferation switch: (1 + phi) / 2 clamped to [0, 1].
template <typename Scalar>
constexpr Scalar h(Scalar phi)
{
    return std::max(std::min(Scalar(1), Scalar(0.5) * (Scalar(1) + phi)), Scalar(0));
}

} // namespace gbl
