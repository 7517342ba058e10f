#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "nilheat/assembly.hpp"

namespace nilheat {

/// Coefficients of V_Lambda(x) = sum_k a_k x^k, k = 0..2(n-1).
struct ExpansionCoefficients {
    std::vector<double> a;

    double operator()(double x) const { return detail::horner(a, x); }
};

namespace detail {

/// a_0 + sum_{k>=1} a_k / (k+1) sum_{i=0}^{k} x^i y^{k-i}.
inline double line_average(const std::vector<double>& a, double x, double y) {
    if (a.empty()) return 0.0;
    double s = a[0];
    double h = 1.0, xk = 1.0;  // h_k = sum_i x^i y^{k-i}
    for (std::size_t k = 1; k < a.size(); ++k) {
        xk *= x;
        h = y * h + xk;
        s += a[k] * h / static_cast<double>(k + 1);
    }
    return s;
}

}  // namespace detail

/// P(x, y): the mean of V over the segment between x and y.
struct LineAveragedPotential {
    std::vector<double> a;

    double operator()(double x, double y) const { return detail::line_average(a, x, y); }
};

inline ExpansionCoefficients potential_coefficients(const DualParameter& lam, const GroupSpec& spec) {
    const auto v = reduced_potential(spec, lam);
    ExpansionCoefficients e{v.coeffs()};
    e.a.resize(static_cast<std::size_t>(2 * (spec.n - 1) + 1), 0.0);
    return e;
}

inline LineAveragedPotential line_averaged(const ExpansionCoefficients& e) { return {e.a}; }

enum class ExpansionForm { exponential, linear };

/// First-order short-time kernel (4 pi t)^{-1/2} e^{-(x-y)^2/4t} times e^{-t P(x,y)}
/// (exponential form) or 1 - t P(x,y) (linear form).
inline double reduced_kernel_expansion(const LineAveragedPotential& p, double t, double x, double y,
                                       ExpansionForm form = ExpansionForm::exponential) {
    if (!(t > 0.0)) throw std::invalid_argument("t: must be positive");
    const double d = x - y;
    const double free = std::exp(-d * d / (4.0 * t)) / std::sqrt(4.0 * std::numbers::pi * t);
    const double tp = t * p(x, y);
    return free * (form == ExpansionForm::exponential ? std::exp(-tp) : 1.0 - tp);
}

inline double reduced_kernel_expansion(const GroupSpec& spec, const DualParameter& lam, double t, double x, double y,
                                       ExpansionForm form = ExpansionForm::exponential) {
    return reduced_kernel_expansion(line_averaged(potential_coefficients(lam, spec)), t, x, y, form);
}

inline constexpr double kShortTimeMax = 0.1;

/// p_t assembled with the exponential short-time kernel in place of the reduced heat kernel.
inline std::vector<KernelEstimate> heat_kernel_short_time_batch(const GroupSpec& spec, double t,
                                                                const std::vector<GroupElement>& g,
                                                                const QuadratureConfig& cfg = {},
                                                                double t_max = kShortTimeMax) {
    if (!(t > 0.0)) throw std::invalid_argument("t: must be positive");
    if (spec.n < 2) return heat_kernel_batch(spec, t, g, cfg);
    std::vector<Probe> probes;
    for (const auto& p : g) {
        detail::check_size(spec, p.z.size(), "z");
        probes.push_back(point_probe(p));
    }
    const KernelOverride kernel = [t](const PolynomialPotential& v, double x, double y) {
        const double d = x - y;
        return std::exp(-d * d / (4.0 * t) - t * detail::line_average(v.coeffs(), x, y)) /
               std::sqrt(4.0 * std::numbers::pi * t);
    };
    auto out = detail::estimates(spec, t, probes, cfg, kernel);
    if (t > t_max)
        for (auto& e : out) e.warning = "t exceeds t_max = " + std::to_string(t_max) + ": short-time expansion invalid";
    return out;
}

inline KernelEstimate heat_kernel_short_time(const GroupSpec& spec, double t, const GroupElement& g,
                                             const QuadratureConfig& cfg = {}, double t_max = kShortTimeMax) {
    return heat_kernel_short_time_batch(spec, t, {g}, cfg, t_max).front();
}

}  // namespace nilheat
