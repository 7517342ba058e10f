#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "nilheat/lie.hpp"

namespace nilheat {

/// l = alpha X* + sum beta_i Y_i*.
struct DualFunctional {
    double alpha = 0.0;
    std::vector<double> beta;
};

/// Lambda = (lambda_1..lambda_{n-1}) labelling a generic orbit.
struct DualParameter {
    std::vector<double> lambda;
};

enum class OrbitKind { generic2d, degenerate2d, point };

struct OrbitClass {
    OrbitKind kind = OrbitKind::point;
    int m = 0;                ///< largest index with beta_m != 0
    std::vector<double> B_m;  ///< beta_1..beta_m
    double alpha = 0.0;
};

/// Ad*_w l, with w converted to algebra coordinates (x, y).
inline DualFunctional coadjoint_action(const GroupSpec& spec, const GroupElement& w, const DualFunctional& l) {
    detail::check_size(spec, l.beta.size(), "beta");
    const AlgebraElement v = log_coordinates(spec, w);
    const double x = v.a;
    const int n = spec.n;
    const auto px = scaled_powers(-x, n + 1);  // (-x)^k / k!
    DualFunctional r{l.alpha, std::vector<double>(l.beta.size(), 0.0)};
    for (int i = 2; i <= n; ++i) {
        double s = 0.0;
        double xk = 1.0;
        for (int k = 1; k < i; ++k) {
            const double sign = (k % 2 == 1) ? 1.0 : -1.0;
            s += sign * v.b[static_cast<std::size_t>(i - k - 1)] * xk / factorial(k);
            xk *= x;
        }
        r.alpha += l.beta[static_cast<std::size_t>(i - 1)] * s;
    }
    for (int j = 1; j <= n; ++j) {
        double s = 0.0;
        for (int k = j; k <= n; ++k) s += l.beta[static_cast<std::size_t>(k - 1)] * px[static_cast<std::size_t>(k - j)];
        r.beta[static_cast<std::size_t>(j - 1)] = s;
    }
    return r;
}

/// f_j(x; B_m) parametrizing the Y_j* coordinate along a generic orbit.
inline double orbit_polynomial(int j, double x, const std::vector<double>& B_m) {
    const int m = static_cast<int>(B_m.size());
    if (m < 2) throw std::invalid_argument("orbit_polynomial: B_m needs m >= 2");
    if (j < 1 || j > m) throw std::invalid_argument("orbit_polynomial: need 1 <= j <= m");
    const double bm = B_m[static_cast<std::size_t>(m - 1)];
    if (bm == 0.0) throw std::invalid_argument("orbit_polynomial: beta_m must be nonzero");
    const double u = -(B_m[static_cast<std::size_t>(m - 2)] - x) / bm;
    double s = 0.0;
    double term = 1.0;  // u^{k-j} / (k-j)!
    for (int k = j; k <= m; ++k) {
        s += B_m[static_cast<std::size_t>(k - 1)] * term;
        term *= u / static_cast<double>(k - j + 1);
    }
    return s;
}

inline OrbitClass classify_orbit(const DualFunctional& l) {
    OrbitClass c;
    c.alpha = l.alpha;
    for (std::size_t i = l.beta.size(); i > 0; --i) {
        if (l.beta[i - 1] != 0.0) {
            c.m = static_cast<int>(i);
            break;
        }
    }
    c.B_m.assign(l.beta.begin(), l.beta.begin() + c.m);
    if (c.m >= 3)
        c.kind = OrbitKind::generic2d;
    else if (c.m == 2)
        c.kind = OrbitKind::degenerate2d;
    else
        c.kind = OrbitKind::point;
    return c;
}

/// Basis of rad_l = {a = 0, sum_i beta_{i+1} b_i = 0}, solved for b_{m-1}.
/// On the representative with beta_{m-1} = 0 this is the spanning set
/// {Y_j - f_{j+1}(0)/beta_m Y_{m-1} (j <= m-3), Y_{m-2}, Y_m, .., Y_n}.
inline std::vector<AlgebraElement> radical_basis(const GroupSpec& spec, const DualFunctional& l) {
    detail::check_size(spec, l.beta.size(), "beta");
    const OrbitClass oc = classify_orbit(l);
    if (oc.kind != OrbitKind::generic2d)
        throw std::invalid_argument("radical_basis: l is not on a generic orbit (need m >= 3)");
    const int n = spec.n;
    const int m = oc.m;
    const double bm = l.beta[static_cast<std::size_t>(m - 1)];
    std::vector<AlgebraElement> out;
    for (int i = 1; i <= n; ++i) {
        if (i == m - 1) continue;
        AlgebraElement v{0.0, std::vector<double>(static_cast<std::size_t>(n), 0.0)};
        v.b[static_cast<std::size_t>(i - 1)] = 1.0;
        if (i < n) v.b[static_cast<std::size_t>(m - 2)] = -l.beta[static_cast<std::size_t>(i)] / bm;
        out.push_back(std::move(v));
    }
    return out;
}

/// l evaluated on an algebra element.
inline double pair(const DualFunctional& l, const AlgebraElement& v) {
    double s = l.alpha * v.a;
    for (std::size_t i = 0; i < l.beta.size(); ++i) s += l.beta[i] * v.b[i];
    return s;
}

/// Pf(l) = l([X, Y_{n-1}]) = beta_n.
inline double pfaffian(const GroupSpec& spec, const DualFunctional& l) {
    detail::check_size(spec, l.beta.size(), "beta");
    if (spec.n < 2) return 0.0;
    AlgebraElement x{1.0, std::vector<double>(static_cast<std::size_t>(spec.n), 0.0)};
    AlgebraElement y{0.0, std::vector<double>(static_cast<std::size_t>(spec.n), 0.0)};
    y.b[static_cast<std::size_t>(spec.n - 2)] = 1.0;
    return pair(l, bracket(spec, x, y));
}

/// B_k(x, z) = sum_{i<=k} z_i x^{k-i} / (k-i)!.
inline double b_polynomial(int k, double x, const std::vector<double>& z) {
    if (k < 1 || static_cast<std::size_t>(k) > z.size())
        throw std::invalid_argument("b_polynomial: need 1 <= k <= n");
    double s = 0.0;
    double term = 1.0;
    for (int i = k; i >= 1; --i) {
        s += z[static_cast<std::size_t>(i - 1)] * term;
        term *= x / static_cast<double>(k - i + 1);
    }
    return s;
}

inline void check_dual_parameter(const GroupSpec& spec, const DualParameter& lam) {
    if (spec.n < 2) throw std::invalid_argument("lambda: the abelian case n = 1 has no generic orbits");
    if (lam.lambda.size() != static_cast<std::size_t>(spec.n - 1))
        throw std::invalid_argument("lambda: expected " + std::to_string(spec.n - 1) + " entries, got " +
                                    std::to_string(lam.lambda.size()));
}

/// Phase coefficients c with phase(x, z) = sum_k c_k B_k(x, z):
/// c_k = lambda_k for k <= n-2, c_{n-1} = 0, c_n = lambda_{n-1}.
inline std::vector<double> phase_coefficients(const GroupSpec& spec, const DualParameter& lam) {
    check_dual_parameter(spec, lam);
    const int n = spec.n;
    std::vector<double> c(static_cast<std::size_t>(n), 0.0);
    for (int k = 1; k <= n - 2; ++k) c[static_cast<std::size_t>(k - 1)] = lam.lambda[static_cast<std::size_t>(k - 1)];
    c[static_cast<std::size_t>(n - 1)] = lam.lambda[static_cast<std::size_t>(n - 2)];
    return c;
}

/// Phase coefficients from an orbit representative: f_k(0; B_m) for k <= m-2, beta_m at m.
inline std::vector<double> phase_coefficients(const GroupSpec& spec, const DualFunctional& l) {
    detail::check_size(spec, l.beta.size(), "beta");
    const OrbitClass oc = classify_orbit(l);
    if (oc.m < 2) throw std::invalid_argument("phase_coefficients: point orbits have no phase");
    std::vector<double> c(static_cast<std::size_t>(spec.n), 0.0);
    for (int k = 1; k <= oc.m - 2; ++k) c[static_cast<std::size_t>(k - 1)] = orbit_polynomial(k, 0.0, oc.B_m);
    c[static_cast<std::size_t>(oc.m - 1)] = oc.B_m.back();
    return c;
}

/// Lambda of the orbit through l (requires beta_n != 0).
inline DualParameter dual_parameter_of(const GroupSpec& spec, const DualFunctional& l) {
    const auto c = phase_coefficients(spec, l);
    if (classify_orbit(l).m != spec.n)
        throw std::invalid_argument("dual_parameter_of: beta_n must be nonzero");
    DualParameter lam;
    for (int k = 1; k <= spec.n - 2; ++k) lam.lambda.push_back(c[static_cast<std::size_t>(k - 1)]);
    lam.lambda.push_back(c[static_cast<std::size_t>(spec.n - 1)]);
    return lam;
}

/// q_i(x) = d/dz_i sum_k c_k B_k(x, z) = sum_{k>=i} c_k x^{k-i}/(k-i)!.
inline std::vector<double> phase_gradient(const std::vector<double>& c, double x) {
    const std::size_t n = c.size();
    std::vector<double> q(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        double term = 1.0;
        for (std::size_t k = i; k < n; ++k) {
            s += c[k] * term;
            term *= x / static_cast<double>(k - i + 1);
        }
        q[i] = s;
    }
    return q;
}

inline double phase(const std::vector<double>& c, double x, const std::vector<double>& z) {
    double s = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k)
        if (c[k] != 0.0) s += c[k] * b_polynomial(static_cast<int>(k + 1), x, z);
    return s;
}

struct GridFunction {
    double x_min = 0.0;
    double x_max = 1.0;
    std::vector<std::complex<double>> values;

    GridFunction() = default;
    GridFunction(double lo, double hi, std::vector<std::complex<double>> v) : x_min(lo), x_max(hi), values(std::move(v)) {
        if (values.size() < 2) throw std::invalid_argument("GridFunction: need N >= 2");
        if (!(hi > lo)) throw std::invalid_argument("GridFunction: need x_max > x_min");
    }
    std::size_t size() const { return values.size(); }
    double step() const { return (x_max - x_min) / static_cast<double>(values.size() - 1); }
    double x(std::size_t i) const { return x_min + step() * static_cast<double>(i); }
    double norm() const {
        double s = 0.0;
        for (const auto& v : values) s += std::norm(v);
        return std::sqrt(s * step());
    }
};

struct ApplyResult {
    GridFunction f;
    double truncated_fraction = 0.0;  ///< share of |f|^2 shifted off the grid
    std::string warning;
};

/// f(x + a) on the grid: exact index shift when a is a multiple of the step,
/// band-limited (sinc) interpolation otherwise; zero outside the grid.
inline ApplyResult shift_grid_function(const GridFunction& f, double a) {
    const std::size_t n = f.size();
    const double h = f.step();
    const double s = a / h;
    const double k0 = std::round(s);
    ApplyResult r{GridFunction(f.x_min, f.x_max, std::vector<std::complex<double>>(n, 0.0)), 0.0, {}};
    double total = 0.0, lost = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double m = std::norm(f.values[j]);
        total += m;
        const double src = static_cast<double>(j) - s;  // destination index of sample j
        if (src < -1e-9 || src > static_cast<double>(n - 1) + 1e-9) lost += m;
    }
    r.truncated_fraction = total > 0.0 ? lost / total : 0.0;
    if (std::abs(s - k0) < 1e-9) {
        const auto shift = static_cast<long>(k0);
        for (std::size_t i = 0; i < n; ++i) {
            const long j = static_cast<long>(i) + shift;
            if (j >= 0 && j < static_cast<long>(n)) r.f.values[i] = f.values[static_cast<std::size_t>(j)];
        }
        return r;
    }
    const double frac = s - std::floor(s);
    const long base = static_cast<long>(std::floor(s));
    const double sin_frac = std::sin(std::numbers::pi * frac);
    for (std::size_t i = 0; i < n; ++i) {
        const double target = static_cast<double>(i) + s;
        if (target < 0.0 || target > static_cast<double>(n - 1)) continue;
        std::complex<double> acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            // u = i + s - j = (i + base - j) + frac, sin(pi u) = (-1)^{i+base-j} sin(pi frac)
            const long k = static_cast<long>(i) + base - static_cast<long>(j);
            const double u = static_cast<double>(k) + frac;
            const double sign = (k % 2 == 0) ? 1.0 : -1.0;
            acc += f.values[j] * (sign * sin_frac / (std::numbers::pi * u));
        }
        r.f.values[i] = acc;
    }
    return r;
}

/// pi(g) f(x) = exp(2 pi i sum_k c_k B_k(x, z)) f(x + a).
inline ApplyResult representation_apply_phase(const std::vector<double>& c, const GroupElement& g, const GridFunction& f,
                                              double warn_fraction = 1e-10) {
    if (c.size() != g.z.size()) throw std::invalid_argument("representation_apply: dimension mismatch");
    ApplyResult r = shift_grid_function(f, g.a);
    for (std::size_t i = 0; i < r.f.size(); ++i) {
        const double ph = 2.0 * std::numbers::pi * phase(c, r.f.x(i), g.z);
        r.f.values[i] *= std::complex<double>(std::cos(ph), std::sin(ph));
    }
    if (r.truncated_fraction > warn_fraction)
        r.warning = "representation_apply: shift moved " + std::to_string(r.truncated_fraction) +
                    " of the mass off the grid";
    return r;
}

inline ApplyResult representation_apply(const GroupSpec& spec, const DualParameter& lam, const GroupElement& g,
                                        const GridFunction& f, double warn_fraction = 1e-10) {
    detail::check_size(spec, g.z.size(), "z");
    return representation_apply_phase(phase_coefficients(spec, lam), g, f, warn_fraction);
}

/// c_P |lambda_{n-1}|.
inline double plancherel_density(const GroupSpec& spec, const DualParameter& lam, double c_P = 1.0) {
    check_dual_parameter(spec, lam);
    return c_P * std::abs(lam.lambda.back());
}

}  // namespace nilheat
