#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "nilheat/orbit.hpp"
#include "nilheat/quadrature.hpp"

namespace nilheat {

inline constexpr double kFourPiSq = 4.0 * std::numbers::pi * std::numbers::pi;

/// V(x) = sum_k coeffs[k] x^k. When built from a root polynomial p the potential
/// is 4 pi^2 p(x)^2 and is evaluated through p, which avoids cancellation far out.
class PolynomialPotential {
public:
    PolynomialPotential() = default;

    static PolynomialPotential from_coefficients(std::vector<double> c) {
        while (c.size() > 1 && c.back() == 0.0) c.pop_back();
        if (c.empty()) c.push_back(0.0);
        if (c.size() % 2 == 0) throw std::invalid_argument("PolynomialPotential: degree must be even");
        if (c.back() < 0.0) throw std::invalid_argument("PolynomialPotential: leading coefficient must be >= 0");
        PolynomialPotential v;
        v.coeffs_ = std::move(c);
        return v;
    }

    static PolynomialPotential from_root(std::vector<double> p) {
        while (p.size() > 1 && p.back() == 0.0) p.pop_back();
        PolynomialPotential v;
        v.root_ = p;
        v.coeffs_.assign(2 * p.size() - 1, 0.0);
        for (std::size_t i = 0; i < p.size(); ++i)
            for (std::size_t j = 0; j < p.size(); ++j) v.coeffs_[i + j] += kFourPiSq * p[i] * p[j];
        return v;
    }

    const std::vector<double>& coeffs() const { return coeffs_; }
    const std::vector<double>& root() const { return root_; }
    bool has_root() const { return !root_.empty(); }
    int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
    double leading() const { return coeffs_.back(); }

    double root_value(double x) const { return horner(root_, x); }

    double operator()(double x) const {
        if (has_root()) {
            const double p = horner(root_, x);
            return kFourPiSq * p * p;
        }
        return horner(coeffs_, x);
    }

    /// Potential in the local variable y with x = center + scale * y.
    PolynomialPotential rescaled(double center, double scale) const {
        auto shift = [&](const std::vector<double>& c) {
            // Taylor shift by center, then scale powers
            std::vector<double> d = c;
            const std::size_t n = d.size();
            for (std::size_t k = 0; k + 1 < n; ++k)
                for (std::size_t j = n - 1; j > k; --j) d[j - 1] += center * d[j];
            double s = 1.0;
            for (std::size_t j = 0; j < n; ++j) {
                d[j] *= s;
                s *= scale;
            }
            return d;
        };
        if (has_root()) return from_root(shift(root_));
        PolynomialPotential v;
        v.coeffs_ = shift(coeffs_);
        return v;
    }

private:
    static double horner(const std::vector<double>& c, double x) {
        double s = 0.0;
        for (std::size_t i = c.size(); i > 0; --i) s = s * x + c[i - 1];
        return s;
    }
    std::vector<double> coeffs_{0.0};
    std::vector<double> root_;
};

/// V_Lambda = 4 pi^2 p(x)^2 with p(x) = sum_k c_k x^{k-1}/(k-1)!.
inline PolynomialPotential reduced_potential(const GroupSpec& spec, const DualParameter& lam) {
    check_dual_parameter(spec, lam);
    if (lam.lambda.back() == 0.0)
        throw std::invalid_argument("reduced_potential: lambda_{n-1} must be nonzero");
    const auto c = phase_coefficients(spec, lam);
    std::vector<double> p(c.size());
    for (std::size_t k = 0; k < c.size(); ++k) p[k] = c[k] / factorial(static_cast<int>(k));
    return PolynomialPotential::from_root(std::move(p));
}

/// d pi(X_1) = d/dx (central differences, zero outside the grid) and
/// d pi(X_2) = 2 pi i p(x) on a uniform grid.
struct DpiGenerators {
    Eigen::SparseMatrix<std::complex<double>> x1;
    Eigen::SparseMatrix<std::complex<double>> x2;
};

inline DpiGenerators dpi_generators(const GroupSpec& spec, const DualParameter& lam, double x_min, double x_max,
                                    std::size_t n) {
    if (n < 3) throw std::invalid_argument("dpi_generators: need at least 3 grid points");
    const auto v = reduced_potential(spec, lam);
    const double h = (x_max - x_min) / static_cast<double>(n - 1);
    using T = Eigen::Triplet<std::complex<double>>;
    std::vector<T> d, m;
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<int>(i);
        if (i > 0) d.emplace_back(r, r - 1, -0.5 / h);
        if (i + 1 < n) d.emplace_back(r, r + 1, 0.5 / h);
        const double x = x_min + h * static_cast<double>(i);
        m.emplace_back(r, r, std::complex<double>(0.0, 2.0 * std::numbers::pi * v.root_value(x)));
    }
    DpiGenerators g;
    g.x1.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    g.x2.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    g.x1.setFromTriplets(d.begin(), d.end());
    g.x2.setFromTriplets(m.begin(), m.end());
    return g;
}

namespace detail {
/// log(u / sinh u) for u >= 0.
inline double log_u_over_sinh(double u) {
    if (u < 1e-3) return std::log1p(-u * u / 6.0 + 7.0 * u * u * u * u / 360.0);
    return std::log(2.0 * u) - u - std::log1p(-std::exp(-2.0 * u));
}
/// u coth u and u / sinh u, smooth at u = 0.
inline double u_coth(double u) {
    if (u < 1e-3) return 1.0 + u * u / 3.0 - u * u * u * u / 45.0;
    return u / std::tanh(u);
}
}  // namespace detail

/// Heat kernel of d^2/dx^2 - omega^2 x^2 (standard Mehler form), evaluated in log space.
inline double mehler_kernel(double omega, double t, double x, double y) {
    if (!(t > 0.0)) throw std::invalid_argument("mehler_kernel: t must be positive");
    if (omega < 0.0) throw std::invalid_argument("mehler_kernel: omega must be nonnegative");
    const double u = 2.0 * omega * t;
    const double lus = detail::log_u_over_sinh(u);
    const double u_csch = std::exp(lus);
    const double expo = -((x * x + y * y) * detail::u_coth(u) - 2.0 * x * y * u_csch) / (4.0 * t);
    return std::exp(0.5 * (lus - std::log(4.0 * std::numbers::pi * t)) + expo);
}

enum class ScalePolicy { automatic, fixed };

struct SolverConfig {
    int num_modes = 64;
    int quadrature = 0;  ///< 0: num_modes + degree/2 + 2
    ScalePolicy scale_policy = ScalePolicy::automatic;
    double scale = 1.0;   ///< used when fixed
    double center = 0.0;  ///< basis center
};

struct SpectralKernel {
    double basis_scale = 1.0;
    double center = 0.0;
    int num_modes = 0;
    Eigen::VectorXd eigenvalues;   ///< ascending
    Eigen::MatrixXd eigenvectors;  ///< column k: coefficients of phi_k
    Eigen::VectorXd top_share;     ///< squared weight of each eigenvector on the top quarter of the basis
    bool converged = true;         ///< ground state carries <= 1e-8 of its mass in the top quarter
};

namespace detail {

/// Hermite functions sampled at Gauss-Hermite nodes, pre-multiplied by sqrt(weight).
struct HermiteTable {
    Eigen::MatrixXd psi;  ///< M x Q
    Rule rule;
};

inline std::shared_ptr<const HermiteTable> hermite_table(int m, int q) {
    static std::mutex mutex;
    static std::map<std::pair<int, int>, std::shared_ptr<const HermiteTable>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find({m, q});
    if (it != cache.end()) return it->second;
    auto table = std::make_shared<HermiteTable>();
    table->rule = gauss_hermite_functions(q);
    table->psi.resize(m, q);
    std::vector<double> buf(static_cast<std::size_t>(m));
    for (int k = 0; k < q; ++k) {
        const double y = table->rule.x[static_cast<std::size_t>(k)];
        hermite_functions(y, m, buf.data());
        const double sw = std::sqrt(table->rule.w[static_cast<std::size_t>(k)]);
        for (int j = 0; j < m; ++j) table->psi(j, k) = buf[static_cast<std::size_t>(j)] * sw;
    }
    cache.emplace(std::make_pair(m, q), table);
    return table;
}

}  // namespace detail

inline double auto_basis_scale(const PolynomialPotential& v) {
    const int deg = v.degree();
    if (deg < 2 || v.leading() <= 0.0) return 1.0;
    // harmonic fit: 1/s^2 = c_top^{1/(d+1)} for V ~ c_top x^{2d}
    return std::pow(v.leading(), -1.0 / (deg + 2.0));
}

/// Galerkin eigenpairs of -d^2/dx^2 + V in M scaled Hermite functions.
inline SpectralKernel spectral_solve(const PolynomialPotential& v, const SolverConfig& cfg) {
    if (cfg.num_modes < 4) throw std::invalid_argument("spectral_solve: num_modes must be >= 4");
    const int m = cfg.num_modes;
    const int q = cfg.quadrature > 0 ? cfg.quadrature : m + v.degree() / 2 + 2;
    if (q < m + v.degree() / 2) throw std::invalid_argument("spectral_solve: quadrature too small for exact matrix elements");
    SpectralKernel k;
    k.num_modes = m;
    k.center = cfg.center;
    k.basis_scale = cfg.scale_policy == ScalePolicy::fixed ? cfg.scale : auto_basis_scale(v);
    if (!(k.basis_scale > 0.0)) throw std::invalid_argument("spectral_solve: basis scale must be positive");
    const double s = k.basis_scale;
    const auto table = detail::hermite_table(m, q);
    const PolynomialPotential local = v.rescaled(k.center, s);
    Eigen::VectorXd vq(q);
    for (int i = 0; i < q; ++i) vq(i) = local(table->rule.x[static_cast<std::size_t>(i)]);
    Eigen::MatrixXd h = table->psi * vq.asDiagonal() * table->psi.transpose();
    const double inv_s2 = 1.0 / (s * s);
    for (int j = 0; j < m; ++j) {
        h(j, j) += inv_s2 * (2.0 * j + 1.0) / 2.0;
        if (j + 2 < m) {
            const double off = -inv_s2 * 0.5 * std::sqrt((j + 1.0) * (j + 2.0));
            h(j, j + 2) += off;
            h(j + 2, j) += off;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    if (es.info() != Eigen::Success) throw std::runtime_error("spectral_solve: eigensolver failed");
    k.eigenvalues = es.eigenvalues();
    k.eigenvectors = es.eigenvectors();
    k.top_share = k.eigenvectors.bottomRows(m / 4).colwise().squaredNorm().transpose();
    k.converged = k.top_share(0) <= 1e-8;
    return k;
}

/// phi_0..phi_{r-1} at x.
inline Eigen::VectorXd eigenfunctions(const SpectralKernel& k, double x, int r = -1) {
    if (r < 0 || r > k.num_modes) r = k.num_modes;
    Eigen::VectorXd psi(k.num_modes);
    hermite_functions((x - k.center) / k.basis_scale, k.num_modes, psi.data());
    psi /= std::sqrt(k.basis_scale);
    return k.eigenvectors.leftCols(r).transpose() * psi;
}

/// Share of the squared Hilbert-Schmidt mass of e^{-tH} carried by the top quarter of the basis.
inline double basis_tail(const SpectralKernel& k, double t) {
    double all = 0.0, top = 0.0;
    const double e0 = k.eigenvalues(0);
    for (int i = 0; i < k.num_modes; ++i) {
        const double w = std::exp(-2.0 * (k.eigenvalues(i) - e0) * t);
        all += w;
        top += w * k.top_share(i);
    }
    return top / all;
}

struct KernelValue {
    double value = 0.0;
    double tail = 0.0;        ///< contribution of the top quarter of the modes
    double basis_tail = 0.0;  ///< see basis_tail()
    bool flagged = false;
};

/// k_t(x, y) = sum_k exp(-E_k t) phi_k(x) phi_k(y).
inline KernelValue kernel_eval(const SpectralKernel& k, double t, double x, double y) {
    if (!(t > 0.0)) throw std::invalid_argument("kernel_eval: t must be positive");
    const Eigen::VectorXd px = eigenfunctions(k, x);
    const Eigen::VectorXd py = x == y ? px : eigenfunctions(k, y);
    KernelValue r;
    const int top = k.num_modes - k.num_modes / 4;
    CompensatedSum sum;
    // ascending index order: terms decay with E_k, tail accumulated separately
    for (int i = 0; i < k.num_modes; ++i) {
        const double term = std::exp(-k.eigenvalues(i) * t) * (px(i) * py(i));
        sum.add(term);
        if (i >= top) r.tail += std::abs(term);
    }
    r.value = sum.value();
    r.basis_tail = basis_tail(k, t);
    r.flagged = r.tail > 1e-6 * std::abs(r.value) || r.basis_tail > 1e-8;
    return r;
}

/// Options for the Crank-Nicolson reference propagator.
struct CrankNicolsonConfig {
    double half_width = 8.0;  ///< grid covers [x0 - half_width, x0 + half_width]
    double h = 0.004;         ///< coarse spacing; the fine run uses h / 2
    double t0 = 1e-4;         ///< start time of the propagation
    double dt_ratio = 0.02;   ///< step = dt_ratio * current time (coarse run)
    double dt_max = 1e-4;   ///< cap on the coarse step
};

struct CrankNicolsonResult {
    GridFunction u;               ///< Richardson-combined solution on the coarse grid
    std::vector<double> times;    ///< fine-run step times
    std::vector<double> masses;   ///< fine-run integral of u at those times
    double max_dt_over_h2 = 0.0;  ///< stiffness diagnostic
};

namespace detail {

/// Second-order finite differences, Crank-Nicolson in time, on a uniform grid.
inline Eigen::VectorXd cn_run(const PolynomialPotential& v, double t, double x0, const CrankNicolsonConfig& cfg,
                              double h, double ratio, std::vector<double>* times, std::vector<double>* masses,
                              double* stiff) {
    const auto n = static_cast<Eigen::Index>(std::llround(2.0 * cfg.half_width / h)) + 1;
    const double lo = x0 - cfg.half_width;
    Eigen::VectorXd vx(n), u(n);
    const Rule seg = gauss_legendre(8);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = lo + h * static_cast<double>(i);
        vx(i) = v(x);
        // free Gaussian at t0 weighted by exp(-t0 * mean of V on [x0, x])
        double avg = 0.0;
        for (std::size_t k = 0; k < seg.size(); ++k) avg += 0.5 * seg.w[k] * v(x0 + 0.5 * (1.0 + seg.x[k]) * (x - x0));
        u(i) = std::exp(-(x - x0) * (x - x0) / (4.0 * cfg.t0) - cfg.t0 * avg) / std::sqrt(4.0 * std::numbers::pi * cfg.t0);
    }
    u(0) = u(n - 1) = 0.0;
    double now = cfg.t0;
    Eigen::VectorXd rhs(n), cp(n), dp(n);
    while (now < t - 1e-15) {
        double dt = std::min({ratio * now, cfg.dt_max * ratio / cfg.dt_ratio, t - now});
        if (t - now - dt < 1e-3 * dt) dt = t - now;
        const double r = dt / (h * h);
        if (stiff) *stiff = std::max(*stiff, r);
        // (I + dt/2 H) u_new = (I - dt/2 H) u_old with H u = -(u_{i+1} - 2u_i + u_{i-1})/h^2 + V u
        for (Eigen::Index i = 1; i + 1 < n; ++i)
            rhs(i) = u(i) + 0.5 * r * (u(i + 1) - 2.0 * u(i) + u(i - 1)) - 0.5 * dt * vx(i) * u(i);
        // Thomas algorithm on interior points; off-diagonals are -r/2
        const double off = -0.5 * r;
        for (Eigen::Index i = 1; i + 1 < n; ++i) {
            const double diag = 1.0 + r + 0.5 * dt * vx(i);
            const double denom = diag - (i > 1 ? off * cp(i - 1) : 0.0);
            cp(i) = off / denom;
            dp(i) = (rhs(i) - (i > 1 ? off * dp(i - 1) : 0.0)) / denom;
        }
        u(n - 2) = dp(n - 2);
        for (Eigen::Index i = n - 3; i >= 1; --i) u(i) = dp(i) - cp(i) * u(i + 1);
        now += dt;
        if (times) {
            times->push_back(now);
            masses->push_back(u.sum() * h);
        }
    }
    return u;
}

}  // namespace detail

/// Reference propagation of a narrow Gaussian started at x0. Two runs (h, dt) and
/// (h/2, dt/2) are combined by Richardson extrapolation.
inline CrankNicolsonResult crank_nicolson_oracle(const PolynomialPotential& v, double t, double x0,
                                                 const CrankNicolsonConfig& cfg = {}) {
    if (!(t > cfg.t0)) throw std::invalid_argument("crank_nicolson_oracle: t must exceed the start time t0");
    CrankNicolsonResult res;
    const Eigen::VectorXd coarse = detail::cn_run(v, t, x0, cfg, cfg.h, cfg.dt_ratio, nullptr, nullptr, nullptr);
    const Eigen::VectorXd fine = detail::cn_run(v, t, x0, cfg, 0.5 * cfg.h, 0.5 * cfg.dt_ratio, &res.times,
                                                &res.masses, &res.max_dt_over_h2);
    std::vector<std::complex<double>> vals(static_cast<std::size_t>(coarse.size()));
    for (Eigen::Index i = 0; i < coarse.size(); ++i)
        vals[static_cast<std::size_t>(i)] = (4.0 * fine(2 * i) - coarse(i)) / 3.0;
    res.u = GridFunction(x0 - cfg.half_width, x0 + cfg.half_width, std::move(vals));
    return res;
}

}  // namespace nilheat
