#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nilheat/quadrature.hpp"
#include "nilheat/schrodinger.hpp"

namespace nilheat {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double length() const { return hi - lo; }
};

namespace detail {

inline double horner(const std::vector<double>& c, double x) {
    double s = 0.0;
    for (std::size_t i = c.size(); i > 0; --i) s = s * x + c[i - 1];
    return s;
}

/// Real roots of sum_k c_k x^k via the companion matrix, polished by Newton.
inline std::vector<double> real_roots(std::vector<double> c) {
    while (!c.empty() && c.back() == 0.0) c.pop_back();
    std::vector<double> roots;
    if (c.size() < 2) return roots;
    const auto deg = static_cast<Eigen::Index>(c.size() - 1);
    if (deg == 1) {
        roots.push_back(-c[0] / c[1]);
        return roots;
    }
    Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(deg, deg);
    for (Eigen::Index i = 1; i < deg; ++i) comp(i, i - 1) = 1.0;
    for (Eigen::Index i = 0; i < deg; ++i) comp(i, deg - 1) = -c[static_cast<std::size_t>(i)] / c.back();
    Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
    std::vector<double> dc(c.size() - 1);
    for (std::size_t k = 1; k < c.size(); ++k) dc[k - 1] = static_cast<double>(k) * c[k];
    for (Eigen::Index i = 0; i < deg; ++i) {
        const auto z = es.eigenvalues()(i);
        if (std::abs(z.imag()) > 1e-7 * (1.0 + std::abs(z.real()))) continue;
        double x = z.real();
        for (int it = 0; it < 4; ++it) {
            const double d = horner(dc, x);
            if (d == 0.0) break;
            x -= horner(c, x) / d;
        }
        roots.push_back(x);
    }
    return roots;
}

inline std::vector<Interval> merge_intervals(std::vector<Interval> v, double gap = 0.0) {
    std::sort(v.begin(), v.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    std::vector<Interval> out;
    for (const auto& iv : v) {
        if (!out.empty() && iv.lo <= out.back().hi + gap)
            out.back().hi = std::max(out.back().hi, iv.hi);
        else
            out.push_back(iv);
    }
    return out;
}

}  // namespace detail

/// A polynomial constraint |P(x)| < bound.
struct PolyBound {
    std::vector<double> coeffs;
    double bound;
};

/// Components of the set where every constraint holds. At least one constraint
/// must have positive degree so that the set is bounded.
inline std::vector<Interval> sublevel_intervals(const std::vector<PolyBound>& cons) {
    std::vector<double> cuts;
    bool bounded = false;
    for (const auto& c : cons) {
        std::vector<double> p = c.coeffs;
        while (p.size() > 1 && p.back() == 0.0) p.pop_back();
        if (p.size() >= 2) bounded = true;
        for (double s : {-1.0, 1.0}) {
            std::vector<double> q = p;
            q[0] -= s * c.bound;
            for (double r : detail::real_roots(q)) cuts.push_back(r);
        }
    }
    if (!bounded) throw std::invalid_argument("sublevel_intervals: constraint set is unbounded");
    std::sort(cuts.begin(), cuts.end());
    auto ok = [&](double x) {
        for (const auto& c : cons)
            if (!(std::abs(detail::horner(c.coeffs, x)) < c.bound)) return false;
        return true;
    };
    std::vector<Interval> out;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        if (cuts[i + 1] <= cuts[i]) continue;
        if (ok(0.5 * (cuts[i] + cuts[i + 1]))) out.push_back({cuts[i], cuts[i + 1]});
    }
    return detail::merge_intervals(std::move(out));
}

/// Settings shared by the local reduced-kernel builders.
struct LocalKernelConfig {
    double mode_cut = 30.0;   ///< keep modes with (E - E_0) t below this
    double decay_cut = 30.0;  ///< kernel values below exp(-decay_cut) are dropped
    double resolution = 1.0;  ///< grid points per pi / K_max
    int max_points = 240;     ///< grid points per window before splitting
};

/// Heat kernel of -d^2/dx^2 + V near a set of x-intervals. Each window is a
/// uniform sinc-DVR grid (hard wall at its ends) diagonalized once; the kernel is
/// k(x, y) = f(x) . f(y) with f the damped, sinc-interpolated eigenvectors.
/// Values k(x + a, x) are accurate for x in an interval and a in the range given
/// at construction.
class LocalKernel {
public:
    struct Window {
        double core_lo, core_hi;
        double x0, h;
        int points;
        Eigen::MatrixXd weighted;  ///< N x r, eigenvectors times exp(-E t / 2) / sqrt(h)
        Eigen::VectorXd mass;      ///< r, integral of each column's interpolant
    };

    LocalKernel() = default;

    /// margins[i]: distance past each end of interval i over which V still matters.
    LocalKernel(const PolynomialPotential& v, double t, const std::vector<Interval>& intervals, double a_min,
                double a_max, const std::vector<std::pair<double, double>>& margins, const LocalKernelConfig& cfg)
        : t_(t) {
        a_min = std::min(a_min, 0.0);
        a_max = std::max(a_max, 0.0);
        const double reach = wall_reach(t);
        for (std::size_t i = 0; i < intervals.size(); ++i) {
            const auto& iv = intervals[i];
            const double ml = margins[i].first, mr = margins[i].second;
            const double lo = iv.lo + a_min - ml, hi = iv.hi + a_max + mr;
            const double h = grid_step(v, lo, hi, cfg);
            if ((hi - lo) / h + 1 <= cfg.max_points) {
                add_window(v, iv.lo, iv.hi, lo, hi, h, cfg);
                continue;
            }
            // interior cut points need the wall reach on both sides
            double delta = (cfg.max_points - 1) * h - (a_max - a_min) - 2.0 * reach;
            if (delta < reach) delta = reach;
            const int pieces = static_cast<int>(std::ceil(iv.length() / delta));
            const double step = iv.length() / pieces;
            for (int p = 0; p < pieces; ++p) {
                const double c_lo = iv.lo + step * p;
                const double c_hi = p + 1 == pieces ? iv.hi : c_lo + step;
                const double w_lo = c_lo + a_min - (p == 0 ? ml : reach);
                const double w_hi = c_hi + a_max + (p + 1 == pieces ? mr : reach);
                add_window(v, c_lo, c_hi, w_lo, w_hi, grid_step(v, w_lo, w_hi, cfg), cfg);
            }
        }
    }

    /// Distance from a Dirichlet wall beyond which its effect is below exp(-20).
    static double wall_reach(double t) { return std::sqrt(20.0 * t); }

    const std::vector<Window>& windows() const { return windows_; }

    int window_of(double x) const {
        int best = 0;
        double dist = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < windows_.size(); ++i) {
            const auto& w = windows_[i];
            const double d = x < w.core_lo ? w.core_lo - x : (x > w.core_hi ? x - w.core_hi : 0.0);
            if (d < dist) {
                dist = d;
                best = static_cast<int>(i);
            }
            if (d == 0.0) break;
        }
        return best;
    }

    /// f(x) with k(x, y) = f(x) . f(y) inside window w.
    Eigen::VectorXd features(int w, double x) const {
        const auto& win = windows_[static_cast<std::size_t>(w)];
        Eigen::VectorXd s(win.points);
        const double u0 = (x - win.x0) / win.h;
        const double r = std::round(u0);
        if (std::abs(u0 - r) < 1e-12) {
            s.setZero();
            const auto i = static_cast<Eigen::Index>(r);
            if (i >= 0 && i < win.points) s(i) = 1.0;
        } else {
            const double sp = std::sin(std::numbers::pi * u0) / std::numbers::pi;
            for (int i = 0; i < win.points; ++i) s(i) = (i % 2 == 0 ? sp : -sp) / (u0 - i);
        }
        return win.weighted.transpose() * s;
    }

    /// Integral over y of k(y, x) given f(x).
    double mass(int w, const Eigen::VectorXd& fx) const { return fx.dot(windows_[static_cast<std::size_t>(w)].mass); }

private:
    double grid_step(const PolynomialPotential& v, double lo, double hi, const LocalKernelConfig& cfg) const {
        // momentum reach: energy window plus the Gaussian tails of the most curved well
        const double e_max = (cfg.mode_cut + cfg.decay_cut) / t_;
        std::vector<double> d2(v.coeffs().size() > 2 ? v.coeffs().size() - 2 : 1, 0.0);
        for (std::size_t k = 2; k < v.coeffs().size(); ++k) d2[k - 2] = static_cast<double>(k * (k - 1)) * v.coeffs()[k];
        double curv = 0.0;
        for (int i = 0; i <= 64; ++i) {
            const double x = lo + (hi - lo) * i / 64.0;
            if (v(x) * t_ < cfg.mode_cut + cfg.decay_cut) curv = std::max(curv, detail::horner(d2, x));
        }
        const double k2 = e_max + 20.0 * std::sqrt(0.5 * curv);
        return std::numbers::pi / (cfg.resolution * std::sqrt(k2));
    }

    void add_window(const PolynomialPotential& v, double core_lo, double core_hi, double lo, double hi, double h,
                    const LocalKernelConfig& cfg) {
        const int n = std::max(8, static_cast<int>(std::ceil((hi - lo) / h)) + 1);
        h = (hi - lo) / (n - 1);
        Eigen::MatrixXd ham(n, n);
        const double pi2 = std::numbers::pi * std::numbers::pi;
        for (int i = 0; i < n; ++i) {
            ham(i, i) = pi2 / (3.0 * h * h) + v(lo + h * i);
            for (int j = 0; j < i; ++j) {
                const double d = i - j;
                const double val = ((i - j) % 2 == 0 ? 2.0 : -2.0) / (d * d * h * h);
                ham(i, j) = val;
                ham(j, i) = val;
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ham);
        if (es.info() != Eigen::Success) throw std::runtime_error("LocalKernel: eigensolver failed");
        const Eigen::VectorXd& e = es.eigenvalues();
        int r = 1;
        while (r < n && (e(r) - e(0)) * t_ < cfg.mode_cut) ++r;
        Window w{core_lo, core_hi, lo, h, n, es.eigenvectors().leftCols(r), {}};
        for (int j = 0; j < r; ++j) w.weighted.col(j) *= std::exp(-0.5 * e(j) * t_) / std::sqrt(h);
        w.mass = w.weighted.colwise().sum().transpose() * h;
        windows_.push_back(std::move(w));
    }

    double t_ = 0.0;
    std::vector<Window> windows_;
};

}  // namespace nilheat
