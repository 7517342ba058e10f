#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nilheat/assembly.hpp"

namespace nilheat {

using GroupFunction = std::function<double(const GroupElement&)>;

/// Tensor Gauss-Legendre box over (a, z_1..z_n).
struct GroupBox {
    std::vector<double> lo, hi;  ///< n + 1 entries, a first
    int nodes = 24;              ///< per axis
};

namespace detail {

inline void check_box(const GroupSpec& spec, const GroupBox& box) {
    if (box.lo.size() != static_cast<std::size_t>(spec.n + 1) || box.hi.size() != box.lo.size())
        throw std::invalid_argument("GroupBox: expected n + 1 bounds");
    for (std::size_t k = 0; k < box.lo.size(); ++k)
        if (!(box.hi[k] > box.lo[k])) throw std::invalid_argument("GroupBox: empty axis");
    if (box.nodes < 2) throw std::invalid_argument("GroupBox: need at least 2 nodes per axis");
}

/// Flattened z-nodes of the box (last coordinate fastest) with product weights.
struct ZGrid {
    std::vector<Rule> axes;
    std::size_t count = 1;
};

inline ZGrid z_grid(const GroupSpec& spec, const GroupBox& box) {
    ZGrid g;
    const Rule base = gauss_legendre(box.nodes);
    for (int k = 1; k <= spec.n; ++k) {
        g.axes.push_back(mapped(base, box.lo[static_cast<std::size_t>(k)], box.hi[static_cast<std::size_t>(k)]));
        g.count *= g.axes.back().size();
    }
    return g;
}

/// Table w_z f((a, z)^{-1}) over the z-grid for one a.
inline std::vector<double> inverse_slice(const GroupSpec& spec, const GroupFunction& f, const ZGrid& zg, double a) {
    std::vector<double> out(zg.count);
    std::vector<std::size_t> idx(zg.axes.size(), 0);
    GroupElement g{a, std::vector<double>(zg.axes.size())};
    for (std::size_t flat = 0; flat < zg.count; ++flat) {
        double w = 1.0;
        for (std::size_t k = 0; k < zg.axes.size(); ++k) {
            g.z[k] = zg.axes[k].x[idx[k]];
            w *= zg.axes[k].w[idx[k]];
        }
        out[flat] = w * f(inverse(spec, g));
        for (std::size_t k = zg.axes.size(); k-- > 0;) {
            if (++idx[k] < zg.axes[k].size()) break;
            idx[k] = 0;
        }
    }
    return out;
}

/// Contracts axis k, the last one left in `data`, against exp(2 pi i z_k q_k).
template <class T>
std::vector<std::complex<double>> contract_axis(const ZGrid& zg, std::size_t k, const std::vector<T>& data, double qk) {
    const auto& ax = zg.axes[k];
    const std::size_t m = ax.size();
    std::vector<std::complex<double>> ph(m);
    for (std::size_t j = 0; j < m; ++j) {
        const double arg = 2.0 * std::numbers::pi * ax.x[j] * qk;
        ph[j] = {std::cos(arg), std::sin(arg)};
    }
    std::vector<std::complex<double>> next(data.size() / m);
    for (std::size_t r = 0; r < next.size(); ++r) {
        std::complex<double> s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += data[r * m + j] * ph[j];
        next[r] = s;
    }
    return next;
}

/// sum_z slice(z) exp(2 pi i z . q) over the first `axes` z-coordinates.
template <class T>
std::complex<double> z_transform(const ZGrid& zg, const std::vector<T>& slice, const std::vector<double>& q,
                                 std::size_t axes) {
    if (axes == 0) return slice.front();
    auto cur = contract_axis(zg, axes - 1, slice, q[axes - 1]);
    for (std::size_t k = axes - 1; k-- > 0;) cur = contract_axis(zg, k, cur, q[k]);
    return cur.front();
}

template <class T>
std::complex<double> z_transform(const ZGrid& zg, const std::vector<T>& slice, const std::vector<double>& q) {
    return z_transform(zg, slice, q, zg.axes.size());
}

}  // namespace detail

/// Integral of f^2 over the box.
inline double l2_norm_squared(const GroupSpec& spec, const GroupFunction& f, const GroupBox& box) {
    detail::check_box(spec, box);
    const auto zg = detail::z_grid(spec, box);
    const Rule ra = mapped(gauss_legendre(box.nodes), box.lo[0], box.hi[0]);
    std::vector<double> parts(ra.size());
    parallel_for(ra.size(), [&](std::size_t i) {
        std::vector<std::size_t> idx(zg.axes.size(), 0);
        GroupElement g{ra.x[i], std::vector<double>(zg.axes.size())};
        CompensatedSum s;
        for (std::size_t flat = 0; flat < zg.count; ++flat) {
            double w = 1.0;
            for (std::size_t k = 0; k < zg.axes.size(); ++k) {
                g.z[k] = zg.axes[k].x[idx[k]];
                w *= zg.axes[k].w[idx[k]];
            }
            const double v = f(g);
            s.add(w * v * v);
            for (std::size_t k = zg.axes.size(); k-- > 0;) {
                if (++idx[k] < zg.axes[k].size()) break;
                idx[k] = 0;
            }
        }
        parts[i] = ra.w[i] * s.value();
    });
    return pairwise_sum(parts);
}

/// Matrix of f^(pi_Lambda) = int f(g) pi_Lambda(g^{-1}) dg on the uniform grid
/// x_i = x_min + i h: entry (i, j) is h K(x_i, x_j), with K the integral kernel
/// K(x, y) = int dz f((y - x, z)^{-1}) exp(2 pi i z . q(x)).
inline Eigen::MatrixXcd gft_numeric(const GroupSpec& spec, const GroupFunction& f, const DualParameter& lam,
                                    const GroupBox& box, double x_min, double x_max, int points) {
    detail::check_box(spec, box);
    if (points < 2 || !(x_max > x_min)) throw std::invalid_argument("gft_numeric: bad x-grid");
    const auto c = phase_coefficients(spec, lam);
    const auto zg = detail::z_grid(spec, box);
    const double h = (x_max - x_min) / (points - 1);
    // slices indexed by d = j - i + points - 1
    std::vector<std::vector<double>> slices(static_cast<std::size_t>(2 * points - 1));
    parallel_for(slices.size(), [&](std::size_t d) {
        const double a = h * (static_cast<double>(d) - (points - 1));
        if (a < box.lo[0] || a > box.hi[0]) return;
        slices[d] = detail::inverse_slice(spec, f, zg, a);
    });
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(points, points);
    parallel_for(static_cast<std::size_t>(points), [&](std::size_t i) {
        const auto q = phase_gradient(c, x_min + h * static_cast<double>(i));
        for (int j = 0; j < points; ++j) {
            const auto& s = slices[static_cast<std::size_t>(j - static_cast<int>(i) + points - 1)];
            if (!s.empty()) m(static_cast<Eigen::Index>(i), j) = h * detail::z_transform(zg, s, q);
        }
    });
    return m;
}

struct PlancherelConfig {
    std::vector<double> q_radius;  ///< |q_k| beyond which the z-transform of f is negligible; n entries
    int x_nodes = 16;
    int lambda_nodes = 8;
    double refine = 0.5;
    double c_P = 1.0;
};

/// (int |f|^2 dg, int ||f^(pi_Lambda)||_HS^2 dP(Lambda)) for real f; the
/// second integral runs over lambda_{n-1} > 0 and is doubled.
inline std::pair<double, double> plancherel_check(const GroupSpec& spec, const GroupFunction& f, const GroupBox& box,
                                                  const PlancherelConfig& cfg) {
    detail::check_box(spec, box);
    if (spec.n < 2) throw std::invalid_argument("plancherel_check: needs n >= 2");
    detail::check_size(spec, cfg.q_radius.size(), "q_radius");
    const double lhs = l2_norm_squared(spec, f, box);
    const auto zg = detail::z_grid(spec, box);
    const Rule ra = mapped(gauss_legendre(box.nodes), box.lo[0], box.hi[0]);
    std::vector<std::vector<double>> slices(ra.size());
    parallel_for(ra.size(), [&](std::size_t i) { slices[i] = detail::inverse_slice(spec, f, zg, ra.x[i]); });

    // Dual-parameter nodes: a probe whose damping bounds |q_k| by q_radius, at a
    // time small enough that the heat-kernel cutoffs never bind.
    QuadratureConfig qc;
    qc.lambda_nodes.assign(static_cast<std::size_t>(spec.n - 1), cfg.lambda_nodes);
    qc.refine = cfg.refine;
    qc.c_P = cfg.c_P;
    Probe probe;
    for (int k = 0; k < spec.n; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        // |f^|^2 is not oscillatory: it varies on the scale of the inverse box width
        probe.z.push_back(0.125 * (box.hi[ku + 1] - box.lo[ku + 1]));
        probe.damping.push_back(std::sqrt(qc.decay_cut / 2.0) / (std::numbers::pi * cfg.q_radius[ku]));
    }
    const double tiny_t = 1e-12;
    const auto nodes = lambda_nodes(spec, tiny_t, {probe}, qc).nodes;
    const Rule base = gauss_legendre(cfg.x_nodes);
    std::vector<double> parts(nodes.size(), 0.0);
    parallel_for(nodes.size(), [&](std::size_t ni) {
        const auto c = phase_coefficients(spec, DualParameter{nodes[ni].lambda});
        std::vector<PolyBound> cons;
        for (std::size_t k = 0; k < c.size(); ++k) cons.push_back({detail::q_coefficients(c, k), cfg.q_radius[k]});
        if (std::abs(c.back()) >= cfg.q_radius.back()) return;
        // q_n = lambda_{n-1} for every x
        const std::size_t last = zg.axes.size() - 1;
        std::vector<std::vector<std::complex<double>>> reduced(ra.size());
        for (std::size_t j = 0; j < ra.size(); ++j) reduced[j] = detail::contract_axis(zg, last, slices[j], c.back());
        double hs = 0.0;
        for (const auto& iv : sublevel_intervals(cons)) {
            double tv = 0.0, prev = 0.0;
            for (int s = 0; s <= 32; ++s) {
                const auto q = phase_gradient(c, iv.lo + iv.length() * s / 32.0);
                double ph = 0.0;
                for (std::size_t k = 0; k < q.size(); ++k) ph += probe.z[k] * q[k];
                if (s > 0) tv += std::abs(ph - prev);
                prev = ph;
            }
            const int panels = static_cast<int>(std::ceil(cfg.refine * (2.0 + 1.5 * tv)));
            Rule rx;
            detail::append_panels(rx, base, iv.lo, iv.hi, panels);
            for (std::size_t i = 0; i < rx.size(); ++i) {
                const auto q = phase_gradient(c, rx.x[i]);
                double row = 0.0;
                for (std::size_t j = 0; j < ra.size(); ++j)
                    row += ra.w[j] * std::norm(detail::z_transform(zg, reduced[j], q, last));
                hs += rx.w[i] * row;
            }
        }
        parts[ni] = nodes[ni].weight * hs;
    });
    return {lhs, pairwise_sum(parts)};
}

/// Separable Gaussian exp(-a^2/2 sa^2 - |z|^2/2 sz^2) with a box of five widths per
/// axis and z-transform radii 0.7/sz * 1.2^k, small enough for the box quadrature to
/// resolve the transform.
struct PlancherelProfile {
    GroupFunction f;
    GroupBox box;
    PlancherelConfig cfg;
};

inline PlancherelProfile gaussian_profile(int n, double sa, double sz, int nodes = 24) {
    PlancherelProfile p;
    p.f = [sa, sz](const GroupElement& g) {
        double r = g.a * g.a / (sa * sa);
        for (double z : g.z) r += z * z / (sz * sz);
        return std::exp(-0.5 * r);
    };
    p.box.lo.assign(static_cast<std::size_t>(n + 1), -5.0 * sz);
    p.box.hi.assign(static_cast<std::size_t>(n + 1), 5.0 * sz);
    p.box.lo[0] = -5.0 * sa;
    p.box.hi[0] = 5.0 * sa;
    p.box.nodes = nodes;
    for (int k = 0; k < n; ++k) p.cfg.q_radius.push_back(0.7 / sz * std::pow(1.2, k));
    return p;
}

/// c_P making the Plancherel identity exact for f.
inline double calibrate_plancherel(const GroupSpec& spec, const GroupFunction& f, const GroupBox& box,
                                   PlancherelConfig cfg) {
    cfg.c_P = 1.0;
    const auto [lhs, rhs] = plancherel_check(spec, f, box, cfg);
    return lhs / rhs;
}

}  // namespace nilheat
