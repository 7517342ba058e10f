#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nilheat/lie.hpp"
#include "nilheat/local_kernel.hpp"
#include "nilheat/orbit.hpp"
#include "nilheat/parallel.hpp"
#include "nilheat/quadrature.hpp"
#include "nilheat/schrodinger.hpp"

namespace nilheat {

enum class QuadratureRule { tensor_gauss_legendre, tanh_sinh };
enum class ReducedPath { automatic, mehler, spectral };

struct QuadratureConfig {
    std::vector<double> lambda_box;  ///< per-axis radii; empty or 0 entries: automatic
    std::vector<int> lambda_nodes;   ///< nodes per panel per axis; empty: 12
    double x_radius = 0.0;           ///< 0: automatic
    int x_nodes = 16;                ///< nodes per x panel
    QuadratureRule rule = QuadratureRule::tensor_gauss_legendre;
    double decay_cut = 30.0;  ///< drop regions where the reduced kernel is below exp(-decay_cut)
    double mode_cut = 30.0;   ///< keep eigenmodes with (E - E_0) t below this
    double refine = 1.0;      ///< panel density multiplier
    double c_P = 1.0;
    bool estimate_error = true;
    double tolerance = 1e-5;  ///< relative
    ReducedPath path = ReducedPath::automatic;

    void validate() const {
        for (double r : lambda_box)
            if (r < 0.0) throw std::invalid_argument("lambda_box: radii must be > 0");
        for (int k : lambda_nodes)
            if (k < 8) throw std::invalid_argument("lambda_nodes: node counts must be >= 8");
        if (x_nodes < 8) throw std::invalid_argument("x_nodes: node count must be >= 8");
        if (x_radius < 0.0) throw std::invalid_argument("x_radius: must be >= 0");
        if (!(decay_cut > 0.0) || !(mode_cut > 0.0)) throw std::invalid_argument("decay_cut/mode_cut: must be positive");
        if (!(refine > 0.0)) throw std::invalid_argument("refine: must be positive");
        if (!(c_P > 0.0)) throw std::invalid_argument("c_P: must be positive");
        if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance: must be positive");
    }

    /// FNV-1a over a canonical text form.
    std::string hash() const {
        std::ostringstream os;
        os.precision(17);
        for (double r : lambda_box) os << r << ',';
        os << '|';
        for (int k : lambda_nodes) os << k << ',';
        os << '|' << x_radius << '|' << x_nodes << '|' << static_cast<int>(rule) << '|' << decay_cut << '|' << mode_cut
           << '|' << refine << '|' << c_P << '|' << estimate_error << '|' << tolerance << '|' << static_cast<int>(path);
        std::uint64_t h = 1469598103934665603ULL;
        for (unsigned char ch : os.str()) {
            h ^= ch;
            h *= 1099511628211ULL;
        }
        std::ostringstream hex;
        hex << std::hex << h;
        return hex.str();
    }
};

struct KernelEstimate {
    double value = 0.0;
    double trunc_error = 0.0;
    std::string config_hash;
    bool converged = true;
    std::string warning;  ///< empty unless the estimate is outside its validity range
};

/// One linear functional of p_t evaluated by the assembler:
///   scale * sum_j w_j (p_t * G_h)(a_j, z)         (a_terms)
///   scale * int da (p_t * G_h)(a, z)              (integrate_a)
/// where G_h is a centred Gaussian in z with per-coordinate widths `damping`.
struct Probe {
    std::vector<double> z;
    std::vector<std::pair<double, double>> a_terms{{0.0, 1.0}};
    bool integrate_a = false;
    std::vector<double> damping;
    double scale = 1.0;
};

inline Probe point_probe(const GroupElement& g) { return Probe{g.z, {{g.a, 1.0}}, false, {}, 1.0}; }

/// Replacement for the reduced heat kernel k_t(x, y) of a node's potential.
using KernelOverride = std::function<double(const PolynomialPotential&, double x, double y)>;

struct LambdaNode {
    std::vector<double> lambda;
    double weight;    ///< quadrature weight times |lambda_{n-1}|, both signs of lambda_{n-1}, and c_P
    std::size_t top;  ///< index of the lambda_{n-1} node
};

/// Panels of the lambda_{n-1} axis; each holds one copy of `reference` mapped
/// onto [lo, hi], top nodes first .. first + reference.size() - 1.
struct TopPanel {
    double lo, hi;
    std::size_t first;
};

struct LambdaGrid {
    std::vector<LambdaNode> nodes;
    Rule reference;
    std::vector<TopPanel> panels;
    std::vector<double> top_lambda, top_weight;
};

namespace detail {

inline Rule panel_rule(const QuadratureConfig& cfg, int nodes) {
    if (cfg.rule == QuadratureRule::tanh_sinh) return tanh_sinh(nodes % 2 == 1 ? nodes : nodes + 1);
    return gauss_legendre(nodes);
}

inline int axis_nodes(const QuadratureConfig& cfg, std::size_t axis) {
    return axis < cfg.lambda_nodes.size() ? cfg.lambda_nodes[axis] : 12;
}

inline double axis_box(const QuadratureConfig& cfg, std::size_t axis, double fallback) {
    return axis < cfg.lambda_box.size() && cfg.lambda_box[axis] > 0.0 ? cfg.lambda_box[axis] : fallback;
}

/// Bound on |q_k| beyond which every probe's Gaussian damping is below exp(-cut).
inline std::vector<double> damping_bounds(int n, const std::vector<Probe>& probes, double cut) {
    std::vector<double> r(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    for (int k = 0; k < n; ++k) {
        double worst = 0.0;
        for (const auto& p : probes) {
            const double h = p.damping.empty() ? 0.0 : p.damping[static_cast<std::size_t>(k)];
            if (h <= 0.0) {
                worst = std::numeric_limits<double>::infinity();
                break;
            }
            worst = std::max(worst, std::sqrt(cut / 2.0) / (std::numbers::pi * h));
        }
        r[static_cast<std::size_t>(k)] = worst;
    }
    return r;
}

inline double max_abs_z(const std::vector<Probe>& probes, int k) {
    double m = 0.0;
    for (const auto& p : probes) m = std::max(m, std::abs(p.z[static_cast<std::size_t>(k)]));
    return m;
}

inline void append_panels(Rule& out, const Rule& base, double lo, double hi, int panels) {
    if (!(hi > lo) || panels < 1) return;
    const double w = (hi - lo) / panels;
    for (int p = 0; p < panels; ++p) {
        const Rule m = mapped(base, lo + w * p, lo + w * (p + 1));
        out.x.insert(out.x.end(), m.x.begin(), m.x.end());
        out.w.insert(out.w.end(), m.w.begin(), m.w.end());
    }
}

inline void add_top_panels(LambdaGrid& g, double lo, double hi, int panels) {
    if (!(hi > lo) || panels < 1) return;
    const double w = (hi - lo) / panels;
    for (int p = 0; p < panels; ++p) {
        const double a = lo + w * p, b = lo + w * (p + 1);
        g.panels.push_back({a, b, g.top_lambda.size()});
        const Rule m = mapped(g.reference, a, b);
        g.top_lambda.insert(g.top_lambda.end(), m.x.begin(), m.x.end());
        g.top_weight.insert(g.top_weight.end(), m.w.begin(), m.w.end());
    }
}

/// Per top node, (int l_j(s) e^{i omega s} ds) e^{-i omega s_j} / w_j with l_j the
/// Lagrange basis of its panel: multiplying the plain weights by these factors
/// integrates smooth(s) e^{i omega s} exactly up to interpolation error.
inline std::vector<std::complex<double>> filon_factors(const LambdaGrid& g, double omega) {
    std::vector<std::complex<double>> out(g.top_lambda.size(), 1.0);
    if (omega == 0.0) return out;
    const Rule& ref = g.reference;
    const std::size_t m = ref.size();
    std::vector<double> bary(m, 1.0);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = 0; k < m; ++k)
            if (k != j) bary[j] /= ref.x[j] - ref.x[k];
    for (const auto& panel : g.panels) {
        const double s = 0.5 * (panel.hi - panel.lo);
        const double kappa = omega * s;
        const int fine_n = static_cast<int>(2 * m + std::ceil(2.0 * std::abs(kappa)));
        const Rule fine = gauss_legendre(fine_n);
        std::vector<std::complex<double>> mom(m, 0.0);
        std::vector<double> l(m);
        for (std::size_t f = 0; f < fine.size(); ++f) {
            const double tau = fine.x[f];
            double denom = 0.0;
            std::size_t exact = m;
            for (std::size_t j = 0; j < m; ++j) {
                const double d = tau - ref.x[j];
                if (d == 0.0) exact = j;
                l[j] = bary[j] / d;
                denom += l[j];
            }
            const std::complex<double> e(std::cos(kappa * tau), std::sin(kappa * tau));
            for (std::size_t j = 0; j < m; ++j) {
                const double lj = exact < m ? (j == exact ? 1.0 : 0.0) : l[j] / denom;
                mom[j] += fine.w[f] * lj * e;
            }
        }
        for (std::size_t j = 0; j < m; ++j) {
            const double tj = ref.x[j];
            const std::complex<double> back(std::cos(kappa * tj), -std::sin(kappa * tj));
            out[panel.first + j] = mom[j] * back / ref.w[j];
        }
    }
    return out;
}

}  // namespace detail

/// Quadrature nodes over the generic dual parameters with lambda_{n-1} > 0. The
/// factor exp(2 pi i z_n lambda_{n-1}) is left to Filon weights, so panel counts
/// do not grow with z_n.
inline LambdaGrid lambda_nodes(const GroupSpec& spec, double t, const std::vector<Probe>& probes,
                               const QuadratureConfig& cfg) {
    const int n = spec.n;
    const double cut = cfg.decay_cut;
    const auto r = detail::damping_bounds(n, probes, cut);
    const double rho = std::sqrt(cut / t) / (2.0 * std::numbers::pi);
    LambdaGrid g;
    g.reference = detail::panel_rule(cfg, detail::axis_nodes(cfg, static_cast<std::size_t>(n - 2)));
    auto push = [&](std::vector<double> lam, double w, std::size_t top) {
        const double v = lam.back();
        g.nodes.push_back({std::move(lam), w * v * 2.0 * cfg.c_P, top});
    };
    if (n == 2) {
        const double lmax = detail::axis_box(cfg, 0, std::min(cut / (2.0 * std::numbers::pi * t), r[1]));
        const double z1 = detail::max_abs_z(probes, 0);
        // geometric panels resolve the O(1) scales near lambda = 0 when lmax is large
        const int levels = std::max(0, static_cast<int>(std::ceil(std::log2(lmax))));
        const int per = static_cast<int>(std::ceil(cfg.refine * (2.0 + z1 * std::sqrt(lmax) / (levels + 1))));
        double lo = 0.0;
        for (int k = levels; k >= 0; --k) {
            const double hi = lmax * std::ldexp(1.0, -k);
            detail::add_top_panels(g, lo, hi, per);
            lo = hi;
        }
        for (std::size_t i = 0; i < g.top_lambda.size(); ++i) push({g.top_lambda[i]}, g.top_weight[i], i);
        return g;
    }
    if (n == 3) {
        // lambda_2 on geometric panels
        const double l2max =
            detail::axis_box(cfg, 1, std::min(std::pow(cut / (0.8 * t), 1.5) / std::numbers::pi, r[2]));
        const Rule base1 = detail::panel_rule(cfg, detail::axis_nodes(cfg, 0));
        const double z1 = detail::max_abs_z(probes, 0), z2 = detail::max_abs_z(probes, 1);
        double lo = 0.0;
        for (int k = 8; k >= 0; --k) {
            const double hi = l2max * std::ldexp(1.0, -k);
            detail::add_top_panels(g, lo, hi, static_cast<int>(std::ceil(cfg.refine)));
            lo = hi;
        }
        const double rho1 = std::min(rho, r[0]);
        for (std::size_t j = 0; j < g.top_lambda.size(); ++j) {
            const double l2 = g.top_lambda[j];
            double l1min = -std::pow(cut / (0.8 * 2.0 * std::numbers::pi * t), 2) / (2.0 * l2);
            if (std::isfinite(r[1])) l1min = std::max(l1min, -rho1 - r[1] * r[1] / (2.0 * l2));
            if (cfg.lambda_box.size() > 0 && cfg.lambda_box[0] > 0.0) l1min = std::max(l1min, -cfg.lambda_box[0]);
            // lambda_1 = rho1 - u^2, d lambda_1 = 2 u du
            const double umax = std::sqrt(rho1 - l1min);
            const double u1 = std::min(umax, std::sqrt(2.0 * rho1));
            Rule ru;
            detail::append_panels(ru, base1, 0.0, u1, static_cast<int>(std::ceil(cfg.refine * (2.0 + 2.0 * z1 * rho1))));
            if (umax > u1) {
                const double osc = z2 * std::sqrt(2.0 * l2) * (umax - u1) + z1 * rho1;
                detail::append_panels(ru, base1, u1, umax,
                                      static_cast<int>(std::ceil(cfg.refine * (cut / 6.0 + 1.5 * osc))));
            }
            for (std::size_t i = 0; i < ru.size(); ++i) {
                const double u = ru.x[i];
                push({rho1 - u * u, l2}, g.top_weight[j] * ru.w[i] * 2.0 * u, j);
            }
        }
        return g;
    }
    // n >= 4: tensor box, lambda_{n-1} in (0, R], the rest in [-R_k, R_k]
    if (cfg.lambda_box.size() != static_cast<std::size_t>(n - 1))
        throw std::invalid_argument("lambda_box: n >= 4 needs an explicit radius per axis");
    std::vector<Rule> axes;
    for (int k = 0; k < n - 2; ++k) {
        const double radius = cfg.lambda_box[static_cast<std::size_t>(k)];
        const int panels = static_cast<int>(std::ceil(cfg.refine * (2.0 + 1.5 * detail::max_abs_z(probes, k) * radius)));
        Rule rk;
        detail::append_panels(rk, detail::panel_rule(cfg, detail::axis_nodes(cfg, static_cast<std::size_t>(k))), -radius,
                              radius, panels);
        axes.push_back(std::move(rk));
    }
    detail::add_top_panels(g, 0.0, cfg.lambda_box.back(), static_cast<int>(std::ceil(cfg.refine * 2.0)));
    for (std::size_t j = 0; j < g.top_lambda.size(); ++j) {
        std::vector<std::size_t> idx(axes.size(), 0);
        for (;;) {
            std::vector<double> lam(axes.size() + 1);
            double w = g.top_weight[j];
            for (std::size_t k = 0; k < axes.size(); ++k) {
                lam[k] = axes[k].x[idx[k]];
                w *= axes[k].w[idx[k]];
            }
            lam.back() = g.top_lambda[j];
            push(std::move(lam), w, j);
            std::size_t k = 0;
            while (k < axes.size() && ++idx[k] == axes[k].size()) idx[k++] = 0;
            if (k == axes.size()) break;
        }
    }
    return g;
}

namespace detail {

/// Coefficients (power basis in x) of q_k(x) = sum_{j>=k} c_j x^{j-k} / (j-k)!.
inline std::vector<double> q_coefficients(const std::vector<double>& c, std::size_t k) {
    std::vector<double> out;
    for (std::size_t j = k; j < c.size(); ++j) out.push_back(c[j] / factorial(static_cast<int>(j - k)));
    return out;
}

struct ProbeLayout {
    std::vector<double> a_values;                   ///< distinct shifts
    std::vector<std::vector<std::pair<std::size_t, double>>> terms;  ///< per probe: (a index, weight)
    double a_min = 0.0, a_max = 0.0;
    bool any_integrated = false;
};

inline ProbeLayout layout_probes(const std::vector<Probe>& probes, double t, double cut) {
    ProbeLayout l;
    for (const auto& p : probes) {
        std::vector<std::pair<std::size_t, double>> terms;
        if (p.integrate_a) {
            l.any_integrated = true;
        } else {
            for (const auto& [a, w] : p.a_terms) {
                auto it = std::find(l.a_values.begin(), l.a_values.end(), a);
                std::size_t idx = static_cast<std::size_t>(it - l.a_values.begin());
                if (it == l.a_values.end()) l.a_values.push_back(a);
                terms.emplace_back(idx, w);
                l.a_min = std::min(l.a_min, a);
                l.a_max = std::max(l.a_max, a);
            }
        }
        l.terms.push_back(std::move(terms));
    }
    if (l.any_integrated) {
        const double spread = std::sqrt(4.0 * t * cut) + LocalKernel::wall_reach(t);
        l.a_min = std::min(l.a_min, -spread);
        l.a_max = std::max(l.a_max, spread);
    }
    return l;
}

/// Mehler kernel integrated over its first argument.
inline double mehler_mass(double omega, double t, double x) {
    const double u = 2.0 * omega * t;
    const double c = u_coth(u);
    const double s = std::exp(log_u_over_sinh(u));
    return std::exp(0.5 * (log_u_over_sinh(u) - std::log(c)) - x * x * (c - s * s / c) / (4.0 * t));
}

/// Contribution of one dual-parameter node to every probe (before the node weight).
inline std::vector<std::complex<double>> node_integrals(const GroupSpec& spec, double t, const LambdaNode& node,
                                                        const std::vector<Probe>& probes, const ProbeLayout& layout,
                                                        const std::vector<double>& qbounds, const QuadratureConfig& cfg,
                                                        bool use_mehler, const KernelOverride& custom) {
    const std::size_t np = probes.size();
    std::vector<std::complex<double>> out(np, 0.0);
    const auto c = phase_coefficients(spec, DualParameter{node.lambda});
    const double cut = cfg.decay_cut;
    const double rho = std::sqrt(cut / t) / (2.0 * std::numbers::pi);
    std::vector<PolyBound> cons{{q_coefficients(c, 0), rho}};
    for (std::size_t k = 0; k < c.size(); ++k)
        if (std::isfinite(qbounds[k])) cons.push_back({q_coefficients(c, k), qbounds[k]});
    if (cfg.x_radius > 0.0) cons.push_back({{0.0, 1.0}, cfg.x_radius});
    for (std::size_t k = 0; k < c.size(); ++k)
        if (std::isfinite(qbounds[k]) && q_coefficients(c, k).size() == 1 && !(std::abs(c.back()) < qbounds[k]))
            return out;
    std::vector<Interval> ivs = sublevel_intervals(cons);
    if (ivs.empty()) return out;
    const double dil = 2.0 * std::sqrt(t);
    for (auto& iv : ivs) {
        iv.lo -= dil;
        iv.hi += dil;
    }
    ivs = merge_intervals(std::move(ivs));

    std::vector<double> root(c.size());
    for (std::size_t k = 0; k < c.size(); ++k) root[k] = c[k] / factorial(static_cast<int>(k));
    const auto v = PolynomialPotential::from_root(root);
    const double omega = use_mehler ? 2.0 * std::numbers::pi * std::abs(c.back()) : 0.0;

    LocalKernel lk;
    const Rule gh = custom && layout.any_integrated ? gauss_hermite_functions(24) : Rule{};
    if (!use_mehler && !custom) {
        std::vector<std::pair<double, double>> margins;
        const double reach = LocalKernel::wall_reach(t);
        for (const auto& iv : ivs) {
            auto m = [&](double x) { return t * v(x) >= cut ? dil : reach + dil; };
            margins.emplace_back(m(iv.lo), m(iv.hi));
        }
        LocalKernelConfig lc;
        lc.mode_cut = cfg.mode_cut;
        lc.decay_cut = cfg.decay_cut;
        lk = LocalKernel(v, t, ivs, layout.a_min, layout.a_max, margins, lc);
    }

    const Rule base = panel_rule(cfg, cfg.x_nodes);
    const double two_pi = 2.0 * std::numbers::pi;
    std::vector<double> kvals(layout.a_values.size());
    for (const auto& iv : ivs) {
        // oscillation of the phase across the interval, in cycles
        double tv = 0.0;
        for (const auto& p : probes) {
            double prev = 0.0, total = 0.0;
            for (int s = 0; s <= 32; ++s) {
                const double x = iv.lo + iv.length() * s / 32.0;
                const auto q = phase_gradient(c, x);
                double ph = 0.0;
                for (std::size_t k = 0; k < q.size(); ++k) ph += p.z[k] * q[k];
                if (s > 0) total += std::abs(ph - prev);
                prev = ph;
            }
            tv = std::max(tv, total);
        }
        const int panels = static_cast<int>(std::ceil(cfg.refine * (1.0 + iv.length() / (2.0 * std::sqrt(t)) + 1.5 * tv)));
        Rule rx;
        append_panels(rx, base, iv.lo, iv.hi, panels);
        for (std::size_t i = 0; i < rx.size(); ++i) {
            const double x = rx.x[i];
            const auto q = phase_gradient(c, x);
            double mass = 0.0;
            if (custom) {
                for (std::size_t j = 0; j < kvals.size(); ++j) kvals[j] = custom(v, x + layout.a_values[j], x);
                if (layout.any_integrated) {
                    // y = x + 2 sqrt(t) u; the kernel carries its own Gaussian factor
                    for (std::size_t j = 0; j < gh.size(); ++j)
                        mass += gh.w[j] * 2.0 * std::sqrt(t) * custom(v, x + 2.0 * std::sqrt(t) * gh.x[j], x);
                }
            } else if (use_mehler) {
                for (std::size_t j = 0; j < kvals.size(); ++j) kvals[j] = mehler_kernel(omega, t, x + layout.a_values[j], x);
                if (layout.any_integrated) mass = mehler_mass(omega, t, x);
            } else {
                const int w = lk.window_of(x);
                const Eigen::VectorXd fx = lk.features(w, x);
                for (std::size_t j = 0; j < kvals.size(); ++j)
                    kvals[j] = layout.a_values[j] == 0.0 ? fx.squaredNorm() : lk.features(w, x + layout.a_values[j]).dot(fx);
                if (layout.any_integrated) mass = lk.mass(w, fx);
            }
            for (std::size_t p = 0; p < np; ++p) {
                const auto& pr = probes[p];
                double ph = 0.0, damp = 0.0;
                for (std::size_t k = 0; k < q.size(); ++k) {
                    ph += pr.z[k] * q[k];
                    if (!pr.damping.empty()) damp += pr.damping[k] * pr.damping[k] * q[k] * q[k];
                }
                double kp = 0.0;
                if (pr.integrate_a) {
                    kp = mass;
                } else {
                    for (const auto& [j, w] : layout.terms[p]) kp += w * kvals[j];
                }
                const double amp = rx.w[i] * kp * std::exp(-2.0 * std::numbers::pi * std::numbers::pi * damp);
                out[p] += amp * std::complex<double>(std::cos(two_pi * ph), std::sin(two_pi * ph));
            }
        }
    }
    return out;
}

inline bool mehler_path(const GroupSpec& spec, const QuadratureConfig& cfg) {
    if (cfg.path == ReducedPath::mehler) {
        if (spec.n != 2) throw std::invalid_argument("path: the closed-form path needs n = 2");
        return true;
    }
    return cfg.path == ReducedPath::automatic && spec.n == 2;
}

}  // namespace detail

/// Probe values sum over nodes of weight * Re(node integral) * scale.
inline std::vector<double> assemble_probes(const GroupSpec& spec, double t, const std::vector<Probe>& probes,
                                           const QuadratureConfig& cfg, const KernelOverride& custom = {}) {
    if (!(t > 0.0)) throw std::invalid_argument("t: must be positive");
    if (spec.n < 2) throw std::invalid_argument("assemble_probes: needs n >= 2");
    cfg.validate();
    for (const auto& p : probes) {
        detail::check_size(spec, p.z.size(), "z");
        if (!p.damping.empty()) detail::check_size(spec, p.damping.size(), "damping");
    }
    const bool mehler = !custom && detail::mehler_path(spec, cfg);
    const auto grid = lambda_nodes(spec, t, probes, cfg);
    const auto& nodes = grid.nodes;
    const auto layout = detail::layout_probes(probes, t, cfg.decay_cut);
    const auto qb = detail::damping_bounds(spec.n, probes, cfg.decay_cut);
    std::vector<std::vector<std::complex<double>>> filon;
    for (const auto& p : probes) filon.push_back(detail::filon_factors(grid, 2.0 * std::numbers::pi * p.z.back()));
    std::vector<std::vector<double>> parts(probes.size(), std::vector<double>(nodes.size(), 0.0));
    parallel_for(nodes.size(), [&](std::size_t i) {
        const auto vals = detail::node_integrals(spec, t, nodes[i], probes, layout, qb, cfg, mehler, custom);
        for (std::size_t p = 0; p < probes.size(); ++p)
            parts[p][i] = nodes[i].weight * (filon[p][nodes[i].top] * vals[p]).real();
    });
    std::vector<double> out(probes.size());
    for (std::size_t p = 0; p < probes.size(); ++p) out[p] = pairwise_sum(parts[p]) * probes[p].scale;
    return out;
}

namespace detail {

inline std::vector<KernelEstimate> estimates(const GroupSpec& spec, double t, const std::vector<Probe>& probes,
                                             const QuadratureConfig& cfg, const KernelOverride& custom = {}) {
    const auto fine = assemble_probes(spec, t, probes, cfg, custom);
    std::vector<double> coarse(fine.size(), 0.0);
    if (cfg.estimate_error) {
        QuadratureConfig c = cfg;
        c.refine = 0.6 * cfg.refine;
        c.decay_cut = 0.8 * cfg.decay_cut;
        c.mode_cut = 0.8 * cfg.mode_cut;
        coarse = assemble_probes(spec, t, probes, c, custom);
    }
    const double floor = 1e-12 * std::pow(t, -0.5 * spec.homogeneous_dim());
    std::vector<KernelEstimate> out;
    for (std::size_t i = 0; i < fine.size(); ++i) {
        KernelEstimate e;
        e.value = fine[i];
        e.trunc_error = cfg.estimate_error ? std::abs(fine[i] - coarse[i]) : 0.0;
        e.config_hash = cfg.hash();
        e.converged = e.trunc_error <= cfg.tolerance * std::abs(e.value) + floor;
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace detail

/// p_t at each point of G_{n+1}, all points sharing one dual-parameter quadrature.
inline std::vector<KernelEstimate> heat_kernel_batch(const GroupSpec& spec, double t, const std::vector<GroupElement>& g,
                                                     const QuadratureConfig& cfg = {}) {
    if (!(t > 0.0)) throw std::invalid_argument("t: must be positive");
    if (spec.n == 1) {
        // abelian: Euclidean heat kernel on R^2
        std::vector<KernelEstimate> out;
        for (const auto& p : g) {
            detail::check_size(spec, p.z.size(), "z");
            const double r2 = p.a * p.a + p.z[0] * p.z[0];
            out.push_back({std::exp(-r2 / (4.0 * t)) / (4.0 * std::numbers::pi * t), 0.0, cfg.hash(), true, {}});
        }
        return out;
    }
    std::vector<Probe> probes;
    for (const auto& p : g) probes.push_back(point_probe(p));
    return detail::estimates(spec, t, probes, cfg);
}

inline KernelEstimate heat_kernel_gn(const GroupSpec& spec, double t, const GroupElement& g,
                                     const QuadratureConfig& cfg = {}) {
    return heat_kernel_batch(spec, t, {g}, cfg).front();
}

/// H_3 in exponential coordinates exp(aX + bY + cZ), evaluated on the closed-form path.
inline GroupElement h3_point(double a, double b, double c) { return {a, {b, c + 0.5 * a * b}}; }

inline KernelEstimate heat_kernel_h3(double t, double a, double b, double c, QuadratureConfig cfg = {}) {
    cfg.path = ReducedPath::mehler;
    return heat_kernel_gn(GroupSpec(2), t, h3_point(a, b, c), cfg);
}

/// Variance of z_k at time t for the diffusion started at the identity.
inline double coordinate_variance(int k, double t) {
    const int m = k - 1;
    double dfact = 1.0;
    for (int i = 2 * m - 1; i > 1; i -= 2) dfact *= i;
    return 2.0 * dfact * std::pow(2.0, m) * std::pow(t, m + 1) / ((m + 1) * factorial(m) * factorial(m));
}

struct NormalizationResult {
    double value = 0.0;        ///< integral of p_t against the window
    double trunc_error = 0.0;
    double window_mass = 1.0;  ///< expected value of the window under p_t, to leading order
};

/// Integral of p_t over G_{n+1} against the window prod_k exp(-z_k^2 / 2 Z_k^2),
/// Z_k = width * sd(z_k). The a-direction is integrated exactly.
inline NormalizationResult normalization(const GroupSpec& spec, double t, const QuadratureConfig& cfg = {},
                                         double width = 40.0) {
    Probe p;
    p.z.assign(static_cast<std::size_t>(spec.n), 0.0);
    p.integrate_a = true;
    NormalizationResult r;
    r.window_mass = 1.0;
    for (int k = 1; k <= spec.n; ++k) {
        const double zk = width * std::sqrt(coordinate_variance(k, t));
        p.damping.push_back(zk);
        p.scale *= std::sqrt(2.0 * std::numbers::pi) * zk;
        r.window_mass -= coordinate_variance(k, t) / (2.0 * zk * zk);
    }
    if (spec.n == 1) {
        r.value = r.window_mass;
        return r;
    }
    const auto e = detail::estimates(spec, t, {p}, cfg).front();
    r.value = e.value;
    r.trunc_error = e.trunc_error;
    return r;
}

/// Expected value of a product-Gaussian kernel density estimate with bandwidths
/// h = (h_a, h_z1, .., h_zn) centred at each point.
inline std::vector<KernelEstimate> heat_kernel_smoothed(const GroupSpec& spec, double t,
                                                        const std::vector<GroupElement>& g,
                                                        const std::vector<double>& bandwidth,
                                                        const QuadratureConfig& cfg = {}, int a_nodes = 24) {
    if (bandwidth.size() != static_cast<std::size_t>(spec.n + 1))
        throw std::invalid_argument("bandwidth: expected n + 1 entries");
    const Rule gh = gauss_hermite_functions(a_nodes);
    std::vector<Probe> probes;
    for (const auto& p : g) {
        Probe pr;
        pr.z = p.z;
        pr.damping.assign(bandwidth.begin() + 1, bandwidth.end());
        pr.a_terms.clear();
        for (std::size_t j = 0; j < gh.size(); ++j) {
            const double y = gh.x[j];
            pr.a_terms.emplace_back(p.a + std::sqrt(2.0) * bandwidth[0] * y,
                                    gh.w[j] * std::exp(-y * y) / std::sqrt(std::numbers::pi));
        }
        probes.push_back(std::move(pr));
    }
    return detail::estimates(spec, t, probes, cfg);
}

}  // namespace nilheat
