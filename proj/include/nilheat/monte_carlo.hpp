#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "nilheat/assembly.hpp"
#include "nilheat/lie.hpp"
#include "nilheat/parallel.hpp"
#include "nilheat/quadrature.hpp"

namespace nilheat {

struct SDEConfig {
    std::int64_t num_paths = 100000;
    int num_steps = 1000;
    double t = 0.5;
    std::uint64_t seed = 1;
    std::vector<double> bandwidth;  ///< n + 1 KDE bandwidths; empty: automatic
    bool antithetic = false;        ///< pair each path with its negated increments

    void validate(const GroupSpec& spec) const {
        if (num_paths < 2) throw std::invalid_argument("num_paths: must be >= 2");
        if (antithetic && num_paths % 2 != 0) throw std::invalid_argument("num_paths: must be even with antithetic");
        if (num_steps < 1) throw std::invalid_argument("num_steps: must be >= 1");
        if (!(t > 0.0)) throw std::invalid_argument("t: must be positive");
        if (!bandwidth.empty()) {
            if (bandwidth.size() != static_cast<std::size_t>(spec.n + 1))
                throw std::invalid_argument("bandwidth: expected n + 1 entries");
            for (double h : bandwidth)
                if (!(h > 0.0)) throw std::invalid_argument("bandwidth: entries must be positive");
        }
    }
};

struct DensityEstimate {
    double value = 0.0;
    double standard_error = 0.0;
};

/// Endpoint samples of the diffusion with a product-Gaussian kernel density estimate.
class EmpiricalDensity {
public:
    EmpiricalDensity(const GroupSpec& spec, double t, std::vector<GroupElement> samples, std::vector<double> bandwidth)
        : spec_(spec), t_(t), samples_(std::move(samples)), bandwidth_(std::move(bandwidth)) {
        if (bandwidth_.size() != static_cast<std::size_t>(spec.n + 1))
            throw std::invalid_argument("bandwidth: expected n + 1 entries");
    }

    const GroupSpec& spec() const { return spec_; }
    double t() const { return t_; }
    const std::vector<GroupElement>& samples() const { return samples_; }
    const std::vector<double>& bandwidth() const { return bandwidth_; }

    /// Estimate with the standard error of the sample mean of the kernel terms.
    DensityEstimate kde_eval(const GroupElement& x) const {
        detail::check_size(spec_, x.z.size(), "z");
        double norm = 1.0;
        for (double h : bandwidth_) norm *= h * std::sqrt(2.0 * std::numbers::pi);
        CompensatedSum s1, s2;
        for (const auto& g : samples_) {
            double q = (g.a - x.a) / bandwidth_[0];
            q *= q;
            for (std::size_t k = 0; k < g.z.size(); ++k) {
                const double d = (g.z[k] - x.z[k]) / bandwidth_[k + 1];
                q += d * d;
            }
            const double v = std::exp(-0.5 * q) / norm;
            s1.add(v);
            s2.add(v * v);
        }
        const double m = static_cast<double>(samples_.size());
        const double mean = s1.value() / m;
        const double var = std::max(0.0, s2.value() / m - mean * mean) * m / (m - 1.0);
        return {mean, std::sqrt(var / m)};
    }

private:
    GroupSpec spec_;
    double t_;
    std::vector<GroupElement> samples_;
    std::vector<double> bandwidth_;
};

/// Silverman's rule with the exact coordinate spreads sd(a) = sqrt(2t) and
/// sd(z_k) ~ t^{k/2}, so bandwidths follow the dilation weights.
inline std::vector<double> silverman_bandwidth(const GroupSpec& spec, double t, std::int64_t num_samples) {
    const double d = spec.n + 1;
    const double f = std::pow(4.0 / ((d + 2.0) * static_cast<double>(num_samples)), 1.0 / (d + 4.0));
    std::vector<double> h{f * std::sqrt(2.0 * t)};
    for (int k = 1; k <= spec.n; ++k) h.push_back(f * std::sqrt(coordinate_variance(k, t)));
    return h;
}

namespace detail {

inline constexpr std::int64_t kPathBlock = 4096;

inline std::mt19937_64 block_rng(std::uint64_t seed, std::int64_t block) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32)};
    return std::mt19937_64(seq);
}

/// Euler-Maruyama endpoints. With `pair` set, a second endpoint per path is taken on
/// the same Brownian path sampled at half the resolution (pairs of fine increments summed).
inline void simulate(const GroupSpec& spec, const SDEConfig& cfg, bool pair, std::vector<GroupElement>& fine,
                     std::vector<GroupElement>& coarse) {
    cfg.validate(spec);
    const int n = spec.n;
    const auto paths = cfg.num_paths;
    const int steps = pair ? 2 * cfg.num_steps : cfg.num_steps;
    const double dt = cfg.t / steps;
    const double sd = std::sqrt(2.0 * dt);
    fine.assign(static_cast<std::size_t>(paths), GroupElement{0.0, std::vector<double>(static_cast<std::size_t>(n))});
    if (pair) coarse = fine;
    const std::int64_t blocks = (paths + kPathBlock - 1) / kPathBlock;
    parallel_for(static_cast<std::size_t>(blocks), [&](std::size_t b) {
        auto rng = block_rng(cfg.seed, static_cast<std::int64_t>(b));
        std::normal_distribution<double> normal;
        const std::int64_t first = static_cast<std::int64_t>(b) * kPathBlock;
        const std::int64_t last = std::min(paths, first + kPathBlock);
        std::vector<double> dw1(static_cast<std::size_t>(steps)), dw2(static_cast<std::size_t>(steps));
        std::vector<double> pw(static_cast<std::size_t>(n));
        auto run = [&](GroupElement& out, int substeps) {
            // substeps fine increments per step
            double a = 0.0;
            std::vector<double> z(static_cast<std::size_t>(n), 0.0);
            for (int s = 0; s < steps; s += substeps) {
                double d1 = 0.0, d2 = 0.0;
                for (int j = 0; j < substeps; ++j) {
                    d1 += dw1[static_cast<std::size_t>(s + j)];
                    d2 += dw2[static_cast<std::size_t>(s + j)];
                }
                double p = 1.0;
                for (int k = 0; k < n; ++k) {
                    z[static_cast<std::size_t>(k)] += p * d2;
                    p *= a / (k + 1);
                }
                a += d1;
            }
            out.a = a;
            out.z = std::move(z);
        };
        for (std::int64_t i = first; i < last; ++i) {
            const bool mirror = cfg.antithetic && i % 2 == 1;
            if (mirror) {
                for (auto& v : dw1) v = -v;
                for (auto& v : dw2) v = -v;
            } else {
                for (int s = 0; s < steps; ++s) {
                    dw1[static_cast<std::size_t>(s)] = sd * normal(rng);
                    dw2[static_cast<std::size_t>(s)] = sd * normal(rng);
                }
            }
            run(fine[static_cast<std::size_t>(i)], 1);
            if (pair) run(coarse[static_cast<std::size_t>(i)], 2);
        }
    });
}

inline EmpiricalDensity make_density(const GroupSpec& spec, const SDEConfig& cfg, std::vector<GroupElement> s) {
    auto h = cfg.bandwidth.empty() ? silverman_bandwidth(spec, cfg.t, cfg.num_paths) : cfg.bandwidth;
    return EmpiricalDensity(spec, cfg.t, std::move(s), std::move(h));
}

}  // namespace detail

/// Endpoints at time t of da = sqrt(2) dW_1, dz_k = sqrt(2) a^{k-1}/(k-1)! dW_2 from
/// the identity. Paths are simulated in fixed blocks with one generator per block,
/// so the samples depend only on the seed.
inline EmpiricalDensity simulate_paths(const GroupSpec& spec, const SDEConfig& cfg) {
    std::vector<GroupElement> fine, unused;
    detail::simulate(spec, cfg, false, fine, unused);
    return detail::make_density(spec, cfg, std::move(fine));
}

/// (num_steps, 2 num_steps) endpoints driven by the same Brownian paths.
inline std::pair<EmpiricalDensity, EmpiricalDensity> simulate_step_pair(const GroupSpec& spec, const SDEConfig& cfg) {
    std::vector<GroupElement> fine, coarse;
    detail::simulate(spec, cfg, true, fine, coarse);
    return {detail::make_density(spec, cfg, std::move(coarse)), detail::make_density(spec, cfg, std::move(fine))};
}

/// CSV with columns path_id, a, z1..zn.
inline void write_samples_csv(std::ostream& os, const EmpiricalDensity& d) {
    os << "path_id,a";
    for (int k = 1; k <= d.spec().n; ++k) os << ",z" << k;
    os << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < d.samples().size(); ++i) {
        const auto& g = d.samples()[i];
        os << i << ',' << g.a;
        for (double z : g.z) os << ',' << z;
        os << '\n';
    }
}

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Survival function of the Kolmogorov distribution.
inline double kolmogorov_sf(double x) {
    if (x <= 0.0) return 1.0;
    if (x < 1.0) {
        // theta-function form, accurate for small x
        const double f = -std::numbers::pi * std::numbers::pi / (8.0 * x * x);
        double s = 0.0;
        for (int k = 1; k <= 7; k += 2) s += std::exp(f * k * k);
        return 1.0 - std::sqrt(2.0 * std::numbers::pi) / x * s;
    }
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * x * x);
        s += (k % 2 == 1 ? term : -term);
        if (term < 1e-18) break;
    }
    return std::clamp(2.0 * s, 0.0, 1.0);
}

/// One-sample KS test against Normal(0, sigma^2); p-value from the Kolmogorov
/// limit with Stephens' finite-sample correction.
inline KsResult ks_test_normal(std::vector<double> x, double sigma) {
    if (x.empty()) throw std::invalid_argument("ks_test_normal: no samples");
    std::sort(x.begin(), x.end());
    const double m = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = 0.5 * std::erfc(-x[i] / (sigma * std::numbers::sqrt2));
        d = std::max({d, (i + 1) / m - f, f - i / m});
    }
    const double sm = std::sqrt(m);
    return {d, kolmogorov_sf((sm + 0.12 + 0.11 / sm) * d)};
}

struct ComparisonRow {
    GroupElement point;
    double kde = 0.0;
    double kde_se = 0.0;
    double kernel = 0.0;
    double kernel_error = 0.0;
    double z = 0.0;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
    double max_abs_z = 0.0;
};

/// z = (kde - kernel) / sqrt(se^2 + trunc_error^2) per point. The kernel values
/// should be the bandwidth-smoothed kernel (heat_kernel_smoothed) at the KDE bandwidths.
inline ComparisonReport compare_density(const EmpiricalDensity& density, const std::vector<GroupElement>& points,
                                        const std::vector<KernelEstimate>& kernel_values) {
    if (points.size() != kernel_values.size()) throw std::invalid_argument("compare_density: size mismatch");
    ComparisonReport r;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto e = density.kde_eval(points[i]);
        ComparisonRow row{points[i], e.value, e.standard_error, kernel_values[i].value, kernel_values[i].trunc_error, 0.0};
        const double err = std::hypot(e.standard_error, kernel_values[i].trunc_error);
        row.z = (e.value - row.kernel) / err;
        r.max_abs_z = std::max(r.max_abs_z, std::abs(row.z));
        r.rows.push_back(std::move(row));
    }
    return r;
}

}  // namespace nilheat
