#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "nilheat/short_time.hpp"

using namespace nilheat;

namespace {

constexpr double kPi = std::numbers::pi;

/// Least-squares slope of log y against log t.
double loglog_slope(const std::vector<double>& t, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        mx += std::log(t[i]);
        my += std::log(y[i]);
    }
    mx /= t.size();
    my /= t.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        sxy += (std::log(t[i]) - mx) * (std::log(y[i]) - my);
        sxx += (std::log(t[i]) - mx) * (std::log(t[i]) - mx);
    }
    return sxy / sxx;
}

/// Mean of V over the segment by Gauss-Legendre on the parameter.
double segment_mean(const PolynomialPotential& v, double x, double y) {
    const Rule r = mapped(gauss_legendre(12), 0.0, 1.0);
    double s = 0;
    for (std::size_t i = 0; i < r.size(); ++i) s += r.w[i] * v(y + r.x[i] * (x - y));
    return s;
}

/// Expansion kernel assembled over H3 in closed form: Gaussian integrals in x and lambda.
double h3_expansion_closed_form(double t, const GroupElement& g) {
    const double a = g.a, b = g.z[0], c = g.z[1] - 0.5 * g.a * g.z[0];
    return std::exp(-(a * a + b * b) / (4 * t)) / (4 * kPi * t) * std::sqrt(3 / (kPi * t)) / std::abs(a) *
           std::exp(-3 * c * c / (t * a * a));
}

const std::vector<double> kTimes{0.02, 0.01, 0.005};

}  // namespace

TEST(PotentialCoefficients, HeisenbergIsPureQuadratic) {
    const auto e = potential_coefficients({{0.7}}, GroupSpec(2));
    ASSERT_EQ(e.a.size(), 3u);
    EXPECT_NEAR(e.a[0], 0.0, 1e-14);
    EXPECT_NEAR(e.a[1], 0.0, 1e-14);
    EXPECT_NEAR(e.a[2], 4 * kPi * kPi * 0.49, 1e-12);
}

TEST(PotentialCoefficients, SquaresTheRootPolynomial) {
    const auto e = potential_coefficients({{1.0, 1.0}}, GroupSpec(3));
    ASSERT_EQ(e.a.size(), 5u);
    const double c = 4 * kPi * kPi;
    const std::vector<double> expect{c, 0.0, c, 0.0, c / 4};
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(e.a[k], expect[k], 1e-12) << k;
}

TEST(PotentialCoefficients, ReproducePotentialOnGrid) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int n = 2; n <= 5; ++n) {
        const GroupSpec spec(n);
        DualParameter lam{std::vector<double>(static_cast<std::size_t>(n - 1))};
        for (auto& l : lam.lambda) l = u(rng);
        const auto e = potential_coefficients(lam, spec);
        const auto v = reduced_potential(spec, lam);
        EXPECT_EQ(e.a.size(), static_cast<std::size_t>(2 * n - 1));
        for (double x = -2; x <= 2; x += 0.05) EXPECT_NEAR(e(x), v(x), 1e-11 * (1 + v(x))) << n << ' ' << x;
    }
}

TEST(LineAveraged, DiagonalIsPotential) {
    const GroupSpec spec(4);
    const DualParameter lam{{0.3, -0.8, 1.1}};
    const auto p = line_averaged(potential_coefficients(lam, spec));
    const auto v = reduced_potential(spec, lam);
    for (double x = -2; x <= 2; x += 0.1) EXPECT_NEAR(p(x, x), v(x), 1e-10 * (1 + v(x)));
}

TEST(LineAveraged, QuadraticCase) {
    const LineAveragedPotential p{{0.0, 0.0, 1.0}};
    for (double x : {-1.0, 0.3, 2.0})
        for (double y : {-0.5, 0.0, 1.7}) EXPECT_NEAR(p(x, y), (x * x + x * y + y * y) / 3, 1e-14);
}

TEST(LineAveraged, SymmetricAndEqualToSegmentMean) {
    const GroupSpec spec(3);
    const DualParameter lam{{-0.6, 0.9}};
    const auto p = line_averaged(potential_coefficients(lam, spec));
    const auto v = reduced_potential(spec, lam);
    for (double x = -1.5; x <= 1.5; x += 0.25)
        for (double y = -1.5; y <= 1.5; y += 0.25) {
            EXPECT_NEAR(p(x, y), p(y, x), 1e-12 * (1 + std::abs(p(x, y))));
            EXPECT_NEAR(p(x, y), segment_mean(v, x, y), 1e-10 * (1 + std::abs(p(x, y))));
        }
}

TEST(ReducedKernelExpansion, FreeKernelWithoutPotential) {
    const LineAveragedPotential zero{{0.0}};
    const double t = 0.3;
    for (double x : {-0.4, 0.0, 0.9}) {
        const double free = std::exp(-(x - 0.2) * (x - 0.2) / (4 * t)) / std::sqrt(4 * kPi * t);
        EXPECT_DOUBLE_EQ(reduced_kernel_expansion(zero, t, x, 0.2), free);
        EXPECT_DOUBLE_EQ(reduced_kernel_expansion(zero, t, x, 0.2, ExpansionForm::linear), free);
    }
}

TEST(ReducedKernelExpansion, HarmonicRelativeErrorIsSecondOrder) {
    const double omega = 2 * kPi;
    const auto p = line_averaged(potential_coefficients({{1.0}}, GroupSpec(2)));
    std::vector<double> err;
    for (double t : kTimes) {
        const double exact = mehler_kernel(omega, t, 0.0, 0.0);
        err.push_back(std::abs(reduced_kernel_expansion(p, t, 0.0, 0.0) - exact) / exact);
    }
    const double slope = loglog_slope(kTimes, err);
    EXPECT_GE(slope, 1.7);
    EXPECT_LE(slope, 2.3);
}

TEST(ReducedKernelExpansion, QuarticErrorOrderAgainstSpectralKernel) {
    const GroupSpec spec(3);
    const DualParameter lam{{0.0, 1.0}};
    const auto p = line_averaged(potential_coefficients(lam, spec));
    SolverConfig sc;
    sc.num_modes = 768;
    const auto k = spectral_solve(reduced_potential(spec, lam), sc);
    std::vector<double> err;
    for (double t : kTimes) {
        const auto exact = kernel_eval(k, t, 0.0, 0.0);
        ASSERT_FALSE(exact.flagged) << t;
        err.push_back(std::abs(reduced_kernel_expansion(p, t, 0.0, 0.0) - exact.value));
        // within the configured validity horizon the expansion is within 10%
        EXPECT_LT(err.back() / exact.value, 0.1);
    }
    EXPECT_GE(loglog_slope(kTimes, err), 1.4);
}

TEST(ReducedKernelExpansion, ExponentialAndLinearFormsAgreeToSecondOrder) {
    const auto p = line_averaged(potential_coefficients({{0.4, 0.8}}, GroupSpec(3)));
    std::vector<double> diff;
    for (double t : kTimes) {
        const double e = reduced_kernel_expansion(p, t, 0.5, 0.5);
        const double l = reduced_kernel_expansion(p, t, 0.5, 0.5, ExpansionForm::linear);
        diff.push_back(std::abs(e - l) / e);
    }
    EXPECT_GE(loglog_slope(kTimes, diff), 1.8);
}

TEST(HeatKernelShortTime, HeisenbergMatchesClosedForm) {
    const GroupSpec spec(2);
    for (const GroupElement& g : {GroupElement{0.3, {0.1, 0.05}}, GroupElement{-0.2, {0.15, -0.02}}})
        for (double t : {0.04, 0.02}) {
            const auto e = heat_kernel_short_time(spec, t, g);
            const double ref = h3_expansion_closed_form(t, g);
            EXPECT_NEAR(e.value, ref, 1e-7 * ref) << t;
            EXPECT_TRUE(e.converged);
            EXPECT_TRUE(e.warning.empty());
        }
}

TEST(HeatKernelShortTime, IdentityScalesWithHomogeneousDimension) {
    const GroupSpec spec(2);
    std::vector<double> vals;
    for (double t : kTimes) vals.push_back(heat_kernel_short_time(spec, t, identity(spec)).value);
    EXPECT_NEAR(loglog_slope(kTimes, vals), -0.5 * spec.homogeneous_dim(), 0.1);
}

TEST(HeatKernelShortTime, SymmetricUnderInversion) {
    for (int n : {2, 3}) {
        const GroupSpec spec(n);
        GroupElement g{0.25, {0.1, 0.03}};
        if (n == 3) g.z.push_back(0.01);
        const double t = 0.02;
        const auto p = heat_kernel_short_time(spec, t, g);
        const auto q = heat_kernel_short_time(spec, t, inverse(spec, g));
        EXPECT_NEAR(p.value, q.value, 1e-4 * std::abs(p.value) + p.trunc_error + q.trunc_error) << n;
    }
}

TEST(HeatKernelShortTime, WarnsBeyondValidityHorizon) {
    const GroupSpec spec(2);
    const GroupElement g{0.3, {0.1, 0.05}};
    EXPECT_TRUE(heat_kernel_short_time(spec, 0.05, g).warning.empty());
    EXPECT_FALSE(heat_kernel_short_time(spec, 0.2, g).warning.empty());
    EXPECT_FALSE(heat_kernel_short_time(spec, 0.05, g, {}, 0.01).warning.empty());
}
