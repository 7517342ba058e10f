#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "nilheat/monte_carlo.hpp"

using namespace nilheat;

namespace {

SDEConfig small_config(double t, std::int64_t paths, int steps, std::uint64_t seed = 7) {
    SDEConfig c;
    c.t = t;
    c.num_paths = paths;
    c.num_steps = steps;
    c.seed = seed;
    return c;
}

struct Moments {
    double mean = 0, var = 0, se_mean = 0, se_var = 0;
};

template <class F>
Moments moments(const EmpiricalDensity& d, F f) {
    const double m = static_cast<double>(d.samples().size());
    double s1 = 0, s2 = 0, s4 = 0;
    for (const auto& g : d.samples()) {
        const double v = f(g);
        s1 += v;
        s2 += v * v;
    }
    Moments r;
    r.mean = s1 / m;
    r.var = s2 / m - r.mean * r.mean;
    for (const auto& g : d.samples()) {
        const double c = f(g) - r.mean;
        s4 += c * c * c * c;
    }
    r.se_mean = std::sqrt(r.var / m);
    r.se_var = std::sqrt((s4 / m - r.var * r.var) / m);
    return r;
}

}  // namespace

TEST(Kolmogorov, SurvivalFunctionMatchesReference) {
    // scipy.special.kolmogorov
    const std::vector<std::pair<double, double>> ref{{0.3, 0.9999906941986655},  {0.5, 0.9639452436648751},
                                                     {0.8, 0.5441424115741981},  {0.99, 0.2808738392255489},
                                                     {1.0, 0.26999967167735456}, {1.36, 0.049485876755377876},
                                                     {2.0, 0.0006709252557796953}, {3.0, 3.045995948942526e-08}};
    for (const auto& [x, p] : ref) EXPECT_NEAR(kolmogorov_sf(x), p, 1e-10 + 1e-8 * p) << x;
}

TEST(Kolmogorov, StatisticMatchesReference) {
    // scipy.stats.kstest(x, 'norm', args=(0, 1.3))
    const std::vector<double> x{-1.2, 0.3, 0.5, -0.1, 2.2, 0.9, -0.7, 0.05, 1.4, -2.0};
    const auto r = ks_test_normal(x, 1.3);
    EXPECT_NEAR(r.statistic, 0.1693423696033875, 1e-12);
    EXPECT_GT(r.p_value, 0.5);
}

TEST(SimulatePaths, SameSeedIsBitIdentical) {
    const GroupSpec spec(3);
    const auto c = small_config(0.5, 10000, 50);
    const auto a = simulate_paths(spec, c);
    const auto b = simulate_paths(spec, c);
    ASSERT_EQ(a.samples().size(), b.samples().size());
    for (std::size_t i = 0; i < a.samples().size(); ++i) {
        ASSERT_EQ(a.samples()[i].a, b.samples()[i].a);
        ASSERT_EQ(a.samples()[i].z, b.samples()[i].z);
    }
    auto c2 = c;
    c2.seed = 8;
    EXPECT_NE(simulate_paths(spec, c2).samples()[0].a, a.samples()[0].a);
}

TEST(SimulatePaths, FirstCoordinateIsBrownianMotion) {
    const GroupSpec spec(2);
    const double t = 0.5;
    const auto d = simulate_paths(spec, small_config(t, 20000, 100));
    std::vector<double> a;
    for (const auto& g : d.samples()) a.push_back(g.a);
    EXPECT_GT(ks_test_normal(a, std::sqrt(2 * t)).p_value, 0.01);
}

TEST(SimulatePaths, LowOrderMoments) {
    const GroupSpec spec(2);
    const double t = 0.5;
    const auto d = simulate_paths(spec, small_config(t, 50000, 200));
    const auto z1 = moments(d, [](const GroupElement& g) { return g.z[0]; });
    EXPECT_NEAR(z1.mean, 0.0, 3 * z1.se_mean);
    EXPECT_NEAR(z1.var, 2 * t, 3 * z1.se_var);
    const auto z2 = moments(d, [](const GroupElement& g) { return g.z[1]; });
    EXPECT_NEAR(z2.mean, 0.0, 3 * z2.se_mean);
    // covariance of (a, z1): a and z1 are driven by independent noises
    const auto cross = moments(d, [](const GroupElement& g) { return g.a * g.z[0]; });
    EXPECT_NEAR(cross.mean, 0.0, 3 * cross.se_mean);
    const auto a = moments(d, [](const GroupElement& g) { return g.a; });
    EXPECT_NEAR(a.var, 2 * t, 3 * a.se_var);
    // Euler-Maruyama leaves a relative bias of 1/num_steps in Var z2
    EXPECT_NEAR(z2.var, coordinate_variance(2, t) * (1 - 1.0 / 200), 3 * z2.se_var);
}

TEST(SimulatePaths, ConditionalMeanOfHigherCoordinatesVanishes) {
    const GroupSpec spec(3);
    const auto d = simulate_paths(spec, small_config(0.5, 40000, 100));
    // z_k given the a-path is a centred Gaussian: zero mean in every a-bin
    const std::vector<double> edges{-10, -0.8, -0.25, 0.25, 0.8, 10};
    for (int k = 1; k < 3; ++k)
        for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
            double s1 = 0, s2 = 0;
            int m = 0;
            for (const auto& g : d.samples())
                if (g.a >= edges[b] && g.a < edges[b + 1]) {
                    s1 += g.z[static_cast<std::size_t>(k)];
                    s2 += g.z[static_cast<std::size_t>(k)] * g.z[static_cast<std::size_t>(k)];
                    ++m;
                }
            ASSERT_GT(m, 1000);
            const double mean = s1 / m;
            const double se = std::sqrt((s2 / m - mean * mean) / m);
            EXPECT_NEAR(mean, 0.0, 3.5 * se) << k << ' ' << b;
        }
}

TEST(SimulatePaths, AntitheticPairsCancel) {
    const GroupSpec spec(2);
    auto c = small_config(0.5, 1000, 20);
    c.antithetic = true;
    const auto d = simulate_paths(spec, c);
    for (std::size_t i = 0; i < d.samples().size(); i += 2) {
        EXPECT_EQ(d.samples()[i].a, -d.samples()[i + 1].a);
        EXPECT_EQ(d.samples()[i].z[0], -d.samples()[i + 1].z[0]);
        // z2 is even in the increments
        EXPECT_NEAR(d.samples()[i].z[1], d.samples()[i + 1].z[1], 1e-12);
    }
    c.num_paths = 1001;
    EXPECT_THROW(simulate_paths(spec, c), std::invalid_argument);
}

TEST(SimulatePaths, StepHalvingWithinOneStandardError) {
    const GroupSpec spec(2);
    const auto [coarse, fine] = simulate_step_pair(spec, small_config(0.5, 100000, 100));
    for (const auto& p : {GroupElement{0, {0, 0}}, GroupElement{0.5, {-0.3, 0.2}}, GroupElement{-0.8, {0.6, -0.4}}}) {
        const auto c = coarse.kde_eval(p), f = fine.kde_eval(p);
        EXPECT_LT(std::abs(c.value - f.value), f.standard_error);
    }
}

TEST(SimulatePaths, CsvExport) {
    const GroupSpec spec(2);
    const auto d = simulate_paths(spec, small_config(0.5, 5, 4));
    std::ostringstream os;
    write_samples_csv(os, d);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "path_id,a,z1,z2");
    int rows = 0;
    while (std::getline(is, line)) {
        EXPECT_EQ(line.substr(0, line.find(',')), std::to_string(rows));
        ++rows;
    }
    EXPECT_EQ(rows, 5);
}

TEST(SimulatePaths, RejectsBadConfig) {
    const GroupSpec spec(2);
    EXPECT_THROW(simulate_paths(spec, small_config(-1, 100, 10)), std::invalid_argument);
    EXPECT_THROW(simulate_paths(spec, small_config(1, 100, 0)), std::invalid_argument);
    auto c = small_config(1, 100, 10);
    c.bandwidth = {0.1, 0.1};
    EXPECT_THROW(simulate_paths(spec, c), std::invalid_argument);
}

TEST(SilvermanBandwidth, FollowsDilationWeights) {
    const GroupSpec spec(3);
    const auto h1 = silverman_bandwidth(spec, 1.0, 1000);
    const auto h4 = silverman_bandwidth(spec, 4.0, 1000);
    EXPECT_NEAR(h4[0] / h1[0], 2.0, 1e-12);
    for (int k = 1; k <= 3; ++k) EXPECT_NEAR(h4[static_cast<std::size_t>(k)] / h1[static_cast<std::size_t>(k)], std::pow(2.0, k), 1e-12);
}

TEST(CompareDensity, TwoSeedsAgree) {
    const GroupSpec spec(2);
    const auto d1 = simulate_paths(spec, small_config(0.5, 20000, 50, 1));
    const auto d2 = simulate_paths(spec, small_config(0.5, 20000, 50, 2));
    std::vector<GroupElement> pts;
    std::vector<KernelEstimate> vals;
    for (double a : {-0.5, 0.0, 0.5})
        for (double b : {-0.5, 0.5}) {
            pts.push_back({a, {b, 0.1}});
            const auto e = d2.kde_eval(pts.back());
            vals.push_back({e.value, e.standard_error, "", true, {}});
        }
    EXPECT_LT(compare_density(d1, pts, vals).max_abs_z, 3.0);
}

TEST(CompareDensity, HeisenbergNearIdentity) {
    const GroupSpec spec(2);
    const auto d = simulate_paths(spec, small_config(0.5, 100000, 1000, 2024));
    std::vector<GroupElement> pts;
    for (double a : {-0.4, 0.0, 0.4})
        for (double c : {-0.3, 0.0, 0.3}) pts.push_back(h3_point(a, 0.2, c));
    const auto kernel = heat_kernel_smoothed(spec, 0.5, pts, d.bandwidth());
    const auto report = compare_density(d, pts, kernel);
    EXPECT_LT(report.max_abs_z, 3.0);
    // the comparison has power: the unsmoothed kernel is rejected
    std::vector<KernelEstimate> raw;
    for (const auto& p : pts) raw.push_back(heat_kernel_gn(spec, 0.5, p));
    EXPECT_GT(compare_density(d, pts, raw).max_abs_z, 3.0);
}

TEST(CompareDensity, FourStepIdentity) {
    const GroupSpec spec(3);
    const auto d = simulate_paths(spec, small_config(0.5, 100000, 1000, 99));
    const std::vector<GroupElement> pts{identity(spec)};
    const auto kernel = heat_kernel_smoothed(spec, 0.5, pts, d.bandwidth());
    EXPECT_LT(compare_density(d, pts, kernel).max_abs_z, 3.0);
}
