#include <random>

#include <boost/rational.hpp>
#include <gtest/gtest.h>

#include "nilheat/lie.hpp"
#include "oracles.hpp"

using namespace nilheat;

namespace {

GroupElement el(double a, std::vector<double> z) { return {a, std::move(z)}; }

void expect_near(const GroupElement& x, const GroupElement& y, double tol) {
    ASSERT_EQ(x.z.size(), y.z.size());
    EXPECT_NEAR(x.a, y.a, tol);
    for (std::size_t i = 0; i < x.z.size(); ++i) EXPECT_NEAR(x.z[i], y.z[i], tol) << "coordinate " << i;
}

}  // namespace

TEST(GroupSpec, RejectsOutOfRange) {
    EXPECT_THROW(GroupSpec(0), std::invalid_argument);
    EXPECT_THROW(GroupSpec(13), std::invalid_argument);
    EXPECT_EQ(GroupSpec(2).homogeneous_dim(), 4);
    EXPECT_EQ(GroupSpec(3).homogeneous_dim(), 7);
}

TEST(ExpCoordinates, KnownValues) {
    expect_near(exp_coordinates(GroupSpec(2), {2.0, {1.0, 0.0}}), el(2.0, {1.0, 1.0}), 1e-15);
    expect_near(exp_coordinates(GroupSpec(3), {1.0, {1.0, 0.0, 0.0}}), el(1.0, {1.0, 0.5, 1.0 / 6.0}), 1e-15);
    expect_near(exp_coordinates(GroupSpec(4), {0.0, {1.0, 2.0, 3.0, 4.0}}), el(0.0, {1, 2, 3, 4}), 0.0);
}

TEST(Multiply, KnownValues) {
    const GroupSpec s(2);
    expect_near(multiply(s, el(1, {1, 0}), el(1, {1, 0})), el(2, {2, 1}), 1e-15);
    expect_near(inverse(s, el(1, {1, 0})), el(-1, {-1, 1}), 1e-15);
    const GroupSpec s3(3);
    expect_near(multiply(s3, identity(s3), el(0.3, {1, -2, 5})), el(0.3, {1, -2, 5}), 0.0);
}

TEST(Multiply, RejectsMismatchedDimension) {
    EXPECT_THROW(multiply(GroupSpec(3), el(0, {1, 2}), el(0, {1, 2, 3})), std::invalid_argument);
}

TEST(GroupAxioms, AgreeWithMatrixOracle) {
    std::mt19937_64 rng(17);
    for (int n = 1; n <= 5; ++n) {
        const GroupSpec spec(n);
        for (int trial = 0; trial < 200; ++trial) {
            const auto g = oracle::random_element(spec, rng, 1.5);
            const auto h = oracle::random_element(spec, rng, 1.5);
            const auto k = oracle::random_element(spec, rng, 1.5);
            const auto gh = multiply(spec, g, h);
            EXPECT_LT(oracle::max_abs_diff(multiply(spec, gh, k), multiply(spec, g, multiply(spec, h, k))), 1e-10);
            EXPECT_LT(oracle::max_abs_diff(multiply(spec, g, inverse(spec, g)), identity(spec)), 1e-10);
            EXPECT_LT(oracle::max_abs_diff(multiply(spec, inverse(spec, g), g), identity(spec)), 1e-10);
            const auto via_matrix = oracle::from_group_matrix(
                spec, oracle::group_matrix(spec, g) * oracle::group_matrix(spec, h));
            EXPECT_LT(oracle::max_abs_diff(gh, via_matrix), 1e-10);
            const AlgebraElement x = log_coordinates(spec, g);
            EXPECT_LT(oracle::max_abs_diff(exp_coordinates(spec, x), g), 1e-10);
            const auto expm = oracle::from_group_matrix(spec, oracle::nilpotent_exp(oracle::algebra_matrix(spec, x)));
            EXPECT_LT(oracle::max_abs_diff(expm, g), 1e-10);
        }
    }
}

TEST(Bracket, StructureConstants) {
    const GroupSpec spec(4);
    for (int i = 0; i < 4; ++i) {
        AlgebraElement x{1.0, {0, 0, 0, 0}};
        AlgebraElement y{0.0, {0, 0, 0, 0}};
        y.b[static_cast<std::size_t>(i)] = 1.0;
        const auto r = bracket(spec, x, y);
        for (int j = 0; j < 4; ++j) EXPECT_EQ(r.b[static_cast<std::size_t>(j)], (j == i + 1) ? 1.0 : 0.0);
    }
}

TEST(Bracket, MatchesMatrixCommutator) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int n = 1; n <= 5; ++n) {
        const GroupSpec spec(n);
        for (int trial = 0; trial < 50; ++trial) {
            AlgebraElement x{u(rng), {}}, y{u(rng), {}};
            for (int i = 0; i < n; ++i) {
                x.b.push_back(u(rng));
                y.b.push_back(u(rng));
            }
            const auto mx = oracle::algebra_matrix(spec, x);
            const auto my = oracle::algebra_matrix(spec, y);
            const auto ref = oracle::from_algebra_matrix(spec, mx * my - my * mx);
            const auto got = bracket(spec, x, y);
            EXPECT_NEAR(got.a, ref.a, 1e-14);
            for (int i = 0; i < n; ++i)
                EXPECT_NEAR(got.b[static_cast<std::size_t>(i)], ref.b[static_cast<std::size_t>(i)], 1e-14);
        }
    }
}

TEST(Bracket, JacobiIdentityExactOnRationals) {
    using Q = boost::rational<long long>;
    const GroupSpec spec(5);
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> num(-9, 9), den(1, 7);
    auto rnd = [&] { return Q(num(rng), den(rng)); };
    for (int trial = 0; trial < 200; ++trial) {
        BasicAlgebraElement<Q> x{rnd(), {}}, y{rnd(), {}}, z{rnd(), {}};
        for (int i = 0; i < spec.n; ++i) {
            x.b.push_back(rnd());
            y.b.push_back(rnd());
            z.b.push_back(rnd());
        }
        const auto t1 = bracket(spec, x, bracket(spec, y, z));
        const auto t2 = bracket(spec, y, bracket(spec, z, x));
        const auto t3 = bracket(spec, z, bracket(spec, x, y));
        EXPECT_EQ(t1.a + t2.a + t3.a, Q(0));
        for (int i = 0; i < spec.n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            EXPECT_EQ(t1.b[k] + t2.b[k] + t3.b[k], Q(0));
        }
    }
}

TEST(LeftInvariantFrame, KnownValueAndInvariance) {
    const GroupSpec spec(3);
    const auto f = left_invariant_frame(spec, el(2.0, {0.1, 0.2, 0.3}));
    EXPECT_EQ(f.x1, (std::vector<double>{1, 0, 0, 0}));
    EXPECT_EQ(f.x2, (std::vector<double>{0, 1, 2, 2}));

    // X2 at g is the pushforward of Y_1 at e under left translation by g.
    std::mt19937_64 rng(3);
    for (int n = 1; n <= 5; ++n) {
        const GroupSpec s(n);
        const auto g = oracle::random_element(s, rng);
        const double eps = 1e-6;
        GroupElement step = identity(s);
        step.z[0] = eps;
        const auto plus = multiply(s, g, step);
        step.z[0] = -eps;
        const auto minus = multiply(s, g, step);
        const auto fr = left_invariant_frame(s, g);
        for (int k = 0; k < n; ++k) {
            const auto i = static_cast<std::size_t>(k);
            EXPECT_NEAR((plus.z[i] - minus.z[i]) / (2 * eps), fr.x2[i + 1], 1e-8);
        }
    }
}

TEST(LeftInvariantFrame, HormanderRankIsFull) {
    std::mt19937_64 rng(21);
    for (int n = 1; n <= 8; ++n) {
        const GroupSpec spec(n);
        for (int trial = 0; trial < 5; ++trial)
            EXPECT_EQ(hormander_rank(spec, oracle::random_element(spec, rng, 2.0)), n + 1);
    }
}
