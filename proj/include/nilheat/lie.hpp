#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nilheat {

inline constexpr int kMaxSteps = 12;

/// Threadlike group G_{n+1}: basis X, Y_1..Y_n with [X, Y_i] = Y_{i+1}.
struct GroupSpec {
    int n;

    explicit GroupSpec(int steps) : n(steps) {
        if (n < 1 || n > kMaxSteps)
            throw std::invalid_argument("n: expected 1 <= n <= 12, got " + std::to_string(n));
    }
    int dim() const { return n + 1; }
    /// Homogeneous dimension 1 + sum_k k.
    int homogeneous_dim() const { return 1 + n * (n + 1) / 2; }
};

template <class T>
struct BasicAlgebraElement {
    T a{};
    std::vector<T> b;
};
using AlgebraElement = BasicAlgebraElement<double>;

/// Point (a, z_1..z_n) in second-kind coordinates.
struct GroupElement {
    double a = 0.0;
    std::vector<double> z;
};

inline double factorial(int k) {
    static const auto table = [] {
        std::array<double, 2 * kMaxSteps + 4> f{};
        f[0] = 1.0;
        for (std::size_t i = 1; i < f.size(); ++i) f[i] = f[i - 1] * static_cast<double>(i);
        return f;
    }();
    if (k < 0 || static_cast<std::size_t>(k) >= table.size())
        throw std::out_of_range("factorial argument out of range");
    return table[static_cast<std::size_t>(k)];
}

/// a^k / k! for k = 0..m-1.
inline std::vector<double> scaled_powers(double a, int m) {
    std::vector<double> p(static_cast<std::size_t>(std::max(m, 0)));
    double v = 1.0;
    for (int k = 0; k < m; ++k) {
        p[static_cast<std::size_t>(k)] = v;
        v *= a / static_cast<double>(k + 1);
    }
    return p;
}

namespace detail {
inline void check_size(const GroupSpec& spec, std::size_t got, const char* what) {
    if (got != static_cast<std::size_t>(spec.n))
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(spec.n) +
                                    " coordinates, got " + std::to_string(got));
}
}  // namespace detail

inline GroupElement identity(const GroupSpec& spec) {
    return {0.0, std::vector<double>(static_cast<std::size_t>(spec.n), 0.0)};
}

/// exp(aX + sum b_i Y_i): z_j = sum_{k<j} a^k b_{j-k} / (k+1)!.
inline GroupElement exp_coordinates(const GroupSpec& spec, const AlgebraElement& x) {
    detail::check_size(spec, x.b.size(), "b");
    GroupElement g{x.a, std::vector<double>(x.b.size(), 0.0)};
    for (int j = 1; j <= spec.n; ++j) {
        double s = 0.0;
        double ak = 1.0;
        for (int k = 0; k < j; ++k) {
            s += ak * x.b[static_cast<std::size_t>(j - k - 1)] / factorial(k + 1);
            ak *= x.a;
        }
        g.z[static_cast<std::size_t>(j - 1)] = s;
    }
    return g;
}

/// Inverse of exp_coordinates by forward substitution.
inline AlgebraElement log_coordinates(const GroupSpec& spec, const GroupElement& g) {
    detail::check_size(spec, g.z.size(), "z");
    AlgebraElement x{g.a, std::vector<double>(g.z.size(), 0.0)};
    for (int j = 1; j <= spec.n; ++j) {
        double s = g.z[static_cast<std::size_t>(j - 1)];
        double ak = g.a;
        for (int k = 1; k < j; ++k) {
            s -= ak * x.b[static_cast<std::size_t>(j - k - 1)] / factorial(k + 1);
            ak *= g.a;
        }
        x.b[static_cast<std::size_t>(j - 1)] = s;
    }
    return x;
}

/// z''_k = z_k + sum_{i<k} a^i/i! z'_{k-i}.
inline GroupElement multiply(const GroupSpec& spec, const GroupElement& g, const GroupElement& h) {
    detail::check_size(spec, g.z.size(), "z");
    detail::check_size(spec, h.z.size(), "z");
    const auto pw = scaled_powers(g.a, spec.n);
    GroupElement r{g.a + h.a, g.z};
    for (int k = 1; k <= spec.n; ++k) {
        double s = 0.0;
        for (int i = 0; i < k; ++i) s += pw[static_cast<std::size_t>(i)] * h.z[static_cast<std::size_t>(k - i - 1)];
        r.z[static_cast<std::size_t>(k - 1)] += s;
    }
    return r;
}

inline GroupElement inverse(const GroupSpec& spec, const GroupElement& g) {
    detail::check_size(spec, g.z.size(), "z");
    const auto pw = scaled_powers(g.a, spec.n);
    GroupElement r{-g.a, std::vector<double>(g.z.size(), 0.0)};
    for (int k = 1; k <= spec.n; ++k) {
        double s = -g.z[static_cast<std::size_t>(k - 1)];
        for (int i = 1; i < k; ++i) s -= pw[static_cast<std::size_t>(i)] * r.z[static_cast<std::size_t>(k - i - 1)];
        r.z[static_cast<std::size_t>(k - 1)] = s;
    }
    return r;
}

/// [u, v]: coefficient of Y_{i+1} is u.a v.b_i - v.a u.b_i.
template <class T>
BasicAlgebraElement<T> bracket(const GroupSpec& spec, const BasicAlgebraElement<T>& u,
                               const BasicAlgebraElement<T>& v) {
    detail::check_size(spec, u.b.size(), "b");
    detail::check_size(spec, v.b.size(), "b");
    BasicAlgebraElement<T> r{T{}, std::vector<T>(u.b.size(), T{})};
    for (std::size_t i = 0; i + 1 < u.b.size(); ++i) r.b[i + 1] = u.a * v.b[i] - v.a * u.b[i];
    return r;
}

/// Left-invariant fields at g in the chart basis (d/da, d/dz_1..d/dz_n).
struct Frame {
    std::vector<double> x1;
    std::vector<double> x2;
};

inline Frame left_invariant_frame(const GroupSpec& spec, const GroupElement& g) {
    detail::check_size(spec, g.z.size(), "z");
    Frame f{std::vector<double>(static_cast<std::size_t>(spec.dim()), 0.0),
            std::vector<double>(static_cast<std::size_t>(spec.dim()), 0.0)};
    f.x1[0] = 1.0;
    const auto pw = scaled_powers(g.a, spec.n);
    for (int k = 1; k <= spec.n; ++k) f.x2[static_cast<std::size_t>(k)] = pw[static_cast<std::size_t>(k - 1)];
    return f;
}

/// Columns X1, X2, [X1,X2], [X1,[X1,X2]], ... evaluated at g.
inline Eigen::MatrixXd iterated_brackets(const GroupSpec& spec, const GroupElement& g) {
    detail::check_size(spec, g.z.size(), "z");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(spec.dim(), spec.dim());
    m(0, 0) = 1.0;
    const auto pw = scaled_powers(g.a, spec.n);
    // ad_{X1}^j X2 = sum_{k>j} a^{k-1-j}/(k-1-j)! d/dz_k
    for (int j = 0; j < spec.n; ++j)
        for (int k = j + 1; k <= spec.n; ++k) m(k, j + 1) = pw[static_cast<std::size_t>(k - 1 - j)];
    return m;
}

inline int hormander_rank(const GroupSpec& spec, const GroupElement& g) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(iterated_brackets(spec, g));
    return static_cast<int>(lu.rank());
}

}  // namespace nilheat
