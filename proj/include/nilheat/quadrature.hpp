#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace nilheat {

struct Rule {
    std::vector<double> x;
    std::vector<double> w;
    std::size_t size() const { return x.size(); }
};

/// Gauss-Legendre on [-1, 1] by Newton iteration on P_N.
inline Rule gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
    Rule r{std::vector<double>(static_cast<std::size_t>(n)), std::vector<double>(static_cast<std::size_t>(n))};
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        const auto lo = static_cast<std::size_t>(i);
        const auto hi = static_cast<std::size_t>(n - 1 - i);
        r.x[lo] = -x;
        r.x[hi] = x;
        r.w[lo] = w;
        r.w[hi] = w;
    }
    if (n % 2 == 1) r.x[static_cast<std::size_t>(n / 2)] = 0.0;
    return r;
}

/// Tanh-sinh rule on [-1, 1] with n (odd) nodes.
inline Rule tanh_sinh(int n) {
    if (n < 3) throw std::invalid_argument("tanh_sinh: n must be at least 3");
    const int k = n / 2;
    const double tmax = 3.0;
    const double h = tmax / k;
    const double half_pi = std::numbers::pi / 2.0;
    Rule r;
    for (int i = -k; i <= k; ++i) {
        const double t = i * h;
        const double u = half_pi * std::sinh(t);
        const double c = std::cosh(u);
        r.x.push_back(std::tanh(u));
        r.w.push_back(h * half_pi * std::cosh(t) / (c * c));
    }
    return r;
}

/// Affine map of a [-1, 1] rule onto [lo, hi].
inline Rule mapped(const Rule& base, double lo, double hi) {
    Rule r = base;
    const double c = 0.5 * (hi + lo);
    const double s = 0.5 * (hi - lo);
    for (std::size_t i = 0; i < r.size(); ++i) {
        r.x[i] = c + s * base.x[i];
        r.w[i] = s * base.w[i];
    }
    return r;
}

/// Composite rule: one copy of base on each [breaks[i], breaks[i+1]].
inline Rule composite(const Rule& base, const std::vector<double>& breaks) {
    Rule r;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        const Rule p = mapped(base, breaks[i], breaks[i + 1]);
        r.x.insert(r.x.end(), p.x.begin(), p.x.end());
        r.w.insert(r.w.end(), p.w.begin(), p.w.end());
    }
    return r;
}

inline std::vector<double> uniform_breaks(double lo, double hi, int panels) {
    std::vector<double> b(static_cast<std::size_t>(panels + 1));
    for (int i = 0; i <= panels; ++i) b[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / panels;
    return b;
}

/// Normalized Hermite functions psi_0..psi_{m-1} at y. Uses a running exponent
/// so that high orders far from the origin do not underflow through psi_0.
inline void hermite_functions(double y, int m, double* out) {
    if (m <= 0) return;
    const double pi_q = std::pow(std::numbers::pi, -0.25);
    double scale = -0.5 * y * y;  // log of the factor carried outside the mantissas
    double prev = 0.0;
    double cur = pi_q;
    out[0] = cur * std::exp(scale);
    for (int j = 0; j + 1 < m; ++j) {
        const double next = std::sqrt(2.0 / (j + 1)) * y * cur - std::sqrt(static_cast<double>(j) / (j + 1)) * prev;
        prev = cur;
        cur = next;
        if (std::abs(cur) > 1e150) {
            prev *= 1e-150;
            cur *= 1e-150;
            scale += 150.0 * std::numbers::ln10;
        }
        out[j + 1] = cur * std::exp(scale);
    }
}

inline std::vector<double> hermite_functions(double y, int m) {
    std::vector<double> v(static_cast<std::size_t>(std::max(m, 0)));
    hermite_functions(y, m, v.data());
    return v;
}

/// Gauss-Hermite nodes with function weights: sum_k w_k f(y_k) ~ int f(y) dy for
/// f = psi_i psi_j q with deg q small. Nodes from the Jacobi matrix, polished by Newton.
inline Rule gauss_hermite_functions(int n) {
    if (n < 1) throw std::invalid_argument("gauss_hermite: n must be positive");
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd off(std::max(n - 1, 0));
    for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(0.5 * k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    if (n > 1) es.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);
    Rule r{std::vector<double>(static_cast<std::size_t>(n)), std::vector<double>(static_cast<std::size_t>(n))};
    std::vector<double> psi(static_cast<std::size_t>(n + 1));
    for (int i = 0; i < n; ++i) {
        double y = n > 1 ? es.eigenvalues()(i) : 0.0;
        for (int it = 0; it < 3; ++it) {
            // ratio recurrence rho_j = psi_j / psi_{j-1}
            double rho = std::sqrt(2.0) * y;
            for (int j = 1; j < n; ++j) rho = std::sqrt(2.0 / (j + 1)) * y - std::sqrt(static_cast<double>(j) / (j + 1)) / rho;
            const double step = rho / (std::sqrt(2.0 * n) - y * rho);
            y -= step;
            if (std::abs(step) < 1e-15 * (1.0 + std::abs(y))) break;
        }
        hermite_functions(y, n, psi.data());
        const double last = psi[static_cast<std::size_t>(n - 1)];
        r.x[static_cast<std::size_t>(i)] = y;
        r.w[static_cast<std::size_t>(i)] = 1.0 / (n * last * last);
    }
    return r;
}

/// Neumaier compensated accumulator.
class CompensatedSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

class ComplexCompensatedSum {
public:
    void add(std::complex<double> v) {
        re_.add(v.real());
        im_.add(v.imag());
    }
    std::complex<double> value() const { return {re_.value(), im_.value()}; }

private:
    CompensatedSum re_, im_;
};

/// Pairwise summation in index order.
template <class T>
T pairwise_sum(const T* v, std::size_t n) {
    if (n == 0) return T{};
    if (n <= 8) {
        T s = v[0];
        for (std::size_t i = 1; i < n; ++i) s += v[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

template <class T>
T pairwise_sum(const std::vector<T>& v) {
    return pairwise_sum(v.data(), v.size());
}

}  // namespace nilheat
