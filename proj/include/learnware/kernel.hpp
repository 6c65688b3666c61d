#pragma once

#include "learnware/types.hpp"

#include <cmath>
#include <string>

namespace learnware {

enum class KernelKind { gaussian };

// k(x, y) = exp(-gamma * |x - y|^2). k(x, x) = 1, so the kernel is bounded by one.
struct KernelSpec {
    KernelKind kind = KernelKind::gaussian;
    double gamma = 1.0;

    KernelSpec() = default;
    explicit KernelSpec(double g) : gamma(g) { validate(); }

    void validate() const {
        require(std::isfinite(gamma) && gamma > 0.0, "kernel gamma must be positive and finite");
    }

    friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

inline std::string to_string(KernelKind kind) {
    switch (kind) {
    case KernelKind::gaussian:
        return "gaussian";
    }
    return "unknown";
}

// Weighted sum of kernel sections: sum_i weights[i] * k(points.row(i), .).
// Weights are allowed to be negative.
struct WeightedPointSet {
    Matrix points;
    Vector weights;

    WeightedPointSet() = default;
    WeightedPointSet(Matrix p, Vector w) : points(std::move(p)), weights(std::move(w)) { validate(); }

    // Uniform 1/m weights: the empirical embedding of a sample.
    static WeightedPointSet empirical(Matrix p) {
        const auto m = p.rows();
        require(m >= 1, "empirical embedding needs at least one point");
        Vector w = Vector::Constant(m, 1.0 / static_cast<double>(m));
        return WeightedPointSet(std::move(p), std::move(w));
    }

    Eigen::Index size() const { return points.rows(); }
    Eigen::Index dim() const { return points.cols(); }

    void validate() const {
        require(points.rows() >= 1, "weighted point set needs at least one point");
        require(points.rows() == weights.size(), "weight count must equal point count");
        require(points.allFinite() && weights.allFinite(), "weighted point set has non-finite entries");
    }
};

namespace detail {

inline double squared_distance(const double* x, const double* y, Eigen::Index dim, Eigen::Index x_stride,
                               Eigen::Index y_stride) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < dim; ++c) {
        const double diff = x[c * x_stride] - y[c * y_stride];
        acc += diff * diff;
    }
    return acc;
}

} // namespace detail

template <typename A, typename B>
double eval_kernel(const KernelSpec& k, const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
    require(x.size() == y.size(), "kernel arguments differ in dimension");
    double acc = 0.0;
    for (Eigen::Index c = 0; c < x.size(); ++c) {
        const double diff = x(c) - y(c);
        acc += diff * diff;
    }
    return std::exp(-k.gamma * acc);
}

// G(i, j) = k(x_i, y_j).
inline Matrix gram(const KernelSpec& k, const Matrix& x, const Matrix& y) {
    require(x.cols() == y.cols(), "gram arguments differ in dimension");
    Matrix g(x.rows(), y.rows());
    const Eigen::Index dim = x.cols();
    for (Eigen::Index j = 0; j < y.rows(); ++j) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double sq = detail::squared_distance(&x.coeffRef(i, 0), &y.coeffRef(j, 0), dim, x.rows(), y.rows());
            g(i, j) = std::exp(-k.gamma * sq);
        }
    }
    return g;
}

// Symmetric gram of one set; evaluates each pair once.
inline Matrix gram(const KernelSpec& k, const Matrix& x) {
    const Eigen::Index n = x.rows();
    const Eigen::Index dim = x.cols();
    Matrix g(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        g(j, j) = 1.0;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            const double sq = detail::squared_distance(&x.coeffRef(i, 0), &x.coeffRef(j, 0), dim, n, n);
            g(i, j) = g(j, i) = std::exp(-k.gamma * sq);
        }
    }
    return g;
}

// <A, B>_H = wA' G(A, B) wB.
inline double rkhs_inner(const KernelSpec& k, const WeightedPointSet& a, const WeightedPointSet& b) {
    require(a.dim() == b.dim(), "rkhs_inner arguments differ in dimension");
    const Eigen::Index dim = a.dim();
    double total = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        double row = 0.0;
        for (Eigen::Index j = 0; j < b.size(); ++j) {
            const double sq =
                detail::squared_distance(&a.points.coeffRef(i, 0), &b.points.coeffRef(j, 0), dim, a.size(), b.size());
            row += std::exp(-k.gamma * sq) * b.weights(j);
        }
        total += a.weights(i) * row;
    }
    return total;
}

inline double rkhs_squared_norm(const KernelSpec& k, const WeightedPointSet& a) { return rkhs_inner(k, a, a); }

// |A - B|_H through the expanded quadratic form; negative round-off is clamped to zero.
// All three terms share one summation order, so identical sets give exactly zero.
inline double rkhs_distance(const KernelSpec& k, const WeightedPointSet& a, const WeightedPointSet& b) {
    require(a.dim() == b.dim(), "rkhs_distance arguments differ in dimension");
    const double sq = rkhs_inner(k, a, a) - 2.0 * rkhs_inner(k, a, b) + rkhs_inner(k, b, b);
    return std::sqrt(std::max(0.0, sq));
}

} // namespace learnware
