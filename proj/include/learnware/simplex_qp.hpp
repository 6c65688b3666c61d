#pragma once

// min_w  w'Cw - 2c'w  subject to w >= 0, sum w = 1.
// Frank-Wolfe with away steps and exact line search; the objective is a
// quadratic so the step along any direction is available in closed form.

#include "learnware/types.hpp"

#include <algorithm>
#include <limits>

namespace learnware {

struct SimplexQpOptions {
    double gap_tolerance = 1e-8;
    int max_iters = 500;
};

struct SimplexQpResult {
    Vector w;
    double objective = 0.0;
    double gap = 0.0;
    int iterations = 0;
};

inline double simplex_qp_objective(const Matrix& C, const Vector& c, const Vector& w) {
    return w.dot(C * w) - 2.0 * c.dot(w);
}

inline SimplexQpResult minimize_on_simplex(const Matrix& C, const Vector& c, const SimplexQpOptions& opts = {}) {
    const Eigen::Index k = c.size();
    require(k >= 1, "simplex problem needs at least one coordinate");
    require(C.rows() == k && C.cols() == k, "quadratic term must be square and match the linear term");
    require(C.allFinite() && c.allFinite(), "simplex problem has non-finite entries");

    // start from the best vertex
    Eigen::Index start = 0;
    for (Eigen::Index i = 1; i < k; ++i) {
        if (C(i, i) - 2.0 * c(i) < C(start, start) - 2.0 * c(start)) {
            start = i;
        }
    }
    SimplexQpResult out;
    out.w = Vector::Zero(k);
    out.w(start) = 1.0;
    Vector cw = C.col(start);

    for (out.iterations = 0; out.iterations < opts.max_iters; ++out.iterations) {
        const Vector grad = 2.0 * (cw - c);
        Eigen::Index s = 0;
        for (Eigen::Index i = 1; i < k; ++i) {
            if (grad(i) < grad(s)) {
                s = i;
            }
        }
        Eigen::Index v = -1;
        for (Eigen::Index i = 0; i < k; ++i) {
            if (out.w(i) > 0.0 && (v < 0 || grad(i) > grad(v))) {
                v = i;
            }
        }
        const double gw = grad.dot(out.w);
        out.gap = gw - grad(s);
        if (out.gap <= opts.gap_tolerance) {
            break;
        }
        const double away_gap = grad(v) - gw;

        Vector d;
        double max_step = 0.0;
        if (out.gap >= away_gap) {
            d = -out.w;
            d(s) += 1.0;
            max_step = 1.0;
        } else {
            d = out.w;
            d(v) -= 1.0;
            max_step = out.w(v) / (1.0 - out.w(v));
        }
        const Vector cd = C * d;
        const double slope = grad.dot(d);
        const double curvature = d.dot(cd);
        double step = max_step;
        if (curvature > 0.0) {
            step = std::clamp(-slope / (2.0 * curvature), 0.0, max_step);
        }
        if (step <= 0.0) {
            break;
        }
        out.w += step * d;
        cw += step * cd;
        if (step == max_step && out.gap < away_gap) {
            out.w(v) = 0.0; // drop step: remove the vertex exactly
        }
        out.w = out.w.cwiseMax(0.0);
        out.w /= out.w.sum();
        cw = C * out.w;
    }
    out.objective = simplex_qp_objective(C, c, out.w);
    return out;
}

} // namespace learnware
