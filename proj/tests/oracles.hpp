#pragma once

// Independent reference computations. None of these call into the code paths
// they are used to check.

#include "learnware/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace learnware::oracles {

inline double gauss(double gamma, double a, double b) { return std::exp(-gamma * (a - b) * (a - b)); }

struct GridOptimum {
    double objective = std::numeric_limits<double>::infinity();
    double t1 = 0.0;
    double t2 = 0.0;
};

// Brute force over (t1, t2) on a 0.01 grid for 1-D data, beta solved exactly
// by Cramer's rule, objective expanded term by term.
inline GridOptimum reduced_set_grid_1d(const std::vector<double>& z, double gamma, double step = 0.01) {
    const double m = static_cast<double>(z.size());
    double constant = 0.0;
    for (double a : z) {
        for (double b : z) {
            constant += gauss(gamma, a, b);
        }
    }
    constant /= m * m;
    double lo = z[0];
    double hi = z[0];
    for (double v : z) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    lo -= 0.5;
    hi += 0.5;
    const auto cells = static_cast<int>(std::ceil((hi - lo) / step));
    std::vector<double> mean_k(static_cast<std::size_t>(cells) + 1);
    for (int i = 0; i <= cells; ++i) {
        const double t = lo + step * i;
        double acc = 0.0;
        for (double v : z) {
            acc += gauss(gamma, t, v);
        }
        mean_k[static_cast<std::size_t>(i)] = acc / m;
    }
    GridOptimum best;
    for (int i = 0; i <= cells; ++i) {
        for (int j = i + 1; j <= cells; ++j) {
            const double t1 = lo + step * i;
            const double t2 = lo + step * j;
            const double k12 = gauss(gamma, t1, t2);
            const double det = 1.0 - k12 * k12;
            if (det < 1e-12) {
                continue;
            }
            const double c1 = mean_k[static_cast<std::size_t>(i)];
            const double c2 = mean_k[static_cast<std::size_t>(j)];
            const double b1 = (c1 - k12 * c2) / det;
            const double b2 = (c2 - k12 * c1) / det;
            const double f = b1 * b1 + b2 * b2 + 2.0 * b1 * b2 * k12 - 2.0 * (b1 * c1 + b2 * c2) + constant;
            if (f < best.objective) {
                best = GridOptimum{f, t1, t2};
            }
        }
    }
    return best;
}

// Minimum of w'Cw - 2c'w over a simplex grid of the given step, for 2 or 3 coordinates.
inline std::pair<double, std::vector<double>> simplex_grid(const std::vector<std::vector<double>>& C,
                                                           const std::vector<double>& c, double step = 0.001) {
    const std::size_t k = c.size();
    const int steps = static_cast<int>(std::lround(1.0 / step));
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> best_w(k, 0.0);
    auto eval = [&](const std::vector<double>& w) {
        double f = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                f += w[i] * C[i][j] * w[j];
            }
            f -= 2.0 * c[i] * w[i];
        }
        return f;
    };
    std::vector<double> w(k, 0.0);
    if (k == 1) {
        w[0] = 1.0;
        return {eval(w), w};
    }
    for (int a = 0; a <= steps; ++a) {
        if (k == 2) {
            w[0] = a * step;
            w[1] = 1.0 - w[0];
            const double f = eval(w);
            if (f < best) {
                best = f;
                best_w = w;
            }
            continue;
        }
        for (int b = 0; a + b <= steps; ++b) {
            w[0] = a * step;
            w[1] = b * step;
            w[2] = 1.0 - w[0] - w[1];
            const double f = eval(w);
            if (f < best) {
                best = f;
                best_w = w;
            }
        }
    }
    return {best, best_w};
}

// Spearman rank correlation (average ranks for ties).
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            idx[i] = i;
        }
        std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
        std::vector<double> r(v.size());
        std::size_t i = 0;
        while (i < idx.size()) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) {
                ++j;
            }
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t t = i; t <= j; ++t) {
                r[idx[t]] = avg;
            }
            i = j + 1;
        }
        return r;
    };
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

} // namespace learnware::oracles
