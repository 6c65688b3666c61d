#pragma once

// Partitioning around medoids (BUILD then SWAP) over a precomputed distance
// matrix. Fully deterministic: every tie goes to the lower index.

#include "learnware/types.hpp"

#include <algorithm>
#include <limits>
#include <vector>

namespace learnware {

inline double medoid_cost(const Matrix& D, const std::vector<std::size_t>& medoids) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < D.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t m : medoids) {
            best = std::min(best, D(i, static_cast<Eigen::Index>(m)));
        }
        total += best;
    }
    return total;
}

// Returns min(k, n) medoid indices in ascending order.
inline std::vector<std::size_t> pam(const Matrix& D, std::size_t k) {
    const auto n = static_cast<std::size_t>(D.rows());
    require(D.rows() == D.cols(), "distance matrix must be square");
    require(n >= 1 && k >= 1, "k-medoids needs at least one point and one cluster");
    k = std::min(k, n);

    std::vector<std::size_t> medoids;
    std::vector<bool> chosen(n, false);
    while (medoids.size() < k) {
        std::size_t best = n;
        double best_cost = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n; ++c) {
            if (chosen[c]) {
                continue;
            }
            medoids.push_back(c);
            const double cost = medoid_cost(D, medoids);
            medoids.pop_back();
            if (cost < best_cost) {
                best_cost = cost;
                best = c;
            }
        }
        medoids.push_back(best);
        chosen[best] = true;
    }

    double cost = medoid_cost(D, medoids);
    for (bool improved = true; improved;) {
        improved = false;
        std::size_t best_slot = 0;
        std::size_t best_swap = n;
        double best_cost = cost;
        for (std::size_t slot = 0; slot < k; ++slot) {
            for (std::size_t o = 0; o < n; ++o) {
                if (chosen[o]) {
                    continue;
                }
                std::vector<std::size_t> trial = medoids;
                trial[slot] = o;
                const double c = medoid_cost(D, trial);
                if (c < best_cost - 1e-12 * std::max(1.0, std::abs(best_cost))) {
                    best_cost = c;
                    best_slot = slot;
                    best_swap = o;
                }
            }
        }
        if (best_swap != n) {
            chosen[medoids[best_slot]] = false;
            chosen[best_swap] = true;
            medoids[best_slot] = best_swap;
            cost = best_cost;
            improved = true;
        }
    }
    std::sort(medoids.begin(), medoids.end());
    return medoids;
}

} // namespace learnware
