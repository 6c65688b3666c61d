#pragma once

#include "learnware/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace learnware {

// Rows are samples, columns are coordinates.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

using LearnwareId = std::uint64_t;
using IslandId = std::uint64_t;

// Portable RNG: mt19937_64 output is fully specified by the standard, the
// std distributions are not, so draws are derived from raw output by hand.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u = 0.0;
        do {
            u = uniform();
        } while (u <= 0.0);
        const double v = uniform();
        const double r = std::sqrt(-2.0 * std::log(u));
        spare_ = r * std::sin(2.0 * M_PI * v);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * v);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Derive an independent stream for a sub-task.
    Rng fork(std::uint64_t salt) { return Rng(mix(engine_() ^ mix(salt))); }

    static std::uint64_t mix(std::uint64_t x) {
        // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// FNV-1a, 64 bit. Stable across platforms; used for seeds and file digests.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline void require(bool condition, const std::string& message) {
    if (!condition) {
        throw UsageError(message);
    }
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline Matrix select_columns(const Matrix& m, const std::vector<std::size_t>& columns) {
    Matrix out(m.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c) {
        require(columns[c] < static_cast<std::size_t>(m.cols()), "column index out of range");
        out.col(static_cast<Eigen::Index>(c)) = m.col(static_cast<Eigen::Index>(columns[c]));
    }
    return out;
}

inline Matrix hconcat(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows(), "row count mismatch in column concatenation");
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

inline Matrix vconcat(const Matrix& a, const Matrix& b) {
    if (a.size() == 0) {
        return b;
    }
    if (b.size() == 0) {
        return a;
    }
    require(a.cols() == b.cols(), "column count mismatch in row concatenation");
    Matrix out(a.rows() + b.rows(), a.cols());
    out << a, b;
    return out;
}

inline double median(std::vector<double> values) {
    require(!values.empty(), "median of empty sample");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) {
        return upper;
    }
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

} // namespace learnware
