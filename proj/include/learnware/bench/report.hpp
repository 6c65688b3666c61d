#pragma once

#include "learnware/codec.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace learnware::bench {

// Everything a report depends on besides its seed; no clocks or host names,
// so reports are byte-identical across runs.
inline json environment_stamp() {
    return json{{"format_version", kFormatVersion},
#ifdef __VERSION__
                {"compiler", __VERSION__},
#endif
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)}};
}

struct ExperimentReport {
    std::string experiment;
    std::uint64_t seed = 0;
    json config = json::object();
    json summary = json::object();
    // Per-trial rows, in trial order.
    json trials = json::array();

    json to_json() const {
        return json{{"experiment", experiment},
                    {"seed", seed},
                    {"environment", environment_stamp()},
                    {"config", config},
                    {"summary", summary},
                    {"trials", trials}};
    }

    // Flat per-trial rows: scalar fields only, columns in first-row order.
    std::string trials_csv() const {
        if (trials.empty()) {
            return "";
        }
        std::vector<std::string> cols;
        for (const auto& [key, value] : trials.front().items()) {
            if (value.is_primitive()) {
                cols.push_back(key);
            }
        }
        std::string out;
        for (std::size_t i = 0; i < cols.size(); ++i) {
            out += (i ? "," : "") + cols[i];
        }
        out += "\n";
        for (const auto& row : trials) {
            for (std::size_t i = 0; i < cols.size(); ++i) {
                const json& v = row.contains(cols[i]) ? row[cols[i]] : json(nullptr);
                out += (i ? "," : "") + (v.is_string() ? v.get<std::string>() : v.dump());
            }
            out += "\n";
        }
        return out;
    }
};

inline double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

template <class Pred>
double fraction(const std::vector<double>& v, Pred p) {
    if (v.empty()) {
        return 0.0;
    }
    return static_cast<double>(std::count_if(v.begin(), v.end(), p)) / static_cast<double>(v.size());
}

// Relative error reduction of a strategy against a baseline loss.
inline double improvement(double baseline, double loss) { return (baseline - loss) / baseline; }

inline std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) {
            ++j;
        }
        for (std::size_t t = i; t <= j; ++t) {
            r[order[t]] = 0.5 * static_cast<double>(i + j) + 1.0;
        }
        i = j + 1;
    }
    return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double ma = mean(a);
    const double mb = mean(b);
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

inline double rank_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    return pearson(ranks(a), ranks(b));
}

} // namespace learnware::bench
