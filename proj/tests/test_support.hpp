#pragma once

#include "learnware/types.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <string>

#include <stdio.h>
#include <stdlib.h>
#include <sys/wait.h>

namespace learnware::testing {

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = scale * rng.normal();
        }
    }
    return m;
}

inline Vector random_vector(Rng& rng, Eigen::Index n, double scale = 1.0) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v(i) = scale * rng.normal();
    }
    return v;
}

// Two 1-D clusters of `per` points around -2 and +2.
inline Matrix two_clusters_1d(Rng& rng, Eigen::Index per, double spread = 0.3) {
    Matrix z(2 * per, 1);
    for (Eigen::Index i = 0; i < per; ++i) {
        z(i, 0) = rng.normal(-2.0, spread);
        z(per + i, 0) = rng.normal(2.0, spread);
    }
    return z;
}

// Smooth shared ground truth for small regression markets.
inline double truth_2d(double a, double b) { return std::sin(a) + std::cos(b); }

struct TaskSample {
    Matrix x;
    Matrix y;
};

// Gaussian inputs around (cx, cy) labelled by truth_2d plus small noise.
inline TaskSample task_sample(Rng& rng, double cx, double cy, Eigen::Index m, double spread = 0.5,
                              double noise = 0.05) {
    TaskSample s{Matrix(m, 2), Matrix(m, 1)};
    for (Eigen::Index i = 0; i < m; ++i) {
        s.x(i, 0) = rng.normal(cx, spread);
        s.x(i, 1) = rng.normal(cy, spread);
        s.y(i, 0) = truth_2d(s.x(i, 0), s.x(i, 1)) + rng.normal(0.0, noise);
    }
    return s;
}

// Largest number of rows among numeric matrices anywhere in a document.
inline std::size_t max_matrix_rows(const nlohmann::json& j) {
    std::size_t best = 0;
    if (j.is_array() && !j.empty() &&
        std::all_of(j.begin(), j.end(), [](const nlohmann::json& row) {
            return row.is_array() && !row.empty() && std::all_of(row.begin(), row.end(), [](const nlohmann::json& v) {
                       return v.is_number();
                   });
        })) {
        best = j.size();
    }
    if (j.is_structured()) {
        for (const auto& child : j) {
            best = std::max(best, max_matrix_rows(child));
        }
    }
    return best;
}

struct CommandResult {
    int status = -1;
    std::string out;
};

// Runs a shell command, capturing stdout; status is the exit code.
inline CommandResult run_command(const std::string& cmd) {
    CommandResult r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (pipe == nullptr) {
        return r;
    }
    char buf[4096];
    std::size_t got = 0;
    while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) {
        r.out.append(buf, got);
    }
    const int raw = ::pclose(pipe);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

// Fresh directory removed on destruction.
class TempDir {
public:
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "learnware-XXXXXX").string();
        path_ = ::mkdtemp(tmpl.data());
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace learnware::testing
