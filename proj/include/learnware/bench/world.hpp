#pragma once

// Synthetic worlds: one global truth function shared by every task, and a set
// of task input distributions.

#include "learnware/rkme.hpp"
#include "learnware/types.hpp"

#include <vector>

namespace learnware::bench {

// h(x) = sum_j a_j exp(-|x - c_j|^2 / (2 s^2)).
struct RbfFunction {
    Matrix centres;
    Vector amplitudes;
    double width = 1.0;

    Vector operator()(const Matrix& x) const {
        Vector out = Vector::Zero(x.rows());
        const double inv = 1.0 / (2.0 * width * width);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            double acc = 0.0;
            for (Eigen::Index j = 0; j < centres.rows(); ++j) {
                acc += amplitudes(j) * std::exp(-(x.row(r) - centres.row(j)).squaredNorm() * inv);
            }
            out(r) = acc;
        }
        return out;
    }

    static RbfFunction random(Rng& rng, std::size_t dims, std::size_t count, double box, double width) {
        RbfFunction f;
        f.centres.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dims));
        f.amplitudes.resize(static_cast<Eigen::Index>(count));
        for (Eigen::Index j = 0; j < f.centres.rows(); ++j) {
            for (Eigen::Index c = 0; c < f.centres.cols(); ++c) {
                f.centres(j, c) = rng.uniform(-box, box);
            }
            f.amplitudes(j) = rng.normal();
        }
        f.width = width;
        return f;
    }
};

// Isotropic Gaussian mixture.
struct TaskDist {
    Matrix means;
    Vector weights;
    double spread = 1.0;

    Matrix sample(std::size_t m, Rng& rng) const {
        Matrix x(static_cast<Eigen::Index>(m), means.cols());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const Eigen::Index k = pick(rng);
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
                x(r, c) = rng.normal(means(k, c), spread);
            }
        }
        return x;
    }

    TaskDist shifted(const Vector& offset) const {
        TaskDist d = *this;
        d.means.rowwise() += offset.transpose();
        return d;
    }

    Vector centre() const { return (weights.transpose() * means).transpose() / weights.sum(); }

private:
    Eigen::Index pick(Rng& rng) const {
        if (weights.size() == 1) {
            return 0;
        }
        double u = rng.uniform() * weights.sum();
        for (Eigen::Index k = 0; k + 1 < weights.size(); ++k) {
            u -= weights(k);
            if (u < 0.0) {
                return k;
            }
        }
        return weights.size() - 1;
    }
};

struct Sample {
    Matrix x;
    Matrix y;
    // Index of the task each row was drawn from (mixtures only).
    std::vector<std::size_t> component;
};

struct WorldConfig {
    std::size_t dims = 2;
    std::size_t tasks = 20;
    // 0: every task has its own centre. Otherwise tasks are jittered copies of
    // `clusters` centres.
    std::size_t clusters = 0;
    double cluster_jitter = 0.3;
    double box = 8.0;
    double min_separation = 4.0;
    double spread = 0.7;
    // Regression: label noise standard deviation. Classification: flip probability.
    double noise = 0.1;
    std::size_t classes = 0; // 0 for regression
    std::size_t rbf_count = 40;
    double rbf_width = 1.5;
    std::uint64_t seed = 0;

    void validate() const {
        require(dims >= 1 && tasks >= 1, "a world needs dimensions and tasks");
        require(classes != 1, "classification needs at least two classes");
        require(spread > 0.0 && box > 0.0 && rbf_width > 0.0 && rbf_count >= 1, "world scales must be positive");
        require(noise >= 0.0, "noise must be nonnegative");
    }
};

class SyntheticWorld {
public:
    SyntheticWorld() = default;

    explicit SyntheticWorld(const WorldConfig& cfg) : cfg_(cfg) {
        cfg.validate();
        Rng rng(cfg.seed);
        const std::size_t heads = cfg.classes == 0 ? 1 : cfg.classes;
        for (std::size_t k = 0; k < heads; ++k) {
            truth_.push_back(RbfFunction::random(rng, cfg.dims, cfg.rbf_count, cfg.box + 2.0 * cfg.spread, cfg.rbf_width));
        }
        const Matrix centres = place(rng, cfg.clusters == 0 ? cfg.tasks : cfg.clusters);
        for (std::size_t i = 0; i < cfg.tasks; ++i) {
            TaskDist d;
            d.means = centres.row(static_cast<Eigen::Index>(cfg.clusters == 0 ? i : i % cfg.clusters));
            if (cfg.clusters != 0) {
                for (Eigen::Index c = 0; c < d.means.cols(); ++c) {
                    d.means(0, c) += rng.normal(0.0, cfg.cluster_jitter);
                }
            }
            d.weights = Vector::Ones(1);
            d.spread = cfg.spread;
            tasks_.push_back(std::move(d));
        }
    }

    const WorldConfig& config() const { return cfg_; }
    std::size_t dims() const { return cfg_.dims; }
    const std::vector<TaskDist>& tasks() const { return tasks_; }
    OutputDesc output() const {
        return cfg_.classes == 0 ? OutputDesc{OutputKind::regression, 1}
                                 : OutputDesc{OutputKind::classification, cfg_.classes};
    }

    // Noise-free targets: h(x), or the one-hot argmax class.
    Matrix truth(const Matrix& x) const {
        if (cfg_.classes == 0) {
            return truth_.front()(x);
        }
        Matrix scores(x.rows(), static_cast<Eigen::Index>(truth_.size()));
        for (std::size_t k = 0; k < truth_.size(); ++k) {
            scores.col(static_cast<Eigen::Index>(k)) = truth_[k](x);
        }
        return encode_outputs(scores, output());
    }

    Matrix label(const Matrix& x, Rng& rng) const {
        Matrix y = truth(x);
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            if (cfg_.classes == 0) {
                y(r, 0) += rng.normal(0.0, cfg_.noise);
            } else if (rng.uniform() < cfg_.noise) {
                y.row(r).setZero();
                y(r, static_cast<Eigen::Index>(rng.index(cfg_.classes))) = 1.0;
            }
        }
        return y;
    }

    Sample sample(const TaskDist& d, std::size_t m, Rng& rng) const {
        Sample s;
        s.x = d.sample(m, rng);
        s.y = label(s.x, rng);
        return s;
    }

    Sample sample_task(std::size_t task, std::size_t m, Rng& rng) const { return sample(tasks_.at(task), m, rng); }

    // Rows drawn from sum_i w_i D_{tasks[i]}; records each row's task.
    Sample sample_mixture(const std::vector<std::size_t>& tasks, const Vector& w, std::size_t m, Rng& rng) const {
        require(static_cast<std::size_t>(w.size()) == tasks.size(), "one weight per mixture component is required");
        Sample s;
        s.x.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(cfg_.dims));
        for (std::size_t r = 0; r < m; ++r) {
            double u = rng.uniform() * w.sum();
            std::size_t k = 0;
            while (k + 1 < tasks.size() && (u -= w(static_cast<Eigen::Index>(k))) >= 0.0) {
                ++k;
            }
            s.component.push_back(tasks[k]);
            s.x.row(static_cast<Eigen::Index>(r)) = tasks_.at(tasks[k]).sample(1, rng).row(0);
        }
        s.y = label(s.x, rng);
        return s;
    }

private:
    // Rejection sampling of well-separated centres in the box.
    Matrix place(Rng& rng, std::size_t count) const {
        Matrix c(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(cfg_.dims));
        double sep = cfg_.min_separation;
        Eigen::Index placed = 0;
        int attempts = 0;
        while (placed < c.rows()) {
            Vector p(static_cast<Eigen::Index>(cfg_.dims));
            for (Eigen::Index d = 0; d < p.size(); ++d) {
                p(d) = rng.uniform(-cfg_.box, cfg_.box);
            }
            bool ok = true;
            for (Eigen::Index j = 0; j < placed && ok; ++j) {
                ok = (c.row(j).transpose() - p).norm() >= sep;
            }
            if (ok) {
                c.row(placed++) = p.transpose();
            } else if (++attempts > 10000) {
                sep *= 0.9;
                attempts = 0;
            }
        }
        return c;
    }

    WorldConfig cfg_;
    std::vector<RbfFunction> truth_;
    std::vector<TaskDist> tasks_;
};

// Evaluation helpers. Regression: root mean squared error. Classification:
// error rate of the argmax class.
inline double rmse(const Matrix& pred, const Matrix& y) {
    require(pred.rows() == y.rows() && pred.cols() == y.cols() && y.rows() > 0, "prediction shape mismatch");
    return std::sqrt((pred - y).squaredNorm() / static_cast<double>(y.rows()));
}

inline double error_rate(const Matrix& pred, const Matrix& y) {
    require(pred.rows() == y.rows() && pred.cols() == y.cols() && y.rows() > 0, "prediction shape mismatch");
    std::size_t wrong = 0;
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        wrong += argmax_row(pred, r) != argmax_row(y, r) ? 1 : 0;
    }
    return static_cast<double>(wrong) / static_cast<double>(y.rows());
}

inline double task_loss(const Matrix& pred, const Matrix& y, const OutputDesc& desc) {
    return desc.kind == OutputKind::regression ? rmse(pred, y) : error_rate(pred, y);
}

// Labels in the form sketches take: class indices for classification.
inline Matrix sketch_labels(const Matrix& y, const OutputDesc& desc) {
    if (desc.kind == OutputKind::regression) {
        return y;
    }
    Matrix idx(y.rows(), 1);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        idx(r, 0) = static_cast<double>(argmax_row(y, r));
    }
    return idx;
}

inline Sample head(const Sample& s, std::size_t rows) {
    const auto r = static_cast<Eigen::Index>(std::min<std::size_t>(rows, static_cast<std::size_t>(s.x.rows())));
    Sample out{s.x.topRows(r), s.y.topRows(r), {}};
    if (!s.component.empty()) {
        out.component.assign(s.component.begin(), s.component.begin() + r);
    }
    return out;
}

} // namespace learnware::bench
