#pragma once

// Built-in trainable predictors spanning three model families (linear,
// instance-based, tree-based) and the artifact codec that reconstructs them.

#include "learnware/codec.hpp"
#include "learnware/external_adapter.hpp"
#include "learnware/predictor.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace learnware {

// ---------------------------------------------------------------------------
// Ridge regression with an unpenalised intercept; multi-output.

class RidgePredictor final : public Predictor {
public:
    RidgePredictor(Matrix coef, Vector intercept, double lambda)
        : coef_(std::move(coef)), intercept_(std::move(intercept)), lambda_(lambda) {}

    static std::shared_ptr<RidgePredictor> train(const Matrix& x, const Matrix& y, double lambda) {
        require(lambda >= 0.0, "ridge regularisation must be nonnegative");
        const Eigen::RowVectorXd x_mean = x.colwise().mean();
        const Eigen::RowVectorXd y_mean = y.colwise().mean();
        const Matrix xc = x.rowwise() - x_mean;
        const Matrix yc = y.rowwise() - y_mean;
        Matrix coef;
        if (lambda > 0.0) {
            Matrix a = xc.transpose() * xc;
            a.diagonal().array() += lambda;
            coef = a.ldlt().solve(xc.transpose() * yc);
        } else {
            coef = xc.completeOrthogonalDecomposition().solve(yc);
        }
        Vector intercept = (y_mean - x_mean * coef).transpose();
        return std::make_shared<RidgePredictor>(std::move(coef), std::move(intercept), lambda);
    }

    Matrix predict(const Matrix& x) const override {
        if (x.rows() == 0) {
            return Matrix(0, coef_.cols());
        }
        require(x.cols() == coef_.rows(), "input dimension mismatch");
        return (x * coef_).rowwise() + intercept_.transpose();
    }
    std::size_t input_dim() const override { return static_cast<std::size_t>(coef_.rows()); }
    std::size_t output_dim() const override { return static_cast<std::size_t>(coef_.cols()); }

    ModelArtifact artifact() const override {
        return ModelArtifact{ModelKind::builtin_ridge,
                             json{{"lambda", lambda_},
                                  {"coef", codec::matrix_to_json(coef_)},
                                  {"intercept", codec::vector_to_json(intercept_)}}};
    }

    static std::shared_ptr<RidgePredictor> from_params(const json& p) {
        Vector intercept = codec::vector_from_json(codec::field(p, "intercept"));
        Matrix coef = codec::matrix_from_json(codec::field(p, "coef"));
        if (coef.cols() != intercept.size()) {
            throw CodecError("ridge coefficient and intercept shapes disagree");
        }
        return std::make_shared<RidgePredictor>(std::move(coef), std::move(intercept), codec::get<double>(p, "lambda"));
    }

    const Matrix& coefficients() const { return coef_; }
    const Vector& intercept() const { return intercept_; }

private:
    Matrix coef_;
    Vector intercept_;
    double lambda_;
};

// ---------------------------------------------------------------------------
// k-nearest neighbours: mean target of the k closest training rows (ties by
// lower row index).

class KnnPredictor final : public Predictor {
public:
    KnnPredictor(Matrix points, Matrix targets, std::size_t k)
        : points_(std::move(points)), targets_(std::move(targets)), k_(k) {
        require(points_.rows() >= 1, "k-NN needs at least one training row");
        require(points_.rows() == targets_.rows(), "k-NN inputs and targets differ in row count");
        require(k_ >= 1, "k must be positive");
    }

    Matrix predict(const Matrix& x) const override {
        Matrix out(x.rows(), targets_.cols());
        if (x.rows() == 0) {
            return out;
        }
        require(x.cols() == points_.cols(), "input dimension mismatch");
        const auto m = static_cast<std::size_t>(points_.rows());
        const std::size_t k = std::min(k_, m);
        std::vector<std::pair<double, std::size_t>> dist(m);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            for (std::size_t i = 0; i < m; ++i) {
                dist[i] = {(points_.row(static_cast<Eigen::Index>(i)) - x.row(r)).squaredNorm(), i};
            }
            std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
            Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(targets_.cols());
            for (std::size_t i = 0; i < k; ++i) {
                acc += targets_.row(static_cast<Eigen::Index>(dist[i].second));
            }
            out.row(r) = acc / static_cast<double>(k);
        }
        return out;
    }
    std::size_t input_dim() const override { return static_cast<std::size_t>(points_.cols()); }
    std::size_t output_dim() const override { return static_cast<std::size_t>(targets_.cols()); }

    ModelArtifact artifact() const override {
        return ModelArtifact{ModelKind::builtin_knn,
                             json{{"k", k_},
                                  {"points", codec::matrix_to_json(points_)},
                                  {"targets", codec::matrix_to_json(targets_)}}};
    }

    static std::shared_ptr<KnnPredictor> from_params(const json& p) {
        return std::make_shared<KnnPredictor>(codec::matrix_from_json(codec::field(p, "points")),
                                              codec::matrix_from_json(codec::field(p, "targets")),
                                              codec::get<std::size_t>(p, "k"));
    }

private:
    Matrix points_;
    Matrix targets_;
    std::size_t k_;
};

// ---------------------------------------------------------------------------
// Gradient-boosted depth-1 trees on squared loss, one sequence per output.

struct Stump {
    std::size_t output = 0;
    std::size_t feature = 0;
    double threshold = 0.0;
    double left = 0.0;  // x[feature] <= threshold
    double right = 0.0;
};

class StumpEnsemblePredictor final : public Predictor {
public:
    StumpEnsemblePredictor(std::size_t input_dim, Vector base, std::vector<Stump> stumps)
        : input_dim_(input_dim), base_(std::move(base)), stumps_(std::move(stumps)) {}

    static std::shared_ptr<StumpEnsemblePredictor> train(const Matrix& x, const Matrix& y, int rounds,
                                                         double learning_rate, double subsample, std::uint64_t seed) {
        require(rounds >= 0, "rounds must be nonnegative");
        require(learning_rate > 0.0, "learning rate must be positive");
        require(subsample > 0.0 && subsample <= 1.0, "subsample must be in (0, 1]");
        const Eigen::Index m = x.rows();
        const Eigen::Index d = x.cols();
        Vector base = y.colwise().mean().transpose();
        std::vector<Stump> stumps;
        stumps.reserve(static_cast<std::size_t>(rounds) * static_cast<std::size_t>(y.cols()));

        std::vector<std::vector<Eigen::Index>> order(static_cast<std::size_t>(d));
        for (Eigen::Index f = 0; f < d; ++f) {
            auto& o = order[static_cast<std::size_t>(f)];
            o.resize(static_cast<std::size_t>(m));
            std::iota(o.begin(), o.end(), 0);
            std::stable_sort(o.begin(), o.end(), [&](Eigen::Index a, Eigen::Index b) { return x(a, f) < x(b, f); });
        }

        Rng rng(seed);
        std::vector<char> in_bag(static_cast<std::size_t>(m), 1);
        for (Eigen::Index out = 0; out < y.cols(); ++out) {
            Vector residual = y.col(out).array() - base(out);
            for (int round = 0; round < rounds; ++round) {
                if (subsample < 1.0) {
                    for (auto& b : in_bag) {
                        b = rng.uniform() < subsample ? 1 : 0;
                    }
                }
                auto best = fit_stump(x, residual, order, in_bag);
                if (!best) {
                    break;
                }
                best->output = static_cast<std::size_t>(out);
                best->left *= learning_rate;
                best->right *= learning_rate;
                for (Eigen::Index r = 0; r < m; ++r) {
                    residual(r) -= x(r, static_cast<Eigen::Index>(best->feature)) <= best->threshold ? best->left
                                                                                                      : best->right;
                }
                stumps.push_back(*best);
            }
        }
        return std::make_shared<StumpEnsemblePredictor>(static_cast<std::size_t>(d), std::move(base),
                                                        std::move(stumps));
    }

    Matrix predict(const Matrix& x) const override {
        Matrix out(x.rows(), base_.size());
        if (x.rows() == 0) {
            return out;
        }
        require(static_cast<std::size_t>(x.cols()) == input_dim_, "input dimension mismatch");
        out.rowwise() = base_.transpose();
        for (const Stump& s : stumps_) {
            const auto f = static_cast<Eigen::Index>(s.feature);
            const auto o = static_cast<Eigen::Index>(s.output);
            for (Eigen::Index r = 0; r < x.rows(); ++r) {
                out(r, o) += x(r, f) <= s.threshold ? s.left : s.right;
            }
        }
        return out;
    }
    std::size_t input_dim() const override { return input_dim_; }
    std::size_t output_dim() const override { return static_cast<std::size_t>(base_.size()); }

    ModelArtifact artifact() const override {
        json stumps = json::array();
        for (const Stump& s : stumps_) {
            stumps.push_back(json::array({s.output, s.feature, s.threshold, s.left, s.right}));
        }
        return ModelArtifact{ModelKind::builtin_stump_ensemble,
                             json{{"input_dim", input_dim_}, {"base", codec::vector_to_json(base_)}, {"stumps", stumps}}};
    }

    static std::shared_ptr<StumpEnsemblePredictor> from_params(const json& p) {
        std::vector<Stump> stumps;
        const Vector base = codec::vector_from_json(codec::field(p, "base"));
        const auto in = codec::get<std::size_t>(p, "input_dim");
        for (const json& s : codec::field(p, "stumps")) {
            if (!s.is_array() || s.size() != 5) {
                throw CodecError("stump entries must have five fields");
            }
            Stump st{s[0].get<std::size_t>(), s[1].get<std::size_t>(), s[2].get<double>(), s[3].get<double>(),
                     s[4].get<double>()};
            if (st.output >= static_cast<std::size_t>(base.size()) || st.feature >= in) {
                throw CodecError("stump refers to a missing input or output");
            }
            stumps.push_back(st);
        }
        return std::make_shared<StumpEnsemblePredictor>(in, base, std::move(stumps));
    }

private:
    static std::optional<Stump> fit_stump(const Matrix& x, const Vector& residual,
                                          const std::vector<std::vector<Eigen::Index>>& order,
                                          const std::vector<char>& in_bag) {
        std::optional<Stump> best;
        double best_gain = 1e-12;
        for (std::size_t f = 0; f < order.size(); ++f) {
            const auto fi = static_cast<Eigen::Index>(f);
            double total = 0.0;
            double count = 0.0;
            for (Eigen::Index r : order[f]) {
                if (in_bag[static_cast<std::size_t>(r)] != 0) {
                    total += residual(r);
                    count += 1.0;
                }
            }
            if (count < 2.0) {
                continue;
            }
            double left_sum = 0.0;
            double left_count = 0.0;
            const auto& o = order[f];
            for (std::size_t i = 0; i + 1 < o.size(); ++i) {
                const Eigen::Index r = o[i];
                if (in_bag[static_cast<std::size_t>(r)] == 0) {
                    continue;
                }
                left_sum += residual(r);
                left_count += 1.0;
                // next in-bag row
                std::size_t j = i + 1;
                while (j < o.size() && in_bag[static_cast<std::size_t>(o[j])] == 0) {
                    ++j;
                }
                if (j == o.size() || x(o[j], fi) == x(r, fi)) {
                    continue;
                }
                const double right_count = count - left_count;
                const double right_sum = total - left_sum;
                const double gain =
                    left_sum * left_sum / left_count + right_sum * right_sum / right_count - total * total / count;
                if (gain > best_gain) {
                    best_gain = gain;
                    best = Stump{0, f, 0.5 * (x(r, fi) + x(o[j], fi)), left_sum / left_count, right_sum / right_count};
                }
            }
        }
        return best;
    }

    std::size_t input_dim_;
    Vector base_;
    std::vector<Stump> stumps_;
};

// ---------------------------------------------------------------------------
// Training entry point and artifact codec

inline PredictorPtr train_builtin(ModelKind kind, const Matrix& x, const Matrix& y, const json& hyper = json::object(),
                                  std::uint64_t seed = 0) {
    require(x.rows() >= 1, "cannot train on zero rows");
    require(x.rows() == y.rows(), "inputs and targets differ in row count");
    require(y.cols() >= 1, "targets need at least one column");
    require(x.allFinite() && y.allFinite(), "training data must be finite");
    const json h = hyper.is_null() ? json::object() : hyper;
    switch (kind) {
    case ModelKind::builtin_ridge:
        return RidgePredictor::train(x, y, h.value("lambda", 1e-6));
    case ModelKind::builtin_knn:
        return std::make_shared<KnnPredictor>(x, y, h.value("k", std::size_t{5}));
    case ModelKind::builtin_stump_ensemble:
        return StumpEnsemblePredictor::train(x, y, h.value("rounds", 100), h.value("learning_rate", 0.1),
                                             h.value("subsample", 1.0), seed);
    case ModelKind::external:
        break;
    }
    throw UsageError("external models cannot be trained by the market");
}

inline ModelKind model_kind_from_string(const std::string& tag) {
    for (ModelKind k : {ModelKind::builtin_ridge, ModelKind::builtin_knn, ModelKind::builtin_stump_ensemble,
                        ModelKind::external}) {
        if (to_string(k) == tag) {
            return k;
        }
    }
    throw CodecError("unknown model kind '" + tag + "'");
}

inline json to_json(const ModelArtifact& a) {
    return json{{"format_version", kFormatVersion}, {"kind", to_string(a.kind)}, {"params", a.params}};
}

inline ModelArtifact artifact_from_json(const json& j) {
    if (codec::get<int>(j, "format_version") != kFormatVersion) {
        throw CodecError("unsupported model artifact version");
    }
    return ModelArtifact{model_kind_from_string(codec::get<std::string>(j, "kind")), codec::field(j, "params")};
}

inline PredictorPtr load_predictor(const ModelArtifact& a) {
    try {
        switch (a.kind) {
        case ModelKind::builtin_ridge:
            return RidgePredictor::from_params(a.params);
        case ModelKind::builtin_knn:
            return KnnPredictor::from_params(a.params);
        case ModelKind::builtin_stump_ensemble:
            return StumpEnsemblePredictor::from_params(a.params);
        case ModelKind::external:
            return std::make_shared<ExternalPredictor>(ExternalDescriptor::from_json(a.params));
        }
    } catch (const json::exception& e) {
        throw CodecError(std::string("malformed model parameters: ") + e.what());
    } catch (const UsageError& e) {
        throw CodecError(std::string("invalid model parameters: ") + e.what());
    }
    throw CodecError("unknown model kind");
}

inline std::string save_artifact(const ModelArtifact& a) { return to_json(a).dump(); }

inline std::string save_artifact(const Predictor& p) { return save_artifact(p.artifact()); }

inline ModelArtifact decode_artifact(std::string_view bytes) {
    json j;
    try {
        j = json::parse(bytes);
    } catch (const json::exception& e) {
        throw CodecError(std::string("corrupt model payload: ") + e.what());
    }
    return artifact_from_json(j);
}

inline PredictorPtr load_artifact(std::string_view bytes) { return load_predictor(decode_artifact(bytes)); }

} // namespace learnware
