#pragma once

#include "learnware/types.hpp"

#include <functional>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

namespace learnware {

enum class ModelKind { builtin_ridge, builtin_knn, builtin_stump_ensemble, external };

inline std::string to_string(ModelKind kind) {
    switch (kind) {
    case ModelKind::builtin_ridge:
        return "builtin_ridge";
    case ModelKind::builtin_knn:
        return "builtin_knn";
    case ModelKind::builtin_stump_ensemble:
        return "builtin_stump_ensemble";
    case ModelKind::external:
        return "external";
    }
    return "unknown";
}

// Serialized model: a kind tag plus a kind-specific payload. Builtin payloads
// reconstruct the predictor exactly; external payloads hold a launch descriptor.
struct ModelArtifact {
    ModelKind kind = ModelKind::builtin_ridge;
    nlohmann::json params;

    friend bool operator==(const ModelArtifact&, const ModelArtifact&) = default;
};

// Maps a batch of input rows to a batch of output rows (regression values or
// class scores). Implementations are deterministic and safe to call concurrently.
class Predictor {
public:
    virtual ~Predictor() = default;

    virtual Matrix predict(const Matrix& x) const = 0;
    virtual std::size_t input_dim() const = 0;
    virtual std::size_t output_dim() const = 0;
    virtual ModelArtifact artifact() const = 0;
};

using PredictorPtr = std::shared_ptr<const Predictor>;

// Wraps a row-wise callable. Used for probes and tests; it has no artifact.
class FunctionPredictor final : public Predictor {
public:
    using RowFn = std::function<Vector(const Vector&)>;

    FunctionPredictor(std::size_t in, std::size_t out, RowFn fn) : in_(in), out_(out), fn_(std::move(fn)) {}

    Matrix predict(const Matrix& x) const override {
        require(static_cast<std::size_t>(x.cols()) == in_ || x.rows() == 0, "input dimension mismatch");
        Matrix y(x.rows(), static_cast<Eigen::Index>(out_));
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            Vector row = fn_(x.row(r).transpose());
            if (static_cast<std::size_t>(row.size()) != out_) {
                // Surface the wrong shape to callers instead of truncating.
                Matrix bad(x.rows(), row.size());
                bad.setZero();
                return bad;
            }
            y.row(r) = row.transpose();
        }
        return y;
    }
    std::size_t input_dim() const override { return in_; }
    std::size_t output_dim() const override { return out_; }
    ModelArtifact artifact() const override { throw CodecError("function predictors have no serialized form"); }

private:
    std::size_t in_;
    std::size_t out_;
    RowFn fn_;
};

} // namespace learnware
