#pragma once

// User-side reuse of identified learnwares. Everything here runs on the
// user's machine with the user's data; nothing is sent to the market.

#include "learnware/kernel.hpp"
#include "learnware/predictor.hpp"
#include "learnware/rkme.hpp"

#include <optional>
#include <string>
#include <vector>

namespace learnware {

struct ReuseMember {
    LearnwareId id = 0;
    PredictorPtr model;
    // Needed by the selector only.
    std::optional<RkmeSpec> spec;
    double weight = 1.0;
    // Columns of the user's inputs this member consumes, in order; empty means all.
    std::vector<std::size_t> columns;

    Matrix inputs(const Matrix& x) const { return columns.empty() ? x : select_columns(x, columns); }

    Matrix predict(const Matrix& x) const {
        require(model != nullptr, "reuse member has no model");
        const Matrix in = inputs(x);
        require(static_cast<std::size_t>(in.cols()) == model->input_dim(),
                "member " + std::to_string(id) + " expects " + std::to_string(model->input_dim()) + " inputs");
        Matrix y = model->predict(in);
        require(y.rows() == x.rows() && static_cast<std::size_t>(y.cols()) == model->output_dim(),
                "member " + std::to_string(id) + " returned the wrong shape");
        return y;
    }
};

inline ReuseMember as_member(PredictorPtr model, LearnwareId id = 0) {
    ReuseMember m;
    m.id = id;
    m.model = std::move(model);
    return m;
}

// Regression: mean prediction. Classification: one-hot argmax of the mean
// class scores (ties to the lowest class).
inline Matrix ensemble_average(const std::vector<ReuseMember>& members, const Matrix& x, const OutputDesc& desc) {
    require(!members.empty(), "ensemble needs at least one member");
    Matrix sum = Matrix::Zero(x.rows(), static_cast<Eigen::Index>(desc.dim));
    for (const auto& m : members) {
        require(m.model && m.model->output_dim() == desc.dim, "ensemble members must share the output space");
        sum += m.predict(x);
    }
    sum /= static_cast<double>(members.size());
    if (desc.kind == OutputKind::regression) {
        return sum;
    }
    return encode_outputs(sum, desc);
}

inline Matrix ensemble_with_user_model(std::vector<ReuseMember> members, PredictorPtr user_model, const Matrix& x,
                                       const OutputDesc& desc) {
    require(user_model != nullptr, "user model is missing");
    members.push_back(as_member(std::move(user_model)));
    return ensemble_average(members, x, desc);
}

struct SelectorConfig {
    double density_floor = 1e-12;

    void validate() const { require(density_floor > 0.0, "density floor must be positive"); }
};

// Density proxy of a reduced set at x: positive-part weights, normalised,
// evaluated on the input coordinates only.
inline double kde_score(const RkmeSpec& spec, const Vector& x, const SelectorConfig& cfg = {}) {
    cfg.validate();
    require(static_cast<std::size_t>(x.size()) == spec.layout.x_dims, "point does not match the input coordinates");
    const Eigen::Index dx = static_cast<Eigen::Index>(spec.layout.x_dims);
    double num = 0.0;
    double mass = 0.0;
    for (Eigen::Index j = 0; j < spec.points().rows(); ++j) {
        const double b = std::max(spec.beta()(j), 0.0);
        if (b == 0.0) {
            continue;
        }
        mass += b;
        num += b * eval_kernel(spec.kernel, spec.points().row(j).head(dx), x.transpose());
    }
    if (mass == 0.0) {
        return cfg.density_floor;
    }
    return std::max(num / mass, cfg.density_floor);
}

// Row-wise argmax of w_i * density(r, i); members with zero weight never win,
// ties go to the earlier member.
inline std::vector<std::size_t> weighted_argmax(const Vector& w, const Matrix& density) {
    require(w.size() == density.cols() && w.size() >= 1, "one weight per density column is required");
    std::vector<std::size_t> g(static_cast<std::size_t>(density.rows()), 0);
    for (Eigen::Index r = 0; r < density.rows(); ++r) {
        double best = -1.0;
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            if (w(i) == 0.0) {
                continue;
            }
            const double s = w(i) * density(r, i);
            if (s > best) {
                best = s;
                g[static_cast<std::size_t>(r)] = static_cast<std::size_t>(i);
            }
        }
    }
    return g;
}

// g(x) = argmax_i w_i * kde_i(x).
inline std::vector<std::size_t> selector_assign(const std::vector<ReuseMember>& members, const Matrix& x,
                                                const SelectorConfig& cfg = {}) {
    require(!members.empty(), "selector needs at least one member");
    Vector w(static_cast<Eigen::Index>(members.size()));
    Matrix density(x.rows(), w.size());
    for (std::size_t i = 0; i < members.size(); ++i) {
        const auto& m = members[i];
        require(m.spec.has_value(), "selector members need their specifications");
        require(m.weight >= 0.0, "selector weights must be nonnegative");
        const auto col = static_cast<Eigen::Index>(i);
        w(col) = m.weight;
        const Matrix in = m.inputs(x);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            density(r, col) = kde_score(*m.spec, in.row(r).transpose(), cfg);
        }
    }
    require(std::abs(w.sum() - 1.0) <= 1e-9, "selector weights must sum to one");
    return weighted_argmax(w, density);
}

inline Matrix selector_reuse(const std::vector<ReuseMember>& members, const Matrix& x, const SelectorConfig& cfg = {}) {
    const std::vector<std::size_t> g = selector_assign(members, x, cfg);
    const std::size_t out = members.front().model->output_dim();
    Matrix y(x.rows(), static_cast<Eigen::Index>(out));
    for (std::size_t i = 0; i < members.size(); ++i) {
        require(members[i].model->output_dim() == out, "selector members must share the output space");
        std::vector<Eigen::Index> rows;
        for (std::size_t r = 0; r < g.size(); ++r) {
            if (g[r] == i) {
                rows.push_back(static_cast<Eigen::Index>(r));
            }
        }
        if (rows.empty()) {
            continue;
        }
        const Matrix sub = x(rows, Eigen::all);
        const Matrix pred = members[i].predict(sub);
        for (std::size_t k = 0; k < rows.size(); ++k) {
            y.row(rows[k]) = pred.row(static_cast<Eigen::Index>(k));
        }
    }
    return y;
}

// [X, member_1(X), ..., member_k(X)] in member order.
inline Matrix augment_features(const std::vector<ReuseMember>& members, const Matrix& x) {
    Matrix out = x;
    for (const auto& m : members) {
        out = hconcat(out, m.predict(x));
    }
    return out;
}

enum class ReuseMode { direct, ensemble, ensemble_plus_user, selector, feature_augment };

inline std::string to_string(ReuseMode m) {
    switch (m) {
    case ReuseMode::direct:
        return "direct";
    case ReuseMode::ensemble:
        return "ensemble";
    case ReuseMode::ensemble_plus_user:
        return "ensemble_plus_user";
    case ReuseMode::selector:
        return "selector";
    case ReuseMode::feature_augment:
        return "feature_augment";
    }
    return "unknown";
}

struct ReusePlan {
    ReuseMode mode = ReuseMode::direct;
    std::vector<ReuseMember> members;
    // ensemble_plus_user: trained on X. feature_augment: trained on augment_features(members, X).
    PredictorPtr user_model;
    SelectorConfig selector;

    void validate() const {
        require(!members.empty(), "a reuse plan needs at least one learnware");
        if (mode == ReuseMode::ensemble_plus_user || mode == ReuseMode::feature_augment) {
            require(user_model != nullptr, "this reuse mode needs a user model");
        }
    }
};

inline Matrix deploy(const ReusePlan& plan, const Matrix& x, const OutputDesc& desc) {
    plan.validate();
    switch (plan.mode) {
    case ReuseMode::direct:
        return plan.members.front().predict(x);
    case ReuseMode::ensemble:
        return ensemble_average(plan.members, x, desc);
    case ReuseMode::ensemble_plus_user:
        return ensemble_with_user_model(plan.members, plan.user_model, x, desc);
    case ReuseMode::selector:
        return selector_reuse(plan.members, x, plan.selector);
    case ReuseMode::feature_augment:
        return plan.user_model->predict(augment_features(plan.members, x));
    }
    throw UsageError("unknown reuse mode");
}

} // namespace learnware
