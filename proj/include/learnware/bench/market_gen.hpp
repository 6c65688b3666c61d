#pragma once

#include "learnware/bench/world.hpp"
#include "learnware/market.hpp"
#include "learnware/model_zoo.hpp"

#include <string>
#include <vector>

namespace learnware::bench {

struct GenOptions {
    std::vector<ModelKind> kinds{ModelKind::builtin_ridge, ModelKind::builtin_knn, ModelKind::builtin_stump_ensemble};
    // Hyperparameters per kind name, e.g. {"builtin_knn": {"k": 7}}.
    json hyper = json::object();
    std::size_t train_m = 600;
    std::size_t n = 10;
    MarketConfig market;
    ReduceOptions reduce;
    std::string field = "x";

    json to_json() const {
        json k = json::array();
        for (ModelKind kind : kinds) {
            k.push_back(to_string(kind));
        }
        return json{{"kinds", k}, {"hyper", hyper}, {"train_m", train_m}, {"n", n},
                    {"market", market.to_json()}, {"reduce_outer_iters", reduce.max_outer_iters},
                    {"field", field}};
    }
};

struct GeneratedMarket {
    MarketState state;
    json tags;
    // Indexed by task.
    std::vector<LearnwareId> ids;
    std::vector<PredictorPtr> models;
    std::vector<ModelKind> kinds;

    std::size_t task_of(LearnwareId id) const {
        const auto it = std::find(ids.begin(), ids.end(), id);
        require(it != ids.end(), "learnware is not part of the generated market");
        return static_cast<std::size_t>(it - ids.begin());
    }
};

inline json world_tags(std::size_t dims, const OutputDesc& out, const std::string& field = "x") {
    return json{{"input", json::array({json{{"name", field}, {"dim", dims}}})},
                {"output", to_json(out)},
                {"objective", out.kind == OutputKind::regression ? "rmse" : "error_rate"}};
}

// Spread of the market's probe inputs for a world: the standard deviation of
// a uniform draw over the world's box, widened by the task spread.
inline double world_probe_scale(const WorldConfig& cfg) { return cfg.box / std::sqrt(3.0) + cfg.spread; }

// One developer per task: trains a builtin model of rotating kind on a
// sample from the task, then submits it with a reduced specification.
inline GeneratedMarket gen_market(const SyntheticWorld& world, const GenOptions& opts, std::uint64_t seed) {
    require(world.tasks().size() >= 2, "a generated market needs at least two tasks");
    require(!opts.kinds.empty(), "at least one model kind is required");
    GeneratedMarket g;
    g.state.config = opts.market;
    g.tags = world_tags(world.dims(), world.output(), opts.field);
    const OutputDesc desc = world.output();
    for (std::size_t i = 0; i < world.tasks().size(); ++i) {
        Rng rng(Rng::mix(seed ^ Rng::mix(i + 1)));
        const Sample s = world.sample_task(i, opts.train_m, rng);
        const ModelKind kind = opts.kinds[i % opts.kinds.size()];
        const auto model = train_builtin(kind, s.x, s.y, opts.hyper.value(to_string(kind), json::object()), rng.next());
        ReduceOptions ro = opts.reduce;
        ro.seed = rng.next();
        try {
            const auto& rec = submit(g.state, model->artifact(), g.tags, sketch_from_data(s.x, sketch_labels(s.y, desc), desc),
                                     std::min(opts.n, opts.train_m), {}, ro);
            g.ids.push_back(rec.id);
        } catch (const QaRejection& e) {
            throw std::runtime_error("generated model for task " + std::to_string(i) + " was rejected: " + e.what());
        }
        g.models.push_back(model);
        g.kinds.push_back(kind);
    }
    return g;
}

} // namespace learnware::bench
