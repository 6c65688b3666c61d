#pragma once

// The user's task matches one learnware's task. Compares reuse strategies
// against a model trained on the user's labels alone, and the market's Top-1
// against an exhaustive evaluation of every learnware on the user's test data.

#include "learnware/bench/market_gen.hpp"
#include "learnware/bench/report.hpp"
#include "learnware/reuse.hpp"

#include <map>

namespace learnware::bench {

struct TaskRecurrentConfig {
    std::vector<std::size_t> label_counts{100, 200, 500, 1000, 2000};
    std::size_t trials = 50;
    // Consecutive trials share one world and market.
    std::size_t trials_per_market = 1;
    std::size_t test_m = 1000;
    std::size_t requirement_n = 10;
    std::size_t random_draws = 5;
    ModelKind user_kind = ModelKind::builtin_knn;
    json user_hyper = json::object();
    // k-NN user models use k = round(sqrt(labels)) unless user_hyper sets k.
    bool user_k_sqrt = true;
    MatchMode mode = MatchMode::joint;

    void validate() const {
        require(!label_counts.empty() && trials >= 1 && trials_per_market >= 1, "empty experiment");
        require(test_m >= 1 && requirement_n >= 1 && random_draws >= 1, "sizes must be positive");
        require(mode != MatchMode::anchor_only, "identification needs a sketch");
    }

    json to_json() const {
        return json{{"label_counts", label_counts}, {"trials", trials},
                    {"trials_per_market", trials_per_market}, {"test_m", test_m},
                    {"requirement_n", requirement_n}, {"random_draws", random_draws},
                    {"user_kind", to_string(user_kind)}, {"user_hyper", user_hyper},
                    {"user_k_sqrt", user_k_sqrt}, {"mode", to_string(mode)}};
    }
};

inline ExperimentReport run_task_recurrent(const WorldConfig& world_cfg, const GenOptions& gen,
                                           const TaskRecurrentConfig& cfg, std::uint64_t seed,
                                           const std::string& name = "task_recurrent") {
    cfg.validate();
    ExperimentReport report;
    report.experiment = name;
    report.seed = seed;
    report.config = json{{"world", {{"tasks", world_cfg.tasks}, {"clusters", world_cfg.clusters},
                                    {"dims", world_cfg.dims}, {"box", world_cfg.box},
                                    {"spread", world_cfg.spread}, {"noise", world_cfg.noise},
                                    {"classes", world_cfg.classes}}},
                         {"market", gen.to_json()},
                         {"experiment", cfg.to_json()}};

    const std::size_t max_labels = *std::max_element(cfg.label_counts.begin(), cfg.label_counts.end());
    std::map<std::size_t, std::vector<double>> r_top1, r_top3, r_top2u, hits, reg_top1;
    std::vector<double> reg_random;

    SyntheticWorld world;
    GeneratedMarket market;
    for (std::size_t t = 0; t < cfg.trials; ++t) {
        if (t % cfg.trials_per_market == 0) {
            WorldConfig wc = world_cfg;
            wc.seed = Rng::mix(seed ^ Rng::mix(0x5eed0000 + t / cfg.trials_per_market));
            world = SyntheticWorld(wc);
            market = gen_market(world, gen, Rng::mix(wc.seed + 1));
        }
        const OutputDesc desc = world.output();
        const KernelSpec kernel = island_kernel_for(market.state, market.tags);
        Rng rng(Rng::mix(seed ^ Rng::mix(0x7a1a0000 + t)));
        const std::size_t task = rng.index(world.tasks().size());
        const Sample pool = world.sample_task(task, max_labels, rng);
        const Sample test = world.sample_task(task, cfg.test_m, rng);

        // Exhaustive oracle: every learnware on the user's test data.
        std::vector<double> losses;
        for (const auto& model : market.models) {
            losses.push_back(task_loss(model->predict(test.x), test.y, desc));
        }
        const auto best = static_cast<std::size_t>(std::min_element(losses.begin(), losses.end()) - losses.begin());
        double random_loss = 0.0;
        for (std::size_t d = 0; d < cfg.random_draws; ++d) {
            random_loss += losses[rng.index(losses.size())];
        }
        random_loss /= static_cast<double>(cfg.random_draws);
        reg_random.push_back(random_loss - losses[best]);

        json row{{"trial", t},
                 {"task", task},
                 {"oracle_best", market.ids[best]},
                 {"oracle_best_loss", losses[best]},
                 {"random_loss", random_loss}};
        json per_count = json::array();
        for (std::size_t labels : cfg.label_counts) {
            const Sample own = head(pool, labels);
            ReduceOptions ro;
            ro.seed = rng.next();
            const Requirement req = build_requirement(
                market.tags, own.x,
                cfg.mode == MatchMode::joint ? std::optional<Matrix>(sketch_labels(own.y, desc)) : std::nullopt,
                cfg.requirement_n, kernel, cfg.mode, ro);
            const std::vector<Match> top = search_single(market.state, req, 3);
            require(top.size() >= 3, "the market needs at least three learnwares");
            auto member = [&](std::size_t k) {
                return as_member(market.models[market.task_of(top[k].id)], top[k].id);
            };
            json user_hyper = cfg.user_hyper;
            if (cfg.user_kind == ModelKind::builtin_knn && cfg.user_k_sqrt && !user_hyper.contains("k")) {
                user_hyper["k"] = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(labels))));
            }
            const auto user = train_builtin(cfg.user_kind, own.x, own.y, user_hyper, rng.next());

            const double user_loss = task_loss(user->predict(test.x), test.y, desc);
            const double top1 = losses[market.task_of(top[0].id)];
            ReusePlan plan;
            plan.mode = ReuseMode::ensemble;
            plan.members = {member(0), member(1), member(2)};
            const double top3 = task_loss(deploy(plan, test.x, desc), test.y, desc);
            plan.mode = ReuseMode::ensemble_plus_user;
            plan.members = {member(0), member(1)};
            plan.user_model = user;
            const double top2u = task_loss(deploy(plan, test.x, desc), test.y, desc);

            const bool hit = top[0].id == market.ids[best];
            r_top1[labels].push_back(improvement(user_loss, top1));
            r_top3[labels].push_back(improvement(user_loss, top3));
            r_top2u[labels].push_back(improvement(user_loss, top2u));
            hits[labels].push_back(hit ? 1.0 : 0.0);
            reg_top1[labels].push_back(top1 - losses[best]);
            per_count.push_back(json{{"labels", labels},
                                     {"top1", top[0].id},
                                     {"top1_distance", top[0].distance},
                                     {"top1_is_oracle_best", hit},
                                     {"loss_top1", top1},
                                     {"loss_top3", top3},
                                     {"loss_top2_user", top2u},
                                     {"loss_user", user_loss}});
        }
        row["by_labels"] = per_count;
        report.trials.push_back(row);
    }

    json by_labels = json::array();
    for (std::size_t labels : cfg.label_counts) {
        auto positive = [](double r) { return r > 0.0; };
        const auto& t2 = r_top2u[labels];
        by_labels.push_back(json{{"labels", labels},
                                 {"top1_hit_rate", mean(hits[labels])},
                                 {"mean_top1_regret", mean(reg_top1[labels])},
                                 {"mean_random_regret", mean(reg_random)},
                                 {"mean_ratio_top1", mean(r_top1[labels])},
                                 {"mean_ratio_top3", mean(r_top3[labels])},
                                 {"mean_ratio_top2_user", mean(t2)},
                                 {"positive_fraction_top1", fraction(r_top1[labels], positive)},
                                 {"positive_fraction_top3", fraction(r_top3[labels], positive)},
                                 {"positive_fraction_top2_user", fraction(t2, positive)},
                                 {"worst_ratio_top2_user", *std::min_element(t2.begin(), t2.end())}});
    }
    report.summary = json{{"by_labels", by_labels}};
    return report;
}

} // namespace learnware::bench
