#pragma once

// Two input blocks ("text" and "video") with target h(t, v) = h_text(t) + h_video(v).
// Each developer sees one block, so learnwares live on two islands. The user
// holds both blocks and reuses learnwares from each; a spanning model over
// both blocks then merges the islands.

#include "learnware/bench/market_gen.hpp"
#include "learnware/bench/report.hpp"
#include "learnware/reuse.hpp"

#include <map>

namespace learnware::bench {

struct ModalitiesConfig {
    // Per-block world: tasks are the developers of that modality.
    WorldConfig block{.dims = 2, .tasks = 6, .noise = 0.0};
    double noise = 0.1;
    std::vector<ModelKind> kinds{ModelKind::builtin_knn, ModelKind::builtin_stump_ensemble};
    json hyper = json{{"builtin_knn", {{"k", 20}}}, {"builtin_stump_ensemble", {{"rounds", 300}}}};
    std::size_t train_m = 1000;
    std::size_t n = 10;
    std::size_t spanning_train_m = 2000;
    std::vector<std::size_t> label_counts{100, 200, 300, 1000};
    std::size_t seeds = 50;
    std::size_t test_m = 1000;
    std::size_t requirement_n = 10;
    double augment_lambda = 1e-3;
    ReduceOptions reduce;

    void validate() const {
        block.validate();
        require(block.classes == 0, "the modality world is a regression world");
        require(block.tasks >= 3, "each modality needs at least three learnwares");
        require(!kinds.empty() && !label_counts.empty() && seeds >= 1, "empty experiment");
        require(train_m >= 1 && spanning_train_m >= 1 && test_m >= 1 && requirement_n >= 1 && n >= 1,
                "sizes must be positive");
        require(noise >= 0.0 && augment_lambda >= 0.0, "noise and regularisation must be nonnegative");
    }

    json to_json() const {
        json k = json::array();
        for (ModelKind kind : kinds) {
            k.push_back(to_string(kind));
        }
        return json{{"block", {{"dims", block.dims}, {"tasks", block.tasks}, {"box", block.box},
                               {"min_separation", block.min_separation}, {"spread", block.spread},
                               {"rbf_count", block.rbf_count}, {"rbf_width", block.rbf_width}}},
                    {"noise", noise}, {"kinds", k}, {"hyper", hyper}, {"train_m", train_m}, {"n", n},
                    {"spanning_train_m", spanning_train_m}, {"label_counts", label_counts}, {"seeds", seeds},
                    {"test_m", test_m}, {"requirement_n", requirement_n}, {"augment_lambda", augment_lambda},
                    {"reduce_outer_iters", reduce.max_outer_iters}};
    }
};

class ModalityWorld {
public:
    ModalityWorld(const WorldConfig& block, double noise, std::uint64_t seed) : noise_(noise) {
        WorldConfig t = block;
        t.seed = Rng::mix(seed ^ 0x7e47);
        WorldConfig v = block;
        v.seed = Rng::mix(seed ^ 0x71de0);
        text_ = SyntheticWorld(t);
        video_ = SyntheticWorld(v);
    }

    const SyntheticWorld& text() const { return text_; }
    const SyntheticWorld& video() const { return video_; }

    // Inputs are [text, video]; the text block comes first in canonical field order.
    Sample sample(std::size_t text_task, std::size_t video_task, std::size_t m, Rng& rng) const {
        Sample s;
        s.x = hconcat(text_.tasks().at(text_task).sample(m, rng), video_.tasks().at(video_task).sample(m, rng));
        s.y = text_.truth(s.x.leftCols(text_.dims())) + video_.truth(s.x.rightCols(video_.dims()));
        for (Eigen::Index r = 0; r < s.y.rows(); ++r) {
            s.y(r, 0) += rng.normal(0.0, noise_);
        }
        return s;
    }

private:
    double noise_ = 0.0;
    SyntheticWorld text_;
    SyntheticWorld video_;
};

inline json modality_tags(const std::vector<std::pair<std::string, std::size_t>>& fields) {
    json input = json::array();
    for (const auto& [name, dim] : fields) {
        input.push_back(json{{"name", name}, {"dim", dim}});
    }
    return json{{"input", input}, {"output", to_json(OutputDesc{OutputKind::regression, 1})}, {"objective", "rmse"}};
}

inline ExperimentReport run_modalities(const ModalitiesConfig& cfg, std::uint64_t seed,
                                       const std::string& name = "modalities") {
    cfg.validate();
    ExperimentReport report;
    report.experiment = name;
    report.seed = seed;
    report.config = cfg.to_json();

    const OutputDesc desc{OutputKind::regression, 1};
    const std::size_t dt = cfg.block.dims;
    const json text_tags = modality_tags({{"text", dt}});
    const json video_tags = modality_tags({{"video", dt}});
    const json both_tags = modality_tags({{"text", dt}, {"video", dt}});
    std::vector<std::size_t> text_cols(dt);
    std::vector<std::size_t> video_cols(dt);
    for (std::size_t c = 0; c < dt; ++c) {
        text_cols[c] = c;
        video_cols[c] = dt + c;
    }
    const std::size_t max_labels = *std::max_element(cfg.label_counts.begin(), cfg.label_counts.end());

    std::map<std::size_t, std::vector<double>> r_text, r_video, r_top3, r_both, hit_text, hit_video;
    std::vector<double> merged_ok, members_ok, matchable_ok;
    for (std::size_t s = 0; s < cfg.seeds; ++s) {
        const std::uint64_t ws = Rng::mix(seed ^ Rng::mix(0x60da0000 + s));
        const ModalityWorld world(cfg.block, cfg.noise, ws);
        MarketState state;
        state.config.probe_scale = world_probe_scale(cfg.block);

        // Developers: text developer i and video developer i both draw from
        // the pair (T_i, V_i) but keep only their own block.
        std::vector<LearnwareId> text_ids, video_ids;
        std::map<LearnwareId, ReuseMember> members;
        for (std::size_t i = 0; i < cfg.block.tasks; ++i) {
            for (int side = 0; side < 2; ++side) {
                Rng rng(Rng::mix(ws ^ Rng::mix(2 * i + static_cast<std::size_t>(side) + 1)));
                const Sample full = world.sample(i, i, cfg.train_m, rng);
                const Matrix x = side == 0 ? Matrix(full.x.leftCols(dt)) : Matrix(full.x.rightCols(dt));
                const ModelKind kind = cfg.kinds[i % cfg.kinds.size()];
                const auto model = train_builtin(kind, x, full.y, cfg.hyper.value(to_string(kind), json::object()),
                                                 rng.next());
                ReduceOptions ro = cfg.reduce;
                ro.seed = rng.next();
                const LearnwareId id = submit(state, model->artifact(), side == 0 ? text_tags : video_tags,
                                              sketch_from_data(x, full.y, desc), cfg.n, {}, ro)
                                           .id;
                (side == 0 ? text_ids : video_ids).push_back(id);
                ReuseMember m = as_member(model, id);
                m.columns = side == 0 ? text_cols : video_cols;
                members.emplace(id, std::move(m));
            }
        }
        const KernelSpec text_kernel = island_kernel_for(state, text_tags);
        const KernelSpec video_kernel = island_kernel_for(state, video_tags);

        Rng rng(Rng::mix(seed ^ Rng::mix(0x0e5e0000 + s)));
        const std::size_t a = rng.index(cfg.block.tasks);
        const std::size_t b = rng.index(cfg.block.tasks);
        const Sample pool = world.sample(a, b, max_labels, rng);
        const Sample test = world.sample(a, b, cfg.test_m, rng);

        json row{{"seed_index", s}, {"text_task", a}, {"video_task", b}};
        json per_count = json::array();
        for (std::size_t labels : cfg.label_counts) {
            const Sample own = head(pool, labels);
            auto top3 = [&](const json& tags, const KernelSpec& kernel, const std::vector<std::size_t>& cols) {
                ReduceOptions ro = cfg.reduce;
                ro.seed = rng.next();
                const Requirement req = build_requirement(tags, select_columns(own.x, cols), std::nullopt,
                                                          cfg.requirement_n, kernel, MatchMode::input_marginal, ro);
                const std::vector<Match> top = search_single(state, req, 3);
                require(top.size() == 3, "each modality needs three matches");
                return top;
            };
            const std::vector<Match> tt = top3(text_tags, text_kernel, text_cols);
            const std::vector<Match> tv = top3(video_tags, video_kernel, video_cols);
            const auto k = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(labels))));
            const auto user = train_builtin(ModelKind::builtin_knn, own.x, own.y, json{{"k", k}});
            const double user_loss = rmse(user->predict(test.x), test.y);

            auto augmented = [&](const std::vector<LearnwareId>& ids) {
                ReusePlan plan;
                plan.mode = ReuseMode::feature_augment;
                for (LearnwareId id : ids) {
                    plan.members.push_back(members.at(id));
                }
                plan.user_model = train_builtin(ModelKind::builtin_ridge, augment_features(plan.members, own.x), own.y,
                                                json{{"lambda", cfg.augment_lambda}});
                return rmse(deploy(plan, test.x, desc), test.y);
            };
            const double l_text = rmse(members.at(tt[0].id).predict(test.x), test.y);
            const double l_video = rmse(members.at(tv[0].id).predict(test.x), test.y);
            const double l_top3 = augmented({tt[0].id, tt[1].id, tt[2].id, tv[0].id, tv[1].id, tv[2].id});
            const double l_both = augmented({tt[0].id, tv[0].id});

            r_text[labels].push_back(improvement(user_loss, l_text));
            r_video[labels].push_back(improvement(user_loss, l_video));
            r_top3[labels].push_back(improvement(user_loss, l_top3));
            r_both[labels].push_back(improvement(user_loss, l_both));
            hit_text[labels].push_back(tt[0].id == text_ids[a] ? 1.0 : 0.0);
            hit_video[labels].push_back(tv[0].id == video_ids[b] ? 1.0 : 0.0);
            per_count.push_back(json{{"labels", labels},
                                     {"top1_text", tt[0].id},
                                     {"top1_video", tv[0].id},
                                     {"loss_user", user_loss},
                                     {"loss_top1_text", l_text},
                                     {"loss_top1_video", l_video},
                                     {"loss_top3", l_top3},
                                     {"loss_top1_both_user", l_both}});
        }
        row["by_labels"] = per_count;

        // Spanning model over both blocks, trained on every developer pair.
        Rng srng(Rng::mix(ws ^ 0x5ba9));
        Sample span;
        for (std::size_t i = 0; i < cfg.block.tasks; ++i) {
            const Sample part = world.sample(i, i, cfg.spanning_train_m / cfg.block.tasks + 1, srng);
            span.x = span.x.size() == 0 ? part.x : vconcat(span.x, part.x);
            span.y = span.y.size() == 0 ? part.y : vconcat(span.y, part.y);
        }
        const auto span_model = train_builtin(ModelKind::builtin_knn, span.x, span.y, cfg.hyper.value("builtin_knn", json::object()));
        ReduceOptions ro = cfg.reduce;
        ro.seed = srng.next();
        const std::size_t islands_before = state.islands.all().size();
        submit(state, span_model->artifact(), both_tags, sketch_from_data(span.x, span.y, desc), cfg.n, {}, ro);
        const Island& live = state.islands.get(*state.islands.locate(make_signature(both_tags)));
        const bool merged = live.merged_from.has_value() && state.islands.all().size() == islands_before + 1 &&
                            state.islands.locate(make_signature(text_tags)) == live.id &&
                            state.islands.locate(make_signature(video_tags)) == live.id;

        // Matchable: every record's own specification finds it first.
        std::size_t self_top1 = 0;
        for (const auto& [id, rec] : state.records) {
            Requirement req;
            req.tags = rec.tags;
            req.mode = MatchMode::joint;
            req.spec = rec.spec;
            self_top1 += search_single(state, req, 1).front().id == id ? 1 : 0;
        }

        merged_ok.push_back(merged ? 1.0 : 0.0);
        members_ok.push_back(live.members.size() == 2 * cfg.block.tasks + 1 ? 1.0 : 0.0);
        matchable_ok.push_back(self_top1 == state.records.size() ? 1.0 : 0.0);
        row["merge"] = json{{"merged", merged},
                            {"merged_members", live.members.size()},
                            {"self_top1", self_top1},
                            {"records", state.records.size()}};
        report.trials.push_back(row);
    }

    json by_labels = json::array();
    auto positive = [](double r) { return r > 0.0; };
    for (std::size_t labels : cfg.label_counts) {
        by_labels.push_back(json{{"labels", labels},
                                 {"mean_ratio_top1_text", mean(r_text[labels])},
                                 {"mean_ratio_top1_video", mean(r_video[labels])},
                                 {"mean_ratio_top3", mean(r_top3[labels])},
                                 {"mean_ratio_top1_both_user", mean(r_both[labels])},
                                 {"positive_fraction_top1_text", fraction(r_text[labels], positive)},
                                 {"positive_fraction_top1_video", fraction(r_video[labels], positive)},
                                 {"positive_fraction_top3", fraction(r_top3[labels], positive)},
                                 {"positive_fraction_top1_both_user", fraction(r_both[labels], positive)},
                                 {"top1_text_hit_rate", mean(hit_text[labels])},
                                 {"top1_video_hit_rate", mean(hit_video[labels])}});
    }
    report.summary = json{{"by_labels", by_labels},
                          {"merged_fraction", mean(merged_ok)},
                          {"merged_member_count_ok_fraction", mean(members_ok)},
                          {"all_matchable_fraction", mean(matchable_ok)}};
    return report;
}

} // namespace learnware::bench
