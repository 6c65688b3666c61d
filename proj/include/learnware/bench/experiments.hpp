#pragma once

// Named experiments with their default setups.

#include "learnware/bench/bounds.hpp"
#include "learnware/bench/mixture.hpp"
#include "learnware/bench/modalities.hpp"
#include "learnware/bench/task_recurrent.hpp"

#include <functional>
#include <optional>

namespace learnware::bench {

inline constexpr int kBenchReduceIters = 30;

struct TaskRecurrentSetup {
    WorldConfig world;
    GenOptions gen;
    TaskRecurrentConfig exp;
};

struct MixtureSetup {
    WorldConfig world;
    GenOptions gen;
    MixtureConfig exp;
};

// Twenty well-separated regression tasks; does the market's Top-1 match the
// exhaustive oracle's best learnware?
inline TaskRecurrentSetup identification_setup() {
    TaskRecurrentSetup s;
    s.world.tasks = 20;
    s.gen.market.probe_scale = world_probe_scale(s.world);
    s.gen.reduce.max_outer_iters = kBenchReduceIters;
    s.exp.label_counts = {100};
    s.exp.trials = 100;
    s.exp.trials_per_market = 20;
    return s;
}

// Fifty learnwares over ten clusters of related tasks; reuse against a user
// model trained on growing label counts.
inline TaskRecurrentSetup fig4_setup() {
    TaskRecurrentSetup s;
    s.world.tasks = 50;
    s.world.clusters = 10;
    s.world.cluster_jitter = 0.3;
    s.world.min_separation = 4.0;
    s.world.spread = 0.7;
    s.world.noise = 0.3;
    s.world.rbf_width = 3.0;
    s.gen.kinds = {ModelKind::builtin_knn};
    s.gen.hyper = json{{"builtin_knn", {{"k", 30}}}};
    s.gen.train_m = 2000;
    s.gen.market.probe_scale = world_probe_scale(s.world);
    s.gen.reduce.max_outer_iters = kBenchReduceIters;
    s.exp.label_counts = {100, 200, 500, 1000, 2000};
    s.exp.trials = 50;
    s.exp.trials_per_market = 5;
    return s;
}

// Three-class world; the user draws from a mixture of three tasks.
inline MixtureSetup mixture_setup() {
    MixtureSetup s;
    s.world.tasks = 8;
    s.world.classes = 3;
    s.world.min_separation = 5.0;
    s.world.noise = 0.05;
    s.gen.kinds = {ModelKind::builtin_knn, ModelKind::builtin_stump_ensemble};
    s.gen.hyper = json{{"builtin_knn", {{"k", 10}}}};
    s.gen.train_m = 2000;
    s.gen.market.probe_scale = world_probe_scale(s.world);
    s.gen.reduce.max_outer_iters = kBenchReduceIters;
    s.exp.reduce.max_outer_iters = kBenchReduceIters;
    return s;
}

inline ModalitiesConfig modalities_setup() {
    ModalitiesConfig c;
    c.reduce.max_outer_iters = kBenchReduceIters;
    return c;
}

inline KmeBoundConfig kme_bound_setup() { return KmeBoundConfig{}; }

inline RiskBoundConfig risk_bound_setup() {
    RiskBoundConfig c;
    c.gen.market.probe_scale = world_probe_scale(c.world);
    c.gen.reduce.max_outer_iters = kBenchReduceIters;
    c.reduce.max_outer_iters = kBenchReduceIters;
    return c;
}

struct Experiment {
    std::string name;
    std::string description;
    // Runs with the default setup; `trials` overrides the trial (or seed) count.
    std::function<ExperimentReport(std::uint64_t seed, std::optional<std::size_t> trials)> run;
};

inline const std::vector<Experiment>& experiments() {
    static const std::vector<Experiment> all{
        {"fig4", "reuse strategies against a user-only model across label counts",
         [](std::uint64_t seed, std::optional<std::size_t> trials) {
             TaskRecurrentSetup s = fig4_setup();
             s.exp.trials = trials.value_or(s.exp.trials);
             return run_task_recurrent(s.world, s.gen, s.exp, seed, "fig4");
         }},
        {"identification", "market Top-1 against the exhaustive oracle",
         [](std::uint64_t seed, std::optional<std::size_t> trials) {
             TaskRecurrentSetup s = identification_setup();
             s.exp.trials = trials.value_or(s.exp.trials);
             return run_task_recurrent(s.world, s.gen, s.exp, seed, "identification");
         }},
        {"mixture", "mixture weight recovery and selector deployment",
         [](std::uint64_t seed, std::optional<std::size_t> trials) {
             MixtureSetup s = mixture_setup();
             s.exp.trials = trials.value_or(s.exp.trials);
             return run_mixture(s.world, s.gen, s.exp, seed, "mixture");
         }},
        {"modalities", "two modalities, per-modality reuse and island merge",
         [](std::uint64_t seed, std::optional<std::size_t> trials) {
             ModalitiesConfig c = modalities_setup();
             c.seeds = trials.value_or(c.seeds);
             return run_modalities(c, seed, "modalities");
         }},
        {"kme-bound", "reduced embedding deviation against its guarantee",
         [](std::uint64_t seed, std::optional<std::size_t> trials) {
             KmeBoundConfig c = kme_bound_setup();
             c.trials = trials.value_or(c.trials);
             return check_kme_bound(c, seed, "kme-bound");
         }},
        {"risk-bound", "inherited user risk against its guarantee",
         [](std::uint64_t seed, std::optional<std::size_t> trials) {
             RiskBoundConfig c = risk_bound_setup();
             c.trials = trials.value_or(c.trials);
             return check_task_recurrent_bound(c, seed, "risk-bound");
         }},
    };
    return all;
}

inline const Experiment& find_experiment(const std::string& name) {
    for (const auto& e : experiments()) {
        if (e.name == name) {
            return e;
        }
    }
    std::string known;
    for (const auto& e : experiments()) {
        known += (known.empty() ? "" : ", ") + e.name;
    }
    throw UsageError("unknown experiment '" + name + "' (known: " + known + ")");
}

} // namespace learnware::bench
