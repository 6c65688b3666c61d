#pragma once

// Monte-Carlo audits of two guarantees: how far a reduced embedding can sit
// from the true kernel mean embedding, and how much risk a user inherits from
// the nearest learnware.

#include "learnware/bench/market_gen.hpp"
#include "learnware/bench/report.hpp"

namespace learnware::bench {

struct KmeBoundConfig {
    std::size_t dims = 2;
    std::size_t m = 500;
    std::vector<std::size_t> n_grid{5, 10, 20, 50};
    double delta = 0.05;
    std::size_t trials = 100;
    // Size of the fresh sample standing in for the true distribution, as a multiple of m.
    std::size_t holdout_factor = 10;
    // Kernel gamma; 0 means 1 / (2 dims).
    double gamma = 0.0;
    // Limit on sqrt(objective) at the largest n.
    double objective_limit = 0.4;
    ReduceOptions reduce;

    double kernel_gamma() const { return gamma > 0.0 ? gamma : 1.0 / (2.0 * static_cast<double>(dims)); }

    void validate() const {
        require(dims >= 1 && m >= 2 && trials >= 1 && holdout_factor >= 1, "sizes must be positive");
        require(!n_grid.empty() && std::is_sorted(n_grid.begin(), n_grid.end()) && n_grid.back() <= m,
                "reduced sizes must be increasing and at most m");
        require(delta > 0.0 && delta < 1.0, "delta must be in (0, 1)");
    }

    json to_json() const {
        return json{{"dims", dims}, {"m", m}, {"n_grid", n_grid}, {"delta", delta}, {"trials", trials},
                    {"holdout_factor", holdout_factor}, {"gamma", kernel_gamma()},
                    {"objective_limit", objective_limit}, {"reduce_outer_iters", reduce.max_outer_iters}};
    }
};

// 2 sqrt(2/n) + sqrt(1/m) + sqrt(2 ln(1/delta) / m).
inline double kme_bound_rhs(std::size_t n, std::size_t m, double delta) {
    const auto dn = static_cast<double>(n);
    const auto dm = static_cast<double>(m);
    return 2.0 * std::sqrt(2.0 / dn) + std::sqrt(1.0 / dm) + std::sqrt(2.0 * std::log(1.0 / delta) / dm);
}

// Exact |mu_w - mu_P| for P = N(0, I_d) under exp(-gamma |x - y|^2).
inline double gaussian_kme_distance(const KernelSpec& k, const WeightedPointSet& w, std::size_t dims) {
    const double g = k.gamma;
    const double half_d = 0.5 * static_cast<double>(dims);
    double cross = 0.0;
    for (Eigen::Index j = 0; j < w.points.rows(); ++j) {
        cross += w.weights(j) * std::exp(-g * w.points.row(j).squaredNorm() / (1.0 + 2.0 * g));
    }
    cross *= std::pow(1.0 + 2.0 * g, -half_d);
    const double sq = rkhs_squared_norm(k, w) - 2.0 * cross + std::pow(1.0 + 4.0 * g, -half_d);
    return std::sqrt(std::max(0.0, sq));
}

// |mu_x|^2 for a uniform-weight sample, without materialising the Gram matrix.
inline double empirical_squared_norm(const KernelSpec& k, const Matrix& x) {
    const Eigen::Index m = x.rows();
    double off = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < i; ++j) {
            off += std::exp(-k.gamma * (x.row(i) - x.row(j)).squaredNorm());
        }
    }
    const auto dm = static_cast<double>(m);
    return (dm + 2.0 * off) / (dm * dm);
}

inline ExperimentReport check_kme_bound(const KmeBoundConfig& cfg, std::uint64_t seed,
                                        const std::string& name = "kme-bound") {
    cfg.validate();
    ExperimentReport report;
    report.experiment = name;
    report.seed = seed;
    report.config = cfg.to_json();
    const KernelSpec kernel(cfg.kernel_gamma());
    const auto d = static_cast<Eigen::Index>(cfg.dims);
    auto draw = [&](std::size_t rows, Rng& rng) {
        Matrix x(static_cast<Eigen::Index>(rows), d);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            for (Eigen::Index c = 0; c < d; ++c) {
                x(r, c) = rng.normal();
            }
        }
        return x;
    };

    std::size_t violations = 0;
    std::size_t checks = 0;
    std::size_t within_limit = 0;
    std::size_t monotone = 0;
    double max_holdout_vs_exact = 0.0;
    std::vector<std::vector<double>> roots(cfg.n_grid.size());
    for (std::size_t t = 0; t < cfg.trials; ++t) {
        Rng rng(Rng::mix(seed ^ Rng::mix(0x4b4d0000 + t)));
        const EmpiricalSketch sketch = sketch_from_data(draw(cfg.m, rng), std::nullopt, OutputDesc{});
        const WeightedPointSet fresh = WeightedPointSet::empirical(draw(cfg.holdout_factor * cfg.m, rng));
        const double fresh_sq = empirical_squared_norm(kernel, fresh.points);
        ReduceOptions ro = cfg.reduce;
        ro.seed = rng.next();
        const std::vector<Reduction> red = reduce_nested(sketch, cfg.n_grid, kernel, ro);

        json per_n = json::array();
        bool mono = true;
        for (std::size_t i = 0; i < red.size(); ++i) {
            const double root = std::sqrt(std::max(0.0, red[i].objective()));
            const WeightedPointSet& w = red[i].spec.reduced;
            const double holdout = std::sqrt(
                std::max(0.0, rkhs_squared_norm(kernel, w) - 2.0 * rkhs_inner(kernel, w, fresh) + fresh_sq));
            const double exact = gaussian_kme_distance(kernel, w, cfg.dims);
            const double rhs = kme_bound_rhs(cfg.n_grid[i], cfg.m, cfg.delta);
            roots[i].push_back(root);
            violations += holdout > rhs ? 1 : 0;
            ++checks;
            max_holdout_vs_exact = std::max(max_holdout_vs_exact, std::abs(holdout - exact));
            if (i > 0 && root > roots[i - 1].back()) {
                mono = false;
            }
            per_n.push_back(json{{"n", cfg.n_grid[i]}, {"sqrt_objective", root}, {"holdout_deviation", holdout},
                                 {"exact_deviation", exact}, {"rhs", rhs}, {"violated", holdout > rhs}});
        }
        within_limit += roots.back().back() <= cfg.objective_limit ? 1 : 0;
        monotone += mono ? 1 : 0;
        report.trials.push_back(json{{"trial", t}, {"by_n", per_n}, {"monotone", mono}});
    }

    json by_n = json::array();
    for (std::size_t i = 0; i < cfg.n_grid.size(); ++i) {
        by_n.push_back(json{{"n", cfg.n_grid[i]},
                            {"rhs", kme_bound_rhs(cfg.n_grid[i], cfg.m, cfg.delta)},
                            {"mean_sqrt_objective", mean(roots[i])},
                            {"max_sqrt_objective", *std::max_element(roots[i].begin(), roots[i].end())}});
    }
    report.summary = json{{"by_n", by_n},
                          {"violation_fraction", static_cast<double>(violations) / static_cast<double>(checks)},
                          {"trials_within_objective_limit", within_limit},
                          {"monotone_trials", monotone},
                          {"max_holdout_vs_exact_gap", max_holdout_vs_exact}};
    return report;
}

struct RiskBoundConfig {
    WorldConfig world{.tasks = 5, .min_separation = 6.0, .noise = 0.1};
    GenOptions gen;
    std::size_t trials = 200;
    std::size_t trials_per_market = 20;
    // User sample size and requirement size.
    std::size_t m = 1000;
    std::size_t n = 100;
    double max_shift = 3.0;
    // Losses are min(|f - y|, U).
    double loss_cap = 1.0;
    double constant = 3.0;
    std::size_t eps_m = 2000;
    ReduceOptions reduce;

    void validate() const {
        require(world.classes == 0, "the risk audit uses a regression world");
        require(trials >= 2 && trials_per_market >= 1 && m >= 1 && n >= 1 && eps_m >= 1, "sizes must be positive");
        require(max_shift >= 0.0 && loss_cap > 0.0 && constant >= 0.0, "shift, cap and constant must be nonnegative");
    }

    json to_json() const {
        return json{{"world", {{"tasks", world.tasks}, {"dims", world.dims}, {"box", world.box},
                               {"min_separation", world.min_separation}, {"spread", world.spread},
                               {"noise", world.noise}}},
                    {"market", gen.to_json()}, {"trials", trials}, {"trials_per_market", trials_per_market},
                    {"m", m}, {"n", n}, {"max_shift", max_shift}, {"loss_cap", loss_cap},
                    {"constant", constant}, {"eps_m", eps_m}, {"reduce_outer_iters", reduce.max_outer_iters}};
    }
};

inline double capped_abs_loss(const Matrix& pred, const Matrix& y, double cap) {
    require(pred.rows() == y.rows() && pred.cols() == y.cols() && y.rows() > 0, "prediction shape mismatch");
    return (pred - y).array().abs().min(cap).mean();
}

inline ExperimentReport check_task_recurrent_bound(const RiskBoundConfig& cfg, std::uint64_t seed,
                                                   const std::string& name = "risk-bound") {
    cfg.validate();
    ExperimentReport report;
    report.experiment = name;
    report.seed = seed;
    report.config = cfg.to_json();
    const double slack = cfg.constant * (1.0 / std::sqrt(static_cast<double>(cfg.m)) +
                                         1.0 / std::sqrt(static_cast<double>(cfg.n)));

    std::vector<double> shifts, etas, risks, margins;
    std::size_t vacuous = 0;
    SyntheticWorld world;
    GeneratedMarket market;
    double eps_hat = 0.0;
    for (std::size_t t = 0; t < cfg.trials; ++t) {
        if (t % cfg.trials_per_market == 0) {
            WorldConfig wc = cfg.world;
            wc.seed = Rng::mix(seed ^ Rng::mix(0x52b00000 + t / cfg.trials_per_market));
            world = SyntheticWorld(wc);
            market = gen_market(world, cfg.gen, Rng::mix(wc.seed + 1));
            Rng erng(Rng::mix(wc.seed + 2));
            eps_hat = 0.0;
            for (std::size_t i = 0; i < world.tasks().size(); ++i) {
                const Sample s = world.sample_task(i, cfg.eps_m, erng);
                eps_hat = std::max(eps_hat, capped_abs_loss(market.models[i]->predict(s.x), s.y, cfg.loss_cap));
            }
        }
        Rng rng(Rng::mix(seed ^ Rng::mix(0x5a1f0000 + t)));
        const std::size_t task = rng.index(world.tasks().size());
        Vector dir(static_cast<Eigen::Index>(world.dims()));
        for (Eigen::Index c = 0; c < dir.size(); ++c) {
            dir(c) = rng.normal();
        }
        const double shift = rng.uniform(0.0, cfg.max_shift);
        const Sample user = world.sample(world.tasks()[task].shifted(shift * dir.normalized()), cfg.m, rng);

        ReduceOptions ro = cfg.reduce;
        ro.seed = rng.next();
        const Requirement req = build_requirement(market.tags, user.x, user.y, cfg.n,
                                                  island_kernel_for(market.state, market.tags), MatchMode::joint, ro);
        const Match top = search_single(market.state, req, 1).front();
        const double eta = top.distance;
        const double risk =
            capped_abs_loss(market.models[market.task_of(top.id)]->predict(user.x), user.y, cfg.loss_cap);
        const double bound = eps_hat + cfg.loss_cap * eta + slack;
        vacuous += bound >= cfg.loss_cap ? 1 : 0;

        shifts.push_back(shift);
        etas.push_back(eta);
        risks.push_back(risk);
        margins.push_back(bound - risk);
        report.trials.push_back(json{{"trial", t},
                                     {"task", task},
                                     {"shift", shift},
                                     {"top1", top.id},
                                     {"top1_is_source_task", top.id == market.ids[task]},
                                     {"eta", eta},
                                     {"risk", risk},
                                     {"epsilon_hat", eps_hat},
                                     {"bound", bound},
                                     {"holds", risk <= bound}});
    }
    report.summary = json{{"hold_rate", fraction(margins, [](double v) { return v >= 0.0; })},
                          {"slack_term", slack},
                          {"vacuous_fraction", static_cast<double>(vacuous) / static_cast<double>(cfg.trials)},
                          {"min_margin", *std::min_element(margins.begin(), margins.end())},
                          {"mean_risk", mean(risks)},
                          {"mean_eta", mean(etas)},
                          {"shift_eta_rank_correlation", rank_correlation(shifts, etas)},
                          {"shift_risk_rank_correlation", rank_correlation(shifts, risks)}};
    return report;
}

} // namespace learnware::bench
