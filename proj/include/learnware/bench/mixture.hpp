#pragma once

// The user's distribution is a mixture of learnware task distributions.
// Measures weight recovery by the market's mixture search, checks the solver
// against an exhaustive simplex grid, and audits selector deployment.

#include "learnware/bench/market_gen.hpp"
#include "learnware/bench/report.hpp"
#include "learnware/reuse.hpp"
#include "learnware/simplex_qp.hpp"

#include <limits>
#include <map>
#include <numeric>

namespace learnware::bench {

struct MixtureConfig {
    std::size_t components = 3;
    // Fixed mixture weights; empty draws uniformly from the simplex each trial.
    std::vector<double> w_true;
    std::size_t m_u = 2000;
    std::size_t requirement_n = 30;
    std::size_t trials = 200;
    std::size_t trials_per_market = 20;
    // Own-task sample used to estimate each learnware's error.
    std::size_t eps_m = 2000;
    double grid_step = 0.002;
    ReduceOptions reduce;

    void validate() const {
        require(components >= 1 && trials >= 1 && trials_per_market >= 1, "empty experiment");
        require(w_true.empty() || w_true.size() == components, "one fixed weight per component is required");
        require(m_u >= 1 && requirement_n >= 1 && eps_m >= 1, "sizes must be positive");
        require(grid_step > 0.0 && grid_step <= 0.5, "grid step must be in (0, 0.5]");
    }

    json to_json() const {
        return json{{"components", components}, {"w_true", w_true}, {"m_u", m_u},
                    {"requirement_n", requirement_n}, {"trials", trials},
                    {"trials_per_market", trials_per_market}, {"eps_m", eps_m},
                    {"grid_step", grid_step}, {"reduce_outer_iters", reduce.max_outer_iters}};
    }
};

// Minimum of w'Cw - 2c'w over the grid {w >= 0, sum w = 1, w_i multiple of step},
// for up to three coordinates. Shares no code with the simplex solver.
inline double simplex_grid_minimum(const Matrix& C, const Vector& c, double step) {
    const auto k = c.size();
    require(k >= 1 && k <= 3 && C.rows() == k && C.cols() == k, "grid oracle handles one to three coordinates");
    const int steps = static_cast<int>(std::lround(1.0 / step));
    auto f = [&](double a, double b, double d) {
        const double w[3] = {a, b, d};
        double v = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) {
            for (Eigen::Index j = 0; j < k; ++j) {
                v += w[i] * C(i, j) * w[j];
            }
            v -= 2.0 * c(i) * w[i];
        }
        return v;
    };
    if (k == 1) {
        return f(1.0, 0.0, 0.0);
    }
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a <= steps; ++a) {
        const double wa = static_cast<double>(a) / steps;
        if (k == 2) {
            best = std::min(best, f(wa, 1.0 - wa, 0.0));
            continue;
        }
        for (int b = 0; a + b <= steps; ++b) {
            const double wb = static_cast<double>(b) / steps;
            best = std::min(best, f(wa, wb, std::max(0.0, 1.0 - wa - wb)));
        }
    }
    return best;
}

inline ExperimentReport run_mixture(const WorldConfig& world_cfg, const GenOptions& gen, const MixtureConfig& cfg,
                                    std::uint64_t seed, const std::string& name = "mixture") {
    cfg.validate();
    require(world_cfg.tasks >= cfg.components, "not enough tasks for the mixture");
    ExperimentReport report;
    report.experiment = name;
    report.seed = seed;
    report.config = json{{"world", {{"tasks", world_cfg.tasks}, {"dims", world_cfg.dims}, {"box", world_cfg.box},
                                    {"min_separation", world_cfg.min_separation}, {"spread", world_cfg.spread},
                                    {"noise", world_cfg.noise}, {"classes", world_cfg.classes}}},
                         {"market", gen.to_json()},
                         {"experiment", cfg.to_json()}};

    std::vector<double> l1s, grid_gaps, bound_slack, sel_errs, ens_errs, r_g, eps_hat;
    std::size_t residual_ok = 0;
    SyntheticWorld world;
    GeneratedMarket market;
    std::vector<double> eps;
    for (std::size_t t = 0; t < cfg.trials; ++t) {
        if (t % cfg.trials_per_market == 0) {
            WorldConfig wc = world_cfg;
            wc.seed = Rng::mix(seed ^ Rng::mix(0x3140000 + t / cfg.trials_per_market));
            world = SyntheticWorld(wc);
            market = gen_market(world, gen, Rng::mix(wc.seed + 1));
            eps.clear();
            Rng erng(Rng::mix(wc.seed + 2));
            for (std::size_t i = 0; i < world.tasks().size(); ++i) {
                const Sample s = world.sample_task(i, cfg.eps_m, erng);
                eps.push_back(task_loss(market.models[i]->predict(s.x), s.y, world.output()));
            }
        }
        const OutputDesc desc = world.output();
        Rng rng(Rng::mix(seed ^ Rng::mix(0x6d780000 + t)));

        std::vector<std::size_t> order(world.tasks().size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = 0; i < cfg.components; ++i) {
            std::swap(order[i], order[i + rng.index(order.size() - i)]);
        }
        const std::vector<std::size_t> comps(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.components));
        Vector w(static_cast<Eigen::Index>(cfg.components));
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            w(i) = cfg.w_true.empty() ? -std::log(1.0 - rng.uniform()) : cfg.w_true[static_cast<std::size_t>(i)];
        }
        w /= w.sum();
        const Sample user = world.sample_mixture(comps, w, cfg.m_u, rng);

        ReduceOptions ro = cfg.reduce;
        ro.seed = rng.next();
        const Requirement req = build_requirement(market.tags, user.x, std::nullopt, cfg.requirement_n,
                                                  island_kernel_for(market.state, market.tags),
                                                  MatchMode::input_marginal, ro);
        const MixtureSolution sol = search_mixture(market.state, req);
        const std::vector<Match> singles = search_single(market.state, req, 3);

        std::map<LearnwareId, double> truth;
        for (std::size_t i = 0; i < comps.size(); ++i) {
            truth[market.ids[comps[i]]] += w(static_cast<Eigen::Index>(i));
        }
        double l1 = 0.0;
        for (const auto& [id, wt] : truth) {
            l1 += std::abs(wt - (sol.weights.count(id) ? sol.weights.at(id) : 0.0));
        }
        for (const auto& [id, wt] : sol.weights) {
            l1 += truth.count(id) ? 0.0 : wt;
        }
        const bool res_ok = sol.residual <= singles.front().distance;
        residual_ok += res_ok ? 1 : 0;

        // Solver against the grid on the three nearest candidates, built from
        // the input marginals of the stored specifications.
        const auto k = static_cast<Eigen::Index>(singles.size());
        std::vector<WeightedPointSet> cand;
        for (const Match& m : singles) {
            cand.push_back(marginalize_inputs(market.state.record(m.id).spec).reduced);
        }
        const KernelSpec& kernel = req.spec->kernel;
        Matrix C(k, k);
        Vector c(k);
        for (Eigen::Index i = 0; i < k; ++i) {
            c(i) = rkhs_inner(kernel, cand[static_cast<std::size_t>(i)], req.spec->reduced);
            for (Eigen::Index j = 0; j < k; ++j) {
                C(i, j) = rkhs_inner(kernel, cand[static_cast<std::size_t>(i)], cand[static_cast<std::size_t>(j)]);
            }
        }
        const double fw = minimize_on_simplex(C, c).objective;
        const double grid = simplex_grid_minimum(C, c, cfg.grid_step);

        // Selector deployment over the recovered mixture.
        std::vector<ReuseMember> members;
        for (const auto& [id, wt] : sol.weights) {
            ReuseMember m = as_member(market.models[market.task_of(id)], id);
            m.spec = market.state.record(id).spec;
            m.weight = wt;
            members.push_back(std::move(m));
        }
        const std::vector<std::size_t> g = selector_assign(members, user.x);
        const double sel_err = task_loss(selector_reuse(members, user.x), user.y, desc);
        const double ens_err = task_loss(ensemble_average(members, user.x, desc), user.y, desc);
        std::size_t misrouted = 0;
        for (std::size_t r = 0; r < g.size(); ++r) {
            misrouted += members[g[r]].id != market.ids[user.component[r]] ? 1 : 0;
        }
        const double rg = static_cast<double>(misrouted) / static_cast<double>(g.size());
        double eh = 0.0;
        for (std::size_t i : comps) {
            eh = std::max(eh, eps[i]);
        }
        for (const auto& m : members) {
            eh = std::max(eh, eps[market.task_of(m.id)]);
        }
        const double bound = eh + rg + 2.0 / std::sqrt(static_cast<double>(cfg.m_u));

        l1s.push_back(l1);
        grid_gaps.push_back(std::abs(fw - grid));
        sel_errs.push_back(sel_err);
        ens_errs.push_back(ens_err);
        r_g.push_back(rg);
        eps_hat.push_back(eh);
        bound_slack.push_back(bound - sel_err);

        json wt = json::object();
        for (const auto& [id, v] : sol.weights) {
            wt[std::to_string(id)] = v;
        }
        json tw = json::object();
        for (const auto& [id, v] : truth) {
            tw[std::to_string(id)] = v;
        }
        report.trials.push_back(json{{"trial", t},
                                     {"w_true", tw},
                                     {"w_hat", wt},
                                     {"l1_error", l1},
                                     {"residual", sol.residual},
                                     {"best_single_distance", singles.front().distance},
                                     {"residual_not_worse", res_ok},
                                     {"solver_objective", fw},
                                     {"grid_objective", grid},
                                     {"selector_error", sel_err},
                                     {"ensemble_error", ens_err},
                                     {"selector_risk", rg},
                                     {"epsilon_hat", eh},
                                     {"selector_bound", bound},
                                     {"selector_bound_holds", sel_err <= bound}});
    }
    const double n = static_cast<double>(cfg.trials);
    report.summary = json{
        {"mean_l1_error", mean(l1s)},
        {"max_l1_error", *std::max_element(l1s.begin(), l1s.end())},
        {"fraction_l1_within_0.1", fraction(l1s, [](double v) { return v <= 0.1; })},
        {"residual_not_worse_fraction", static_cast<double>(residual_ok) / n},
        {"max_solver_grid_gap", *std::max_element(grid_gaps.begin(), grid_gaps.end())},
        {"mean_selector_error", mean(sel_errs)},
        {"mean_ensemble_error", mean(ens_errs)},
        {"mean_selector_risk", mean(r_g)},
        {"mean_epsilon_hat", mean(eps_hat)},
        {"selector_bound_hold_rate", fraction(bound_slack, [](double s) { return s >= 0.0; })}};
    return report;
}

} // namespace learnware::bench
