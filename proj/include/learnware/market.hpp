#pragma once

// The market proper: accepting submissions (quality checks, island
// assignment, specification storage) and identifying learnwares for a user
// requirement (single best, mixtures, anchor feedback).
//
// MarketState is a plain value. Read operations take it by const reference;
// write operations mutate it in place. Concurrency is layered on top by the
// service, which publishes immutable snapshots.

#include "learnware/codec.hpp"
#include "learnware/external_adapter.hpp"
#include "learnware/kernel.hpp"
#include "learnware/kmedoids.hpp"
#include "learnware/model_zoo.hpp"
#include "learnware/rkme.hpp"
#include "learnware/simplex_qp.hpp"
#include "learnware/taxonomy.hpp"

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace learnware {

struct MarketConfig {
    std::size_t probe_count = 128;
    std::size_t bridge_count = 512;
    // Scale of the standard-normal inputs used for probing and island calibration.
    double probe_scale = 1.0;
    double latency_budget_ms = 10000.0;
    std::size_t max_spec_rows = 512;
    std::size_t candidate_cap = 16;
    std::uint64_t seed = 0;

    json to_json() const {
        return json{{"probe_count", probe_count},     {"bridge_count", bridge_count},
                    {"probe_scale", probe_scale},     {"latency_budget_ms", latency_budget_ms},
                    {"max_spec_rows", max_spec_rows}, {"candidate_cap", candidate_cap},
                    {"seed", seed}};
    }

    static MarketConfig from_json(const json& j) {
        MarketConfig c;
        c.probe_count = j.value("probe_count", c.probe_count);
        c.bridge_count = j.value("bridge_count", c.bridge_count);
        c.probe_scale = j.value("probe_scale", c.probe_scale);
        c.latency_budget_ms = j.value("latency_budget_ms", c.latency_budget_ms);
        c.max_spec_rows = j.value("max_spec_rows", c.max_spec_rows);
        c.candidate_cap = j.value("candidate_cap", c.candidate_cap);
        c.seed = j.value("seed", c.seed);
        c.validate();
        return c;
    }

    void validate() const {
        require(probe_count >= 1 && bridge_count >= 2, "probe and bridge counts must be positive");
        require(probe_scale > 0.0 && latency_budget_ms > 0.0, "probe scale and latency budget must be positive");
        require(max_spec_rows >= 1 && candidate_cap >= 1, "row and candidate limits must be positive");
    }
};

struct QaReport {
    bool accepted = false;
    std::string reason; // "shape", "non-finite", "crash", "latency", "nondeterministic"
    std::string message;
    std::optional<std::size_t> probe_index;
    std::size_t probes = 0;
    double latency_ms = 0.0;
    // Stored as supplied; the market has no labels to check it against.
    std::optional<double> claimed_epsilon;

    json to_json() const {
        json j{{"status", accepted ? "accepted" : "rejected"}, {"probes", probes}, {"latency_ms", latency_ms}};
        if (!accepted) {
            j["reason"] = reason;
            j["message"] = message;
        }
        j["probe_index"] = probe_index ? json(*probe_index) : json(nullptr);
        j["claimed_epsilon"] = claimed_epsilon ? json(*claimed_epsilon) : json(nullptr);
        return j;
    }

    static QaReport from_json(const json& j) {
        QaReport r;
        r.accepted = codec::get<std::string>(j, "status") == "accepted";
        r.reason = j.value("reason", "");
        r.message = j.value("message", "");
        if (j.contains("probe_index") && !j["probe_index"].is_null()) {
            r.probe_index = j["probe_index"].get<std::size_t>();
        }
        r.probes = j.value("probes", std::size_t{0});
        r.latency_ms = j.value("latency_ms", 0.0);
        if (j.contains("claimed_epsilon") && !j["claimed_epsilon"].is_null()) {
            r.claimed_epsilon = j["claimed_epsilon"].get<double>();
        }
        return r;
    }
};

// Thrown when a submission fails quality checks; carries the full report.
class QaRejection : public SubmissionError {
public:
    explicit QaRejection(QaReport r) : SubmissionError("rejected (" + r.reason + "): " + r.message), report(std::move(r)) {}
    QaReport report;
};

struct LearnwareVersion {
    int version = 1;
    std::int64_t submitted_at = 0;
    IslandId island_id = 0;
    json tags;
    RkmeSpec spec;
    ModelArtifact model;
    QaReport qa;
};

struct LearnwareRecord {
    LearnwareId id = 0;
    // Island registered under this record's own signature. Its kernel is the
    // kernel of `spec`; the island may since have been merged into another.
    IslandId island_id = 0;
    json tags;
    RkmeSpec spec;
    ModelArtifact model;
    std::optional<double> claimed_epsilon;
    QaReport qa;
    int version = 1;
    std::int64_t submitted_at = 0;
    std::vector<LearnwareVersion> history;
};

enum class MatchMode { joint, input_marginal, anchor_only };

inline std::string to_string(MatchMode m) {
    switch (m) {
    case MatchMode::joint:
        return "joint";
    case MatchMode::input_marginal:
        return "input_marginal";
    case MatchMode::anchor_only:
        return "anchor_only";
    }
    return "unknown";
}

inline MatchMode match_mode_from_string(const std::string& s) {
    for (MatchMode m : {MatchMode::joint, MatchMode::input_marginal, MatchMode::anchor_only}) {
        if (to_string(m) == s) {
            return m;
        }
    }
    throw UsageError("unknown match mode '" + s + "'");
}

struct Requirement {
    json tags;
    std::optional<RkmeSpec> spec;
    MatchMode mode = MatchMode::joint;
};

struct Match {
    LearnwareId id = 0;
    double distance = 0.0;

    friend bool operator==(const Match&, const Match&) = default;
};

struct MixtureSolution {
    std::map<LearnwareId, double> weights;
    double residual = 0.0;
    double gap = 0.0;
    int iterations = 0;
};

struct AnchorSession {
    std::string id;
    IslandId island_id = 0;
    std::vector<LearnwareId> anchors;
    std::map<LearnwareId, double> reported;
    double sigma = 1.0;
};

struct AnchorRanking {
    std::vector<std::pair<LearnwareId, double>> ranked;
    // Every anchor performed poorly: the ranking carries little information.
    bool weak_signal = false;
};

struct MarketState {
    MarketConfig config;
    IslandRegistry islands;
    std::map<LearnwareId, LearnwareRecord> records;
    std::map<std::string, AnchorSession> sessions;
    LearnwareId next_learnware = 1;
    std::uint64_t next_session = 1;

    const LearnwareRecord& record(LearnwareId id) const {
        const auto it = records.find(id);
        if (it == records.end()) {
            throw NotFoundError("no learnware with id " + std::to_string(id));
        }
        return it->second;
    }

    const AnchorSession& session(const std::string& id) const {
        const auto it = sessions.find(id);
        if (it == sessions.end()) {
            throw NotFoundError("no anchor session '" + id + "'");
        }
        return it->second;
    }
};

// ---------------------------------------------------------------------------
// Quality assurance

namespace detail {

inline std::uint64_t signature_seed(const MarketConfig& cfg, const IslandSignature& sig) {
    return Rng::mix(cfg.seed ^ fnv1a64(sig.canonical()));
}

inline bool nearly_equal(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        return false;
    }
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double x = a.data()[i];
        const double y = b.data()[i];
        if (std::abs(x - y) > 1e-9 * (1.0 + std::abs(x))) {
            return false;
        }
    }
    return true;
}

} // namespace detail

// Probes the model one input at a time on generated inputs, then once as a
// batch. Failures are reported, never thrown.
inline QaReport qa_validate(const Predictor& model, const IslandSignature& sig, const MarketConfig& cfg,
                            std::uint64_t seed) {
    QaReport report;
    report.probes = cfg.probe_count;
    auto reject = [&](std::string reason, std::string message, std::optional<std::size_t> probe = std::nullopt) {
        report.accepted = false;
        report.reason = std::move(reason);
        report.message = probe ? "probe " + std::to_string(*probe) + ": " + message : message;
        report.probe_index = probe;
        return report;
    };

    const std::size_t in = sig.input_dims();
    const std::size_t out = sig.output.dim;
    if (model.input_dim() != in || model.output_dim() != out) {
        return reject("shape", "model maps " + std::to_string(model.input_dim()) + " -> " +
                                   std::to_string(model.output_dim()) + " dims but the island expects " +
                                   std::to_string(in) + " -> " + std::to_string(out));
    }
    if (const auto* ext = dynamic_cast<const ExternalPredictor*>(&model); ext && !ext->descriptor().deterministic) {
        return reject("nondeterministic", "adapter declares itself nondeterministic");
    }

    Rng rng(seed);
    const Matrix probes = gaussian_sampler(in, cfg.probe_scale)(cfg.probe_count, rng);
    Matrix single(probes.rows(), static_cast<Eigen::Index>(out));
    const auto t0 = std::chrono::steady_clock::now();
    for (Eigen::Index i = 0; i < probes.rows(); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        Matrix y;
        try {
            y = model.predict(probes.row(i));
        } catch (const std::exception& e) {
            return reject("crash", e.what(), idx);
        }
        if (y.rows() != 1 || static_cast<std::size_t>(y.cols()) != out) {
            return reject("shape", "output has shape " + std::to_string(y.rows()) + "x" + std::to_string(y.cols()),
                          idx);
        }
        if (!y.allFinite()) {
            return reject("non-finite", "output is not finite", idx);
        }
        single.row(i) = y.row(0);
    }
    report.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (report.latency_ms > cfg.latency_budget_ms) {
        return reject("latency", "probing took " + std::to_string(report.latency_ms) + " ms");
    }
    for (int pass = 0; pass < 2; ++pass) {
        Matrix batch;
        try {
            batch = model.predict(probes);
        } catch (const std::exception& e) {
            return reject("crash", std::string("batch prediction failed: ") + e.what());
        }
        if (batch.rows() != single.rows() || batch.cols() != single.cols()) {
            return reject("shape", "batch output has the wrong shape");
        }
        if (!detail::nearly_equal(batch, single)) {
            return reject("nondeterministic", "batch and per-row predictions disagree");
        }
    }
    report.accepted = true;
    return report;
}

// ---------------------------------------------------------------------------
// Submission

struct IslandResolution {
    IslandId home = 0; // registered under exactly the submitted signature
    IslandId live = 0; // where the learnware becomes searchable
    KernelSpec kernel;
    bool created = false;
    bool merged = false;
};

// Finds the island for `tags`, creating it (or merging two islands the model
// spans) when none exists. Creating an island needs a model that passes QA,
// since its outputs calibrate the island kernel.
inline IslandResolution resolve_island(MarketState& state, const json& tags, const Predictor& model) {
    const IslandSignature sig = make_signature(tags);
    IslandResolution res;
    if (const auto home = state.islands.exact(sig)) {
        res.home = *home;
        res.live = *state.islands.locate(sig);
        res.kernel = state.islands.get(*home).kernel;
        return res;
    }
    const std::uint64_t seed = detail::signature_seed(state.config, sig);
    QaReport qa = qa_validate(model, sig, state.config, seed);
    if (!qa.accepted) {
        throw QaRejection(std::move(qa));
    }
    const EmpiricalSketch bridge = synth_bridge(model, gaussian_sampler(sig.input_dims(), state.config.probe_scale),
                                                state.config.bridge_count, Rng::mix(seed + 1), sig.output);
    if (const auto pair = state.islands.find_merge_pair(sig)) {
        res.home = state.islands.merge(sig, pair->first, pair->second, bridge.z).id;
        res.merged = true;
    } else {
        res.home = state.islands.create(sig, bridge.z).id;
        res.created = true;
    }
    res.live = res.home;
    res.kernel = state.islands.get(res.home).kernel;
    return res;
}

// Kernel a developer or user must reduce with for these tags.
inline KernelSpec island_kernel_for(const MarketState& state, const json& tags) {
    const IslandSignature sig = make_signature(tags);
    const auto home = state.islands.exact(sig);
    if (!home) {
        throw NotFoundError("no island for these tags");
    }
    return state.islands.get(*home).kernel;
}

struct SubmitOptions {
    std::optional<double> claimed_epsilon;
    // Resubmission: new version of an existing learnware.
    std::optional<LearnwareId> replace;
    std::int64_t timestamp = 0;
};

// Accepts an already reduced specification. This is what crosses the wire.
inline const LearnwareRecord& submit_spec(MarketState& state, const ModelArtifact& artifact, const json& tags,
                                          const RkmeSpec& spec, const SubmitOptions& opts = {}) {
    const IslandSignature sig = make_signature(tags);
    if (opts.claimed_epsilon) {
        require(*opts.claimed_epsilon >= 0.0 && std::isfinite(*opts.claimed_epsilon),
                "claimed epsilon must be nonnegative");
    }
    if (opts.replace) {
        state.record(*opts.replace);
    }
    try {
        spec.validate();
    } catch (const UsageError& e) {
        throw UsageError(std::string("invalid specification: ") + e.what());
    }
    require(spec.layout == sig.layout(), "specification layout does not match the island schema");
    require(spec.n <= state.config.max_spec_rows, "specification has more rows than the market accepts");

    PredictorPtr model;
    try {
        model = load_predictor(artifact);
    } catch (const std::exception& e) {
        QaReport r;
        r.reason = "crash";
        r.message = std::string("model could not be loaded: ") + e.what();
        throw QaRejection(std::move(r));
    }
    const IslandResolution island = resolve_island(state, tags, *model);
    require(spec.kernel == island.kernel, "specification kernel does not match the island kernel");

    QaReport qa = qa_validate(*model, sig, state.config, detail::signature_seed(state.config, sig));
    qa.claimed_epsilon = opts.claimed_epsilon;
    if (!qa.accepted) {
        throw QaRejection(std::move(qa));
    }

    LearnwareRecord rec;
    if (opts.replace) {
        LearnwareRecord& old = state.records.at(*opts.replace);
        LearnwareVersion prior{old.version, old.submitted_at, old.island_id, old.tags, old.spec, old.model, old.qa};
        rec.history = std::move(old.history);
        rec.history.push_back(std::move(prior));
        rec.id = old.id;
        rec.version = old.version + 1;
        const IslandSignature old_sig = make_signature(old.tags);
        state.islands.remove_member(*state.islands.locate(old_sig), old.id);
    } else {
        rec.id = state.next_learnware++;
    }
    rec.island_id = island.home;
    rec.tags = tags;
    rec.spec = spec;
    rec.model = artifact;
    rec.claimed_epsilon = opts.claimed_epsilon;
    rec.qa = std::move(qa);
    rec.submitted_at = opts.timestamp;
    state.islands.add_member(island.live, rec.id);
    const LearnwareId id = rec.id;
    state.records[id] = std::move(rec);
    return state.records.at(id);
}

// Developer-side convenience: resolves the island, reduces the sketch with
// its kernel, then submits only the reduced specification.
inline const LearnwareRecord& submit(MarketState& state, const ModelArtifact& artifact, const json& tags,
                                     const EmpiricalSketch& dev_sketch, std::size_t n, const SubmitOptions& opts = {},
                                     ReduceOptions reduce_opts = {}) {
    const PredictorPtr model = load_predictor(artifact);
    const IslandResolution island = resolve_island(state, tags, *model);
    const RkmeSpec spec = reduce(dev_sketch, n, island.kernel, reduce_opts);
    return submit_spec(state, artifact, tags, spec, opts);
}

// ---------------------------------------------------------------------------
// Requirements and search

// User-side: builds a requirement from local data. Without labels, or in
// input_marginal mode, only inputs enter the sketch.
inline Requirement build_requirement(const json& tags, const Matrix& x, const std::optional<Matrix>& y, std::size_t n,
                                     const KernelSpec& kernel, MatchMode mode = MatchMode::joint,
                                     ReduceOptions opts = {}) {
    const IslandSignature sig = make_signature(tags);
    require(mode != MatchMode::anchor_only, "anchor-only requirements carry no sketch");
    require(static_cast<std::size_t>(x.cols()) == sig.input_dims(), "data does not match the input schema");
    const bool joint = mode == MatchMode::joint;
    require(!joint || y.has_value(), "joint matching needs labels; use input_marginal");
    const EmpiricalSketch sketch = sketch_from_data(x, joint ? y : std::nullopt, sig.output);
    Requirement req;
    req.tags = tags;
    req.mode = mode;
    req.spec = reduce(sketch, std::min<std::size_t>(n, static_cast<std::size_t>(sketch.m())), kernel, opts);
    return req;
}

namespace detail {

struct LocatedRequirement {
    IslandSignature sig;
    const Island* island = nullptr;
    bool joint = false;
};

inline LocatedRequirement locate_requirement(const MarketState& state, const Requirement& req) {
    LocatedRequirement out;
    out.sig = make_signature(req.tags);
    const auto live = state.islands.locate(out.sig);
    if (!live) {
        throw NotFoundError("no island for these tags");
    }
    out.island = &state.islands.get(*live);
    if (req.mode == MatchMode::anchor_only) {
        require(!req.spec.has_value(), "anchor-only requirements carry no sketch");
        return out;
    }
    require(req.spec.has_value(), "requirement has no specification");
    const RkmeSpec& s = *req.spec;
    s.validate();
    require(s.layout.x_dims == out.sig.input_dims(), "requirement inputs do not match the input schema");
    require(s.layout.y_dims == 0 || s.layout.y_dims == out.sig.output.dim,
            "requirement outputs do not match the output space");
    if (req.mode == MatchMode::joint) {
        require(s.layout.y_dims > 0, "joint matching needs a labeled requirement; use input_marginal");
    }
    out.joint = req.mode == MatchMode::joint;
    return out;
}

// Requirement and candidate projected onto the coordinates they share.
struct Projection {
    WeightedPointSet req;
    WeightedPointSet cand;
    KernelSpec kernel;
    bool covers_requirement = false;
};

inline std::optional<Projection> project(const MarketState& state, const LocatedRequirement& loc, const RkmeSpec& req,
                                         const LearnwareRecord& cand) {
    const Island& home = state.islands.get(cand.island_id);
    const CoordinateMatch cm = common_coordinates(loc.sig, req.layout, home.signature, cand.spec.layout, loc.joint);
    if (cm.shared_inputs == 0) {
        return std::nullopt;
    }
    Projection p;
    p.req = WeightedPointSet(select_columns(req.points(), cm.left), req.beta());
    p.cand = WeightedPointSet(select_columns(cand.spec.points(), cm.right), cand.spec.beta());
    p.kernel = cand.spec.kernel;
    const std::size_t wanted = loc.sig.input_dims() + (loc.joint ? req.layout.y_dims : 0);
    p.covers_requirement = cm.left.size() == wanted;
    return p;
}

// The one place distances inside a merged island are made comparable: each
// is divided by the requirement's own norm in the sub-space it was taken in.
inline std::optional<double> match_distance(const MarketState& state, const LocatedRequirement& loc,
                                            const RkmeSpec& req, const LearnwareRecord& cand) {
    const auto p = project(state, loc, req, cand);
    if (!p) {
        return std::nullopt;
    }
    double d = rkhs_distance(p->kernel, p->req, p->cand);
    if (loc.island->merged_from) {
        const double norm = std::sqrt(std::max(0.0, rkhs_squared_norm(p->kernel, p->req)));
        if (norm > 0.0) {
            d /= norm;
        }
    }
    return d;
}

inline void sort_matches(std::vector<Match>& matches) {
    std::sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
    });
}

} // namespace detail

// Island members ranked by RKHS distance to the requirement (ties: lower id).
inline std::vector<Match> search_single(const MarketState& state, const Requirement& req, std::size_t top_k) {
    require(top_k >= 1, "top_k must be positive");
    require(req.mode != MatchMode::anchor_only, "anchor-only requirements are served by anchor sessions");
    const auto loc = detail::locate_requirement(state, req);
    std::vector<Match> matches;
    for (LearnwareId id : loc.island->members) {
        if (const auto d = detail::match_distance(state, loc, *req.spec, state.record(id))) {
            matches.push_back(Match{id, *d});
        }
    }
    detail::sort_matches(matches);
    if (matches.size() > top_k) {
        matches.resize(top_k);
    }
    return matches;
}

inline constexpr double kMixtureWeightFloor = 1e-3;

// Simplex weights over the nearest candidates whose weighted specifications
// best approximate the requirement.
inline MixtureSolution search_mixture(const MarketState& state, const Requirement& req,
                                      std::optional<std::size_t> candidate_cap = std::nullopt) {
    const std::size_t cap = candidate_cap.value_or(state.config.candidate_cap);
    require(cap >= 1, "candidate cap must be positive");
    const auto loc = detail::locate_requirement(state, req);
    require(!loc.island->members.empty(), "island has no learnwares");
    const std::vector<Match> nearest = search_single(state, req, cap);
    require(!nearest.empty(), "no learnware shares inputs with the requirement");

    // Only candidates living in the same space as the best one can be mixed.
    std::vector<Match> used;
    std::vector<detail::Projection> proj;
    for (const Match& m : nearest) {
        auto p = detail::project(state, loc, *req.spec, state.record(m.id));
        if (!p->covers_requirement || !(p->kernel == state.record(nearest.front().id).spec.kernel)) {
            continue;
        }
        used.push_back(m);
        proj.push_back(std::move(*p));
    }
    if (used.empty()) {
        MixtureSolution only;
        only.weights[nearest.front().id] = 1.0;
        only.residual = nearest.front().distance;
        return only;
    }

    const auto k = static_cast<Eigen::Index>(used.size());
    const KernelSpec& kernel = proj.front().kernel;
    Matrix C(k, k);
    Vector c(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        c(i) = rkhs_inner(kernel, proj[ii].cand, proj[ii].req);
        for (Eigen::Index j = 0; j <= i; ++j) {
            C(i, j) = C(j, i) = rkhs_inner(kernel, proj[ii].cand, proj[static_cast<std::size_t>(j)].cand);
        }
    }
    const double req_sq = rkhs_squared_norm(kernel, proj.front().req);
    const SimplexQpResult qp = minimize_on_simplex(C, c);

    Vector w = qp.w;
    for (Eigen::Index i = 0; i < k; ++i) {
        if (w(i) < kMixtureWeightFloor) {
            w(i) = 0.0;
        }
    }
    w /= w.sum();
    const double normaliser = loc.island->merged_from ? std::sqrt(std::max(0.0, req_sq)) : 1.0;
    double residual = std::sqrt(std::max(0.0, simplex_qp_objective(C, c, w) + req_sq));
    if (normaliser > 0.0) {
        residual /= normaliser;
    }

    MixtureSolution out;
    out.gap = qp.gap;
    out.iterations = qp.iterations;
    // A single candidate is always feasible: never report worse than the best one.
    if (residual > used.front().distance) {
        out.weights[used.front().id] = 1.0;
        out.residual = used.front().distance;
        return out;
    }
    for (Eigen::Index i = 0; i < k; ++i) {
        if (w(i) > 0.0) {
            out.weights[used[static_cast<std::size_t>(i)].id] = w(i);
        }
    }
    out.residual = residual;
    return out;
}

// ---------------------------------------------------------------------------
// Anchor sessions

namespace detail {

// Distance between two stored specifications over the coordinates they share;
// with no shared inputs, the output distributions alone are compared.
inline double record_distance(const MarketState& state, const Island& island, const LearnwareRecord& a,
                              const LearnwareRecord& b) {
    const IslandSignature& sa = state.islands.get(a.island_id).signature;
    const IslandSignature& sb = state.islands.get(b.island_id).signature;
    CoordinateMatch cm = common_coordinates(sa, a.spec.layout, sb, b.spec.layout, true);
    const KernelSpec kernel = a.spec.kernel == b.spec.kernel ? a.spec.kernel : island.kernel;
    if (cm.shared_inputs == 0) {
        cm.left.clear();
        cm.right.clear();
        for (std::size_t c = 0; c < a.spec.layout.y_dims && a.spec.layout.y_dims == b.spec.layout.y_dims; ++c) {
            cm.left.push_back(a.spec.layout.x_dims + c);
            cm.right.push_back(b.spec.layout.x_dims + c);
        }
        if (cm.left.empty()) {
            return std::sqrt(rkhs_squared_norm(kernel, a.spec.reduced) + rkhs_squared_norm(kernel, b.spec.reduced));
        }
    }
    const WeightedPointSet pa(select_columns(a.spec.points(), cm.left), a.spec.beta());
    const WeightedPointSet pb(select_columns(b.spec.points(), cm.right), b.spec.beta());
    return rkhs_distance(kernel, pa, pb);
}

inline Matrix member_distances(const MarketState& state, const Island& island, const std::vector<LearnwareId>& ids) {
    const auto n = static_cast<Eigen::Index>(ids.size());
    Matrix D = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < i; ++j) {
            D(i, j) = D(j, i) = record_distance(state, island, state.record(ids[static_cast<std::size_t>(i)]),
                                                state.record(ids[static_cast<std::size_t>(j)]));
        }
    }
    return D;
}

} // namespace detail

// Picks k representative learnwares (k-medoids over specification distances)
// for a user to try. PAM is deterministic, so the seed only names the session
// stream and does not change the anchors.
inline const AnchorSession& start_anchor_session(MarketState& state, const json& tags, std::size_t k) {
    require(k >= 1, "anchor count must be positive");
    const IslandSignature sig = make_signature(tags);
    const auto live = state.islands.locate(sig);
    if (!live) {
        throw NotFoundError("no island for these tags");
    }
    const Island& island = state.islands.get(*live);
    require(!island.members.empty(), "island has no learnwares");
    const std::vector<LearnwareId> ids(island.members.begin(), island.members.end());
    const Matrix D = detail::member_distances(state, island, ids);

    AnchorSession s;
    s.id = "s" + std::to_string(state.next_session++);
    s.island_id = island.id;
    for (std::size_t idx : pam(D, k)) {
        s.anchors.push_back(ids[idx]);
    }
    std::vector<double> pairwise;
    for (Eigen::Index i = 0; i < D.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < D.cols(); ++j) {
            pairwise.push_back(D(i, j));
        }
    }
    const double med = pairwise.empty() ? 0.0 : median(pairwise);
    s.sigma = med > 0.0 ? med : 1.0;
    const std::string id = s.id;
    state.sessions[id] = std::move(s);
    return state.sessions.at(id);
}

// score_i = sum_a (p_a - mean p) * exp(-d(i, a)^2 / (2 sigma^2)), descending.
inline AnchorRanking score_by_anchors(const MarketState& state, const AnchorSession& session) {
    for (LearnwareId a : session.anchors) {
        require(session.reported.count(a) != 0, "no indicator reported for anchor " + std::to_string(a));
    }
    const Island& island = state.islands.get(session.island_id);
    double mean = 0.0;
    double best = 0.0;
    for (LearnwareId a : session.anchors) {
        mean += session.reported.at(a);
        best = std::max(best, session.reported.at(a));
    }
    mean /= static_cast<double>(session.anchors.size());

    AnchorRanking out;
    out.weak_signal = best < 0.5;
    for (LearnwareId id : island.members) {
        const LearnwareRecord& rec = state.record(id);
        double score = 0.0;
        for (LearnwareId a : session.anchors) {
            const double d = a == id ? 0.0 : detail::record_distance(state, island, rec, state.record(a));
            score += (session.reported.at(a) - mean) * std::exp(-d * d / (2.0 * session.sigma * session.sigma));
        }
        out.ranked.emplace_back(id, score);
    }
    std::sort(out.ranked.begin(), out.ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    return out;
}

// Records the user's indicators (each a scalar or several metrics averaged)
// and ranks the island.
inline AnchorRanking report_anchors(MarketState& state, const std::string& session_id,
                                    const std::map<LearnwareId, std::vector<double>>& indicators) {
    const auto it = state.sessions.find(session_id);
    if (it == state.sessions.end()) {
        throw NotFoundError("no anchor session '" + session_id + "'");
    }
    AnchorSession& s = it->second;
    std::map<LearnwareId, double> reported;
    for (const auto& [id, values] : indicators) {
        require(std::find(s.anchors.begin(), s.anchors.end(), id) != s.anchors.end(),
                "learnware " + std::to_string(id) + " is not an anchor of this session");
        require(!values.empty(), "empty indicator for anchor " + std::to_string(id));
        double sum = 0.0;
        for (double v : values) {
            require(v >= 0.0 && v <= 1.0, "indicators must lie in [0, 1]");
            sum += v;
        }
        reported[id] = sum / static_cast<double>(values.size());
    }
    for (LearnwareId a : s.anchors) {
        require(reported.count(a) != 0, "no indicator reported for anchor " + std::to_string(a));
    }
    s.reported = std::move(reported);
    return score_by_anchors(state, s);
}

// ---------------------------------------------------------------------------
// JSON views

inline json record_to_json(const LearnwareRecord& r, bool with_model = true) {
    json history = json::array();
    for (const auto& v : r.history) {
        history.push_back(json{{"version", v.version}, {"submitted_at", v.submitted_at}, {"island_id", v.island_id}});
    }
    json j{{"id", r.id},
           {"island_id", r.island_id},
           {"tags", r.tags},
           {"spec", to_json(r.spec)},
           {"qa", r.qa.to_json()},
           {"version", r.version},
           {"submitted_at", r.submitted_at},
           {"claimed_epsilon", r.claimed_epsilon ? json(*r.claimed_epsilon) : json(nullptr)},
           {"history", history}};
    if (with_model) {
        j["model"] = to_json(r.model);
    }
    return j;
}

inline json island_to_json(const Island& i) {
    json j{{"id", i.id},
           {"signature", i.signature.to_json()},
           {"kernel", to_json(i.kernel)},
           {"members", std::vector<LearnwareId>(i.members.begin(), i.members.end())},
           {"merged_from", nullptr},
           {"merged_into", i.merged_into ? json(*i.merged_into) : json(nullptr)}};
    if (i.merged_from) {
        j["merged_from"] = json::array({i.merged_from->first, i.merged_from->second});
    }
    return j;
}

inline Island island_from_json(const json& j) {
    Island i;
    i.id = codec::get<IslandId>(j, "id");
    try {
        i.signature = make_signature(codec::field(j, "signature"));
    } catch (const UsageError& e) {
        throw CodecError(std::string("bad island signature: ") + e.what());
    }
    i.kernel = kernel_from_json(codec::field(j, "kernel"));
    for (const auto& m : codec::field(j, "members")) {
        i.members.insert(m.get<LearnwareId>());
    }
    if (j.contains("merged_from") && !j["merged_from"].is_null()) {
        i.merged_from = std::make_pair(j["merged_from"].at(0).get<IslandId>(), j["merged_from"].at(1).get<IslandId>());
    }
    if (j.contains("merged_into") && !j["merged_into"].is_null()) {
        i.merged_into = j["merged_into"].get<IslandId>();
    }
    return i;
}

inline json session_to_json(const AnchorSession& s) {
    json reported = json::object();
    for (const auto& [id, p] : s.reported) {
        reported[std::to_string(id)] = p;
    }
    return json{{"id", s.id}, {"island_id", s.island_id}, {"anchors", s.anchors}, {"reported", reported},
                {"sigma", s.sigma}};
}

inline AnchorSession session_from_json(const json& j) {
    AnchorSession s;
    s.id = codec::get<std::string>(j, "id");
    s.island_id = codec::get<IslandId>(j, "island_id");
    s.anchors = codec::get<std::vector<LearnwareId>>(j, "anchors");
    s.sigma = codec::get<double>(j, "sigma");
    for (const auto& [key, value] : codec::field(j, "reported").items()) {
        s.reported[std::stoull(key)] = value.get<double>();
    }
    return s;
}

inline json matches_to_json(const std::vector<Match>& matches) {
    json out = json::array();
    for (const auto& m : matches) {
        out.push_back(json{{"id", m.id}, {"distance", m.distance}});
    }
    return out;
}

inline json mixture_to_json(const MixtureSolution& m) {
    json weights = json::array();
    for (const auto& [id, w] : m.weights) {
        weights.push_back(json{{"id", id}, {"weight", w}});
    }
    return json{{"weights", weights}, {"residual", m.residual}, {"gap", m.gap}, {"iterations", m.iterations}};
}

inline json ranking_to_json(const AnchorRanking& r) {
    json ranked = json::array();
    for (const auto& [id, score] : r.ranked) {
        ranked.push_back(json{{"id", id}, {"score", score}});
    }
    return json{{"ranked", ranked}, {"weak_signal", r.weak_signal}};
}

inline json requirement_to_json(const Requirement& r) {
    return json{{"tags", r.tags}, {"mode", to_string(r.mode)}, {"spec", r.spec ? to_json(*r.spec) : json(nullptr)}};
}

inline Requirement requirement_from_json(const json& j) {
    Requirement r;
    r.tags = codec::field(j, "tags");
    r.mode = match_mode_from_string(j.value("mode", std::string("joint")));
    if (j.contains("spec") && !j["spec"].is_null()) {
        r.spec = spec_from_json(j["spec"]);
    }
    return r;
}

} // namespace learnware
