#pragma once

// HTTP/JSON front end of the market.
//
//   POST /learnwares                  submit (JSON or multipart: tags, spec, artifact)
//   GET  /learnwares/{id}             record without the model
//   GET  /learnwares/{id}/model       model artifact
//   POST /search                      requirement -> ranked single matches
//   POST /search/mixture              requirement -> mixture weights
//   POST /anchors                     start an anchor session
//   POST /anchors/{sid}/report        indicators -> ranked learnwares
//   GET  /islands                     all islands
//   POST /islands/lookup              tags -> live island and its kernel
//   POST /islands/resolve             tags + artifact -> island, created if new
//
// Readers work on an immutable snapshot; writers are serialized, mutate a
// copy, persist it, then publish it.

#include "learnware/market.hpp"
#include "learnware/state.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>

namespace learnware {

class MarketHandle {
public:
    explicit MarketHandle(MarketState initial = {}, std::optional<fs::path> root = std::nullopt)
        : snapshot_(std::make_shared<const MarketState>(std::move(initial))), root_(std::move(root)) {}

    static MarketHandle open(const fs::path& root) { return MarketHandle(load_state(root), root); }

    std::shared_ptr<const MarketState> snapshot() const {
        std::lock_guard lock(snapshot_mutex_);
        return snapshot_;
    }

    // Runs `fn` on a private copy of the current state; the copy becomes
    // visible only after it has been saved.
    template <class Fn>
    auto write(Fn&& fn) {
        std::lock_guard writer(writer_mutex_);
        auto next = std::make_shared<MarketState>(*snapshot());
        auto result = fn(*next);
        if (root_) {
            save_state(*next, *root_);
        }
        std::lock_guard lock(snapshot_mutex_);
        snapshot_ = std::move(next);
        return result;
    }

    const std::optional<fs::path>& root() const { return root_; }

private:
    mutable std::mutex snapshot_mutex_;
    std::mutex writer_mutex_;
    std::shared_ptr<const MarketState> snapshot_;
    std::optional<fs::path> root_;
};

struct ServiceOptions {
    // External artifacts name a command the market would launch.
    bool allow_external_models = false;
    std::size_t max_body_bytes = 64u << 20;
};

namespace detail {

struct HttpError : std::runtime_error {
    HttpError(int s, std::string c, const std::string& m, json d = nullptr)
        : std::runtime_error(m), status(s), code(std::move(c)), details(std::move(d)) {}
    int status;
    std::string code;
    json details;
};

inline json error_envelope(const std::string& code, const std::string& message, const json& details = nullptr) {
    json e{{"code", code}, {"message", message}};
    if (!details.is_null()) {
        e["report"] = details;
    }
    return json{{"error", e}};
}

inline json parse_body(const std::string& body) {
    try {
        json j = json::parse(body);
        if (!j.is_object()) {
            throw HttpError(400, "bad_request", "request body must be a JSON object");
        }
        return j;
    } catch (const json::parse_error& e) {
        throw HttpError(400, "bad_request", std::string("request body is not valid JSON: ") + e.what());
    }
}

// Rejects fields the endpoint does not define, so no extra data can ride along.
inline void allow_fields(const json& body, std::initializer_list<const char*> allowed) {
    const std::set<std::string> names(allowed.begin(), allowed.end());
    for (const auto& [key, value] : body.items()) {
        if (names.count(key) == 0) {
            throw HttpError(400, "bad_request", "unexpected field '" + key + "'");
        }
    }
}

inline RkmeSpec wire_spec(const json& j, const MarketConfig& cfg) {
    RkmeSpec s = spec_from_json(j);
    if (s.n > cfg.max_spec_rows) {
        throw HttpError(400, "bad_request", "specification has more rows than the market accepts");
    }
    return s;
}

inline ModelArtifact wire_artifact(const json& j, const ServiceOptions& opts) {
    ModelArtifact a = artifact_from_json(j);
    if (a.kind == ModelKind::external && !opts.allow_external_models) {
        throw HttpError(400, "bad_request", "this market does not accept external model artifacts");
    }
    return a;
}

inline Requirement wire_requirement(const json& body, const MarketConfig& cfg) {
    Requirement r;
    r.tags = codec::field(body, "tags");
    r.mode = match_mode_from_string(body.value("mode", std::string("joint")));
    if (body.contains("spec") && !body["spec"].is_null()) {
        r.spec = wire_spec(body["spec"], cfg);
    }
    return r;
}

inline LearnwareId path_id(const std::string& s) {
    try {
        std::size_t used = 0;
        const auto id = std::stoull(s, &used);
        if (used == s.size()) {
            return id;
        }
    } catch (const std::exception&) {
    }
    throw HttpError(404, "not_found", "no learnware with id " + s);
}

} // namespace detail

class MarketServer {
public:
    explicit MarketServer(MarketHandle& market, ServiceOptions opts = {}) : market_(market), opts_(opts) {
        server_.set_payload_max_length(opts_.max_body_bytes);
        routes();
    }

    ~MarketServer() { stop(); }

    MarketServer(const MarketServer&) = delete;
    MarketServer& operator=(const MarketServer&) = delete;

    // Binds and serves on a background thread. Port 0 picks a free port.
    int start(const std::string& host = "127.0.0.1", int port = 0) {
        const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
        if (bound < 0) {
            throw UsageError("cannot bind " + host + ":" + std::to_string(port));
        }
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return bound;
    }

    // Serves on the calling thread until stop().
    void run(const std::string& host, int port) {
        if (!server_.listen(host, port)) {
            throw UsageError("cannot listen on " + host + ":" + std::to_string(port));
        }
    }

    void stop() {
        server_.stop();
        if (thread_.joinable()) {
            thread_.join();
        }
    }

private:
    using Handler = std::function<std::pair<int, json>(const httplib::Request&)>;

    void route(const char* method, const std::string& pattern, Handler h) {
        auto wrapped = [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
            int status = 500;
            json body;
            try {
                std::tie(status, body) = h(req);
            } catch (const detail::HttpError& e) {
                status = e.status;
                body = detail::error_envelope(e.code, e.what(), e.details);
            } catch (const QaRejection& e) {
                status = 422;
                body = detail::error_envelope("qa_rejected", e.what(), e.report.to_json());
            } catch (const SubmissionError& e) {
                status = 422;
                body = detail::error_envelope("submission_rejected", e.what());
            } catch (const NotFoundError& e) {
                status = 404;
                body = detail::error_envelope("not_found", e.what());
            } catch (const UsageError& e) {
                status = 400;
                body = detail::error_envelope("bad_request", e.what());
            } catch (const CodecError& e) {
                status = 400;
                body = detail::error_envelope("bad_request", e.what());
            } catch (const json::exception& e) {
                status = 400;
                body = detail::error_envelope("bad_request", e.what());
            } catch (const std::exception& e) {
                status = 500;
                body = detail::error_envelope("internal", e.what());
            }
            res.status = status;
            res.set_content(body.dump(), "application/json");
        };
        if (std::string(method) == "GET") {
            server_.Get(pattern, wrapped);
        } else {
            server_.Post(pattern, wrapped);
        }
    }

    json submission_body(const httplib::Request& req) const {
        if (!req.is_multipart_form_data()) {
            return detail::parse_body(req.body);
        }
        json body = json::object();
        for (const auto& [name, part] : req.files) {
            if (body.contains(name)) {
                throw detail::HttpError(400, "bad_request", "duplicate part '" + name + "'");
            }
            try {
                body[name] = json::parse(part.content);
            } catch (const json::parse_error&) {
                throw detail::HttpError(400, "bad_request", "part '" + name + "' is not valid JSON");
            }
        }
        return body;
    }

    void routes() {
        route("POST", "/learnwares", [this](const httplib::Request& req) {
            const json body = submission_body(req);
            detail::allow_fields(body, {"tags", "spec", "artifact", "claimed_epsilon", "replace"});
            const auto snap = market_.snapshot();
            const json tags = codec::field(body, "tags");
            const RkmeSpec spec = detail::wire_spec(codec::field(body, "spec"), snap->config);
            const ModelArtifact artifact = detail::wire_artifact(codec::field(body, "artifact"), opts_);
            SubmitOptions so;
            if (body.contains("claimed_epsilon") && !body["claimed_epsilon"].is_null()) {
                so.claimed_epsilon = body["claimed_epsilon"].get<double>();
            }
            if (body.contains("replace") && !body["replace"].is_null()) {
                so.replace = body["replace"].get<LearnwareId>();
            }
            so.timestamp = std::chrono::duration_cast<std::chrono::seconds>(
                               std::chrono::system_clock::now().time_since_epoch())
                               .count();
            json out = market_.write([&](MarketState& s) {
                return record_to_json(submit_spec(s, artifact, tags, spec, so), false);
            });
            return std::pair{so.replace ? 200 : 201, out};
        });

        route("GET", R"(/learnwares/([^/]+))", [this](const httplib::Request& req) {
            const auto snap = market_.snapshot();
            return std::pair{200, record_to_json(snap->record(detail::path_id(req.matches[1])), false)};
        });

        route("GET", R"(/learnwares/([^/]+)/model)", [this](const httplib::Request& req) {
            const auto snap = market_.snapshot();
            return std::pair{200, to_json(snap->record(detail::path_id(req.matches[1])).model)};
        });

        route("POST", "/search", [this](const httplib::Request& req) {
            const json body = detail::parse_body(req.body);
            detail::allow_fields(body, {"tags", "mode", "spec", "top_k"});
            const auto snap = market_.snapshot();
            const Requirement r = detail::wire_requirement(body, snap->config);
            const auto top_k = body.value("top_k", std::size_t{10});
            return std::pair{200, json{{"matches", matches_to_json(search_single(*snap, r, top_k))}}};
        });

        route("POST", "/search/mixture", [this](const httplib::Request& req) {
            const json body = detail::parse_body(req.body);
            detail::allow_fields(body, {"tags", "mode", "spec", "cap"});
            const auto snap = market_.snapshot();
            const Requirement r = detail::wire_requirement(body, snap->config);
            std::optional<std::size_t> cap;
            if (body.contains("cap") && !body["cap"].is_null()) {
                cap = body["cap"].get<std::size_t>();
            }
            return std::pair{200, mixture_to_json(search_mixture(*snap, r, cap))};
        });

        route("POST", "/anchors", [this](const httplib::Request& req) {
            const json body = detail::parse_body(req.body);
            detail::allow_fields(body, {"tags", "k"});
            const json tags = codec::field(body, "tags");
            const auto k = codec::get<std::size_t>(body, "k");
            json out = market_.write(
                [&](MarketState& s) { return session_to_json(start_anchor_session(s, tags, k)); });
            return std::pair{201, out};
        });

        route("POST", R"(/anchors/([^/]+)/report)", [this](const httplib::Request& req) {
            const json body = detail::parse_body(req.body);
            detail::allow_fields(body, {"indicators"});
            std::map<LearnwareId, std::vector<double>> indicators;
            for (const auto& [key, values] : codec::field(body, "indicators").items()) {
                indicators[detail::path_id(key)] = values.get<std::vector<double>>();
            }
            const std::string sid = req.matches[1];
            json out = market_.write(
                [&](MarketState& s) { return ranking_to_json(report_anchors(s, sid, indicators)); });
            return std::pair{200, out};
        });

        route("GET", "/islands", [this](const httplib::Request&) {
            const auto snap = market_.snapshot();
            json out = json::array();
            for (const auto& [id, island] : snap->islands.all()) {
                out.push_back(island_to_json(island));
            }
            return std::pair{200, json{{"islands", out}}};
        });

        route("POST", "/islands/lookup", [this](const httplib::Request& req) {
            const json body = detail::parse_body(req.body);
            detail::allow_fields(body, {"tags"});
            const auto snap = market_.snapshot();
            const auto live = snap->islands.locate(make_signature(codec::field(body, "tags")));
            if (!live) {
                throw NotFoundError("no island serves these tags");
            }
            return std::pair{200, island_to_json(snap->islands.get(*live))};
        });

        route("POST", "/islands/resolve", [this](const httplib::Request& req) {
            const json body = detail::parse_body(req.body);
            detail::allow_fields(body, {"tags", "artifact"});
            const json tags = codec::field(body, "tags");
            const ModelArtifact artifact = detail::wire_artifact(codec::field(body, "artifact"), opts_);
            json out = market_.write([&](MarketState& s) {
                PredictorPtr model;
                try {
                    model = load_predictor(artifact);
                } catch (const std::exception& e) {
                    throw detail::HttpError(400, "bad_request", std::string("model could not be loaded: ") + e.what());
                }
                const IslandResolution r = resolve_island(s, tags, *model);
                return json{{"home", r.home},
                            {"live", r.live},
                            {"kernel", to_json(r.kernel)},
                            {"created", r.created},
                            {"merged", r.merged}};
            });
            return std::pair{200, out};
        });
    }

    MarketHandle& market_;
    ServiceOptions opts_;
    httplib::Server server_;
    std::thread thread_;
};

} // namespace learnware
