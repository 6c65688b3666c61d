#pragma once

// Blocking client for the market service.

#include "learnware/market.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace learnware {

// Non-2xx answer from the service, or no answer at all (status 0).
class RemoteError : public std::runtime_error {
public:
    RemoteError(int s, std::string c, const std::string& m, json r = nullptr)
        : std::runtime_error(m), status(s), code(std::move(c)), report(std::move(r)) {}
    int status;
    std::string code;
    json report;
};

class MarketClient {
public:
    // Observes every request body before it is sent.
    using WireTap = std::function<void(const std::string& method, const std::string& path, const std::string& body)>;

    MarketClient(const std::string& host, int port) : http_(host, port) {
        http_.set_read_timeout(300, 0);
        http_.set_write_timeout(300, 0);
    }

    void set_wire_tap(WireTap tap) { tap_ = std::move(tap); }

    json submit(const ModelArtifact& artifact, const json& tags, const RkmeSpec& spec,
                std::optional<double> claimed_epsilon = std::nullopt, std::optional<LearnwareId> replace = std::nullopt) {
        json body{{"tags", tags}, {"spec", to_json(spec)}, {"artifact", to_json(artifact)}};
        if (claimed_epsilon) {
            body["claimed_epsilon"] = *claimed_epsilon;
        }
        if (replace) {
            body["replace"] = *replace;
        }
        return post("/learnwares", body);
    }

    json record(LearnwareId id) { return get("/learnwares/" + std::to_string(id)); }

    ModelArtifact model(LearnwareId id) { return artifact_from_json(get("/learnwares/" + std::to_string(id) + "/model")); }

    std::vector<Match> search(const Requirement& req, std::size_t top_k = 10) {
        json body = requirement_to_json(req);
        body["top_k"] = top_k;
        const json res = post("/search", body);
        std::vector<Match> out;
        for (const auto& m : res.at("matches")) {
            out.push_back(Match{m.at("id").get<LearnwareId>(), m.at("distance").get<double>()});
        }
        return out;
    }

    MixtureSolution search_mixture(const Requirement& req, std::optional<std::size_t> cap = std::nullopt) {
        json body = requirement_to_json(req);
        if (cap) {
            body["cap"] = *cap;
        }
        const json j = post("/search/mixture", body);
        MixtureSolution s;
        for (const auto& w : j.at("weights")) {
            s.weights[w.at("id").get<LearnwareId>()] = w.at("weight").get<double>();
        }
        s.residual = j.at("residual").get<double>();
        s.gap = j.at("gap").get<double>();
        s.iterations = j.at("iterations").get<int>();
        return s;
    }

    AnchorSession start_anchors(const json& tags, std::size_t k) {
        return session_from_json(post("/anchors", json{{"tags", tags}, {"k", k}}));
    }

    AnchorRanking report_anchors(const std::string& session_id,
                                 const std::map<LearnwareId, std::vector<double>>& indicators) {
        json ind = json::object();
        for (const auto& [id, values] : indicators) {
            ind[std::to_string(id)] = values;
        }
        const json j = post("/anchors/" + session_id + "/report", json{{"indicators", ind}});
        AnchorRanking r;
        for (const auto& e : j.at("ranked")) {
            r.ranked.emplace_back(e.at("id").get<LearnwareId>(), e.at("score").get<double>());
        }
        r.weak_signal = j.at("weak_signal").get<bool>();
        return r;
    }

    json islands() { return get("/islands").at("islands"); }

    // Kernel of the island serving `tags`; NotFound (404) if there is none yet.
    KernelSpec island_kernel(const json& tags) {
        return kernel_from_json(post("/islands/lookup", json{{"tags", tags}}).at("kernel"));
    }

    // Kernel to reduce a developer sketch with; creates the island if needed.
    KernelSpec resolve_island(const json& tags, const ModelArtifact& artifact) {
        return kernel_from_json(post("/islands/resolve", json{{"tags", tags}, {"artifact", to_json(artifact)}}).at("kernel"));
    }

    json get(const std::string& path) {
        if (tap_) {
            tap_("GET", path, "");
        }
        return unwrap(http_.Get(path));
    }

    json post(const std::string& path, const json& body) {
        const std::string bytes = body.dump();
        if (tap_) {
            tap_("POST", path, bytes);
        }
        return unwrap(http_.Post(path, bytes, "application/json"));
    }

private:
    static json unwrap(const httplib::Result& res) {
        if (!res) {
            throw RemoteError(0, "unreachable", "market service unreachable: " + httplib::to_string(res.error()));
        }
        json body;
        try {
            body = json::parse(res->body);
        } catch (const json::parse_error&) {
            throw RemoteError(res->status, "bad_response", "market service sent a non-JSON response");
        }
        if (res->status >= 200 && res->status < 300) {
            return body;
        }
        const json err = body.value("error", json::object());
        throw RemoteError(res->status, err.value("code", std::string("unknown")),
                          err.value("message", std::string("request failed")), err.value("report", json(nullptr)));
    }

    httplib::Client http_;
    WireTap tap_;
};

} // namespace learnware
