#pragma once

// On-disk market state:
//
//   root/market.json          islands, record metadata, sessions, counters
//   root/specs/<id>.json      specification of a learnware's first version
//   root/specs/<id>.v<k>.json specification of version k >= 2
//   root/models/<id>.bin      model artifact (same versioning)
//
// Spec and model files are never rewritten once published, and market.json
// is replaced last, so an interrupted save leaves the previous state intact.
// market.json records a digest of every file it references.

#include "learnware/market.hpp"

#include <nlohmann/json.hpp>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include <fcntl.h>
#include <unistd.h>

namespace learnware {

namespace fs = std::filesystem;

// Called between publishing payload files and replacing market.json; tests
// throw from it to simulate a crash at that point.
using SaveFaultHook = std::function<void(const std::string& stage)>;

namespace detail {

inline std::string hex_digest(std::string_view bytes) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = fnv1a64(bytes);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

inline void write_atomic(const fs::path& path, const std::string& bytes) {
    const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) {
        throw StateError("cannot write " + tmp.string() + ": " + std::strerror(errno));
    }
    std::size_t done = 0;
    while (done < bytes.size()) {
        const ssize_t w = ::write(fd, bytes.data() + done, bytes.size() - done);
        if (w < 0) {
            if (errno == EINTR) {
                continue;
            }
            const std::string err = std::strerror(errno);
            ::close(fd);
            throw StateError("cannot write " + tmp.string() + ": " + err);
        }
        done += static_cast<std::size_t>(w);
    }
    ::fsync(fd);
    ::close(fd);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        throw StateError("cannot publish " + path.string() + ": " + ec.message());
    }
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw StateError("missing state file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string version_suffix(int version) { return version == 1 ? "" : ".v" + std::to_string(version); }

inline std::string spec_file(LearnwareId id, int version) {
    return "specs/" + std::to_string(id) + version_suffix(version) + ".json";
}

inline std::string model_file(LearnwareId id, int version) {
    return "models/" + std::to_string(id) + version_suffix(version) + ".bin";
}

struct Payload {
    std::string file;
    std::string bytes;
};

inline json version_meta(LearnwareId id, int version, std::int64_t submitted_at, IslandId island, const json& tags,
                         const QaReport& qa, const RkmeSpec& spec, const ModelArtifact& model,
                         std::vector<Payload>& payloads) {
    Payload s{spec_file(id, version), to_json(spec).dump()};
    Payload m{model_file(id, version), save_artifact(model)};
    json j{{"version", version},
           {"submitted_at", submitted_at},
           {"island_id", island},
           {"tags", tags},
           {"qa", qa.to_json()},
           {"spec_file", s.file},
           {"spec_digest", hex_digest(s.bytes)},
           {"model_file", m.file},
           {"model_digest", hex_digest(m.bytes)}};
    payloads.push_back(std::move(s));
    payloads.push_back(std::move(m));
    return j;
}

inline json market_document(const MarketState& state, std::vector<Payload>& payloads) {
    json islands = json::array();
    for (const auto& [id, island] : state.islands.all()) {
        islands.push_back(island_to_json(island));
    }
    json records = json::array();
    for (const auto& [id, r] : state.records) {
        json j = version_meta(id, r.version, r.submitted_at, r.island_id, r.tags, r.qa, r.spec, r.model, payloads);
        j["id"] = id;
        j["claimed_epsilon"] = r.claimed_epsilon ? json(*r.claimed_epsilon) : json(nullptr);
        json history = json::array();
        for (const auto& v : r.history) {
            history.push_back(
                version_meta(id, v.version, v.submitted_at, v.island_id, v.tags, v.qa, v.spec, v.model, payloads));
        }
        j["history"] = std::move(history);
        records.push_back(std::move(j));
    }
    json sessions = json::array();
    for (const auto& [id, s] : state.sessions) {
        sessions.push_back(session_to_json(s));
    }
    return json{{"format_version", kFormatVersion},
                {"config", state.config.to_json()},
                {"counters",
                 {{"next_learnware", state.next_learnware},
                  {"next_session", state.next_session},
                  {"next_island", state.islands.next_id()}}},
                {"islands", islands},
                {"records", records},
                {"sessions", sessions}};
}

struct LoadedVersion {
    RkmeSpec spec;
    ModelArtifact model;
};

inline LoadedVersion load_version(const fs::path& root, const json& meta) {
    LoadedVersion out;
    const auto spec_name = codec::get<std::string>(meta, "spec_file");
    const auto model_name = codec::get<std::string>(meta, "model_file");
    const std::string spec_bytes = read_file(root / spec_name);
    if (hex_digest(spec_bytes) != codec::get<std::string>(meta, "spec_digest")) {
        throw StateError("state file " + (root / spec_name).string() + " does not match its recorded digest");
    }
    const std::string model_bytes = read_file(root / model_name);
    if (hex_digest(model_bytes) != codec::get<std::string>(meta, "model_digest")) {
        throw StateError("state file " + (root / model_name).string() + " does not match its recorded digest");
    }
    try {
        out.spec = spec_from_json(json::parse(spec_bytes));
    } catch (const std::exception& e) {
        throw StateError("state file " + (root / spec_name).string() + " is invalid: " + e.what());
    }
    try {
        out.model = decode_artifact(model_bytes);
    } catch (const std::exception& e) {
        throw StateError("state file " + (root / model_name).string() + " is invalid: " + e.what());
    }
    return out;
}

inline void check_integrity(const MarketState& s) {
    for (const auto& [id, r] : s.records) {
        if (!s.islands.contains(r.island_id)) {
            throw StateError("learnware " + std::to_string(id) + " refers to missing island " +
                             std::to_string(r.island_id));
        }
        if (!(s.islands.get(r.island_id).kernel == r.spec.kernel)) {
            throw StateError("learnware " + std::to_string(id) + " does not use its island kernel");
        }
    }
    for (const auto& [id, island] : s.islands.all()) {
        for (LearnwareId m : island.members) {
            if (s.records.count(m) == 0) {
                throw StateError("island " + std::to_string(id) + " lists missing learnware " + std::to_string(m));
            }
        }
        for (auto other : {island.merged_into, island.merged_from ? std::optional(island.merged_from->first)
                                                                    : std::nullopt,
                           island.merged_from ? std::optional(island.merged_from->second) : std::nullopt}) {
            if (other && !s.islands.contains(*other)) {
                throw StateError("island " + std::to_string(id) + " refers to missing island " +
                                 std::to_string(*other));
            }
        }
    }
    for (const auto& [id, session] : s.sessions) {
        if (!s.islands.contains(session.island_id)) {
            throw StateError("anchor session " + id + " refers to a missing island");
        }
        for (LearnwareId a : session.anchors) {
            if (s.records.count(a) == 0) {
                throw StateError("anchor session " + id + " refers to missing learnware " + std::to_string(a));
            }
        }
    }
}

} // namespace detail

inline void save_state(const MarketState& state, const fs::path& root, const SaveFaultHook& fault = {}) {
    std::error_code ec;
    for (const char* sub : {"specs", "models"}) {
        fs::create_directories(root / sub, ec);
        if (ec) {
            throw StateError("cannot create " + (root / sub).string() + ": " + ec.message());
        }
    }
    std::vector<detail::Payload> payloads;
    const json doc = detail::market_document(state, payloads);
    for (const auto& p : payloads) {
        const fs::path path = root / p.file;
        if (fs::exists(path) && detail::read_file(path) == p.bytes) {
            continue;
        }
        detail::write_atomic(path, p.bytes);
    }
    if (fault) {
        fault("payloads_written");
    }
    detail::write_atomic(root / "market.json", doc.dump(1) + "\n");
}

inline MarketState load_state(const fs::path& root) {
    MarketState state;
    const fs::path doc_path = root / "market.json";
    if (!fs::exists(doc_path)) {
        return state;
    }
    json doc;
    try {
        doc = json::parse(detail::read_file(doc_path));
    } catch (const json::exception& e) {
        throw StateError("state file " + doc_path.string() + " is not valid JSON: " + e.what());
    }
    try {
        if (codec::get<int>(doc, "format_version") != kFormatVersion) {
            throw StateError("state file " + doc_path.string() + " has an unsupported format version");
        }
        state.config = MarketConfig::from_json(codec::field(doc, "config"));
        const json& counters = codec::field(doc, "counters");
        const auto next_island = codec::get<IslandId>(counters, "next_island");
        for (const json& j : codec::field(doc, "islands")) {
            state.islands.restore(island_from_json(j), next_island);
        }
        for (const json& j : codec::field(doc, "records")) {
            LearnwareRecord r;
            r.id = codec::get<LearnwareId>(j, "id");
            r.island_id = codec::get<IslandId>(j, "island_id");
            r.tags = codec::field(j, "tags");
            r.qa = QaReport::from_json(codec::field(j, "qa"));
            r.version = codec::get<int>(j, "version");
            r.submitted_at = codec::get<std::int64_t>(j, "submitted_at");
            if (!j["claimed_epsilon"].is_null()) {
                r.claimed_epsilon = j["claimed_epsilon"].get<double>();
            }
            auto loaded = detail::load_version(root, j);
            r.spec = std::move(loaded.spec);
            r.model = std::move(loaded.model);
            for (const json& h : codec::field(j, "history")) {
                auto v = detail::load_version(root, h);
                r.history.push_back(LearnwareVersion{codec::get<int>(h, "version"),
                                                     codec::get<std::int64_t>(h, "submitted_at"),
                                                     codec::get<IslandId>(h, "island_id"), codec::field(h, "tags"),
                                                     std::move(v.spec), std::move(v.model),
                                                     QaReport::from_json(codec::field(h, "qa"))});
            }
            state.records[r.id] = std::move(r);
        }
        for (const json& j : codec::field(doc, "sessions")) {
            AnchorSession s = session_from_json(j);
            state.sessions[s.id] = std::move(s);
        }
        state.next_learnware = codec::get<LearnwareId>(counters, "next_learnware");
        state.next_session = codec::get<std::uint64_t>(counters, "next_session");
    } catch (const CodecError& e) {
        throw StateError("state file " + doc_path.string() + " is malformed: " + e.what());
    } catch (const UsageError& e) {
        throw StateError("state file " + doc_path.string() + " is malformed: " + e.what());
    }
    detail::check_integrity(state);
    return state;
}

// Full in-memory rendering, payloads inlined. Two states are equal exactly
// when their documents are.
inline json state_document(const MarketState& state) {
    std::vector<detail::Payload> payloads;
    json doc = detail::market_document(state, payloads);
    json files = json::object();
    for (const auto& p : payloads) {
        files[p.file] = json::parse(p.bytes);
    }
    doc["files"] = std::move(files);
    return doc;
}

} // namespace learnware
