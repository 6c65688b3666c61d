#pragma once

// Specification islands: the tag-derived signature that names a functional
// space, the registry of islands, and island merging when a model spanning
// two input spaces is accepted.

#include "learnware/codec.hpp"
#include "learnware/kernel.hpp"
#include "learnware/predictor.hpp"
#include "learnware/rkme.hpp"

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace learnware {

struct InputField {
    std::string name;
    std::size_t dim = 0;

    friend bool operator==(const InputField&, const InputField&) = default;
};

// Input schema (sorted by field name), output descriptor, objective and task tags.
struct IslandSignature {
    std::vector<InputField> input_schema;
    OutputDesc output;
    std::string objective;
    std::set<std::string> task_tags;

    std::size_t input_dims() const {
        std::size_t total = 0;
        for (const auto& f : input_schema) {
            total += f.dim;
        }
        return total;
    }

    // Offset of a field inside the input coordinates, if present.
    std::optional<std::size_t> offset_of(const std::string& name) const {
        std::size_t off = 0;
        for (const auto& f : input_schema) {
            if (f.name == name) {
                return off;
            }
            off += f.dim;
        }
        return std::nullopt;
    }

    std::optional<std::size_t> dim_of(const std::string& name) const {
        for (const auto& f : input_schema) {
            if (f.name == name) {
                return f.dim;
            }
        }
        return std::nullopt;
    }

    Layout layout() const { return Layout{input_dims(), output.dim}; }

    json to_json() const {
        json fields = json::array();
        for (const auto& f : input_schema) {
            fields.push_back(json{{"name", f.name}, {"dim", f.dim}});
        }
        return json{{"input", fields},
                    {"output", learnware::to_json(output)},
                    {"objective", objective},
                    {"task", std::vector<std::string>(task_tags.begin(), task_tags.end())}};
    }

    // Stable identity string; equal descriptor content gives equal strings.
    std::string canonical() const { return "sig/v1:" + to_json().dump(); }

    friend bool operator==(const IslandSignature& a, const IslandSignature& b) {
        return a.canonical() == b.canonical();
    }
};

// Tag document:
//   {"input":[{"name":..,"dim":..},..], "output":{"kind":"regression"|"classification","dim":..},
//    "objective":"..", "task":[..]}
inline IslandSignature make_signature(const json& descriptors) {
    if (!descriptors.is_object()) {
        throw UsageError("tag document must be a JSON object");
    }
    for (const char* key : {"input", "output", "objective"}) {
        if (!descriptors.contains(key)) {
            throw UsageError(std::string("tag document is missing '") + key + "'");
        }
    }
    IslandSignature sig;
    try {
        std::map<std::string, std::size_t> fields;
        const json& input = descriptors.at("input");
        if (!input.is_array() || input.empty()) {
            throw UsageError("input schema must be a nonempty array");
        }
        for (const json& f : input) {
            const auto name = f.at("name").get<std::string>();
            const auto dim = f.at("dim").get<std::size_t>();
            if (name.empty() || dim == 0) {
                throw UsageError("input fields need a name and a positive dimension");
            }
            const auto [it, inserted] = fields.emplace(name, dim);
            if (!inserted && it->second != dim) {
                throw UsageError("conflicting dimensions for input field '" + name + "'");
            }
        }
        for (const auto& [name, dim] : fields) {
            sig.input_schema.push_back(InputField{name, dim});
        }
        sig.output = output_desc_from_json(descriptors.at("output"));
        sig.objective = descriptors.at("objective").get<std::string>();
        if (sig.objective.empty()) {
            throw UsageError("objective tag must be nonempty");
        }
        if (descriptors.contains("task")) {
            for (const json& t : descriptors.at("task")) {
                sig.task_tags.insert(t.get<std::string>());
            }
        }
    } catch (const json::exception& e) {
        throw UsageError(std::string("malformed tag document: ") + e.what());
    } catch (const CodecError& e) {
        throw UsageError(std::string("malformed tag document: ") + e.what());
    }
    return sig;
}

struct Island {
    IslandId id = 0;
    IslandSignature signature;
    KernelSpec kernel;
    std::set<LearnwareId> members;
    std::optional<std::pair<IslandId, IslandId>> merged_from;
    std::optional<IslandId> merged_into;

    bool live() const { return !merged_into.has_value(); }
};

// Median heuristic: gamma = 1 / (2 median^2) over all pairwise distances.
inline KernelSpec median_heuristic_kernel(const Matrix& sample) {
    require(sample.rows() >= 2, "calibration sample needs at least two points");
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(sample.rows() * (sample.rows() - 1) / 2));
    for (Eigen::Index i = 0; i < sample.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < sample.rows(); ++j) {
            dists.push_back((sample.row(i) - sample.row(j)).norm());
        }
    }
    const double med = median(std::move(dists));
    require(med > 0.0 && std::isfinite(med), "calibration sample is degenerate (median distance is zero)");
    return KernelSpec(1.0 / (2.0 * med * med));
}

// Produces `count` input rows.
using InputSampler = std::function<Matrix(std::size_t count, Rng& rng)>;

inline InputSampler gaussian_sampler(std::size_t dims, double scale = 1.0) {
    return [dims, scale](std::size_t count, Rng& rng) {
        Matrix x(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dims));
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
                x(r, c) = scale * rng.normal();
            }
        }
        return x;
    };
}

// Random inputs fed through the model, each concatenated with its output.
inline EmpiricalSketch synth_bridge(const Predictor& model, const InputSampler& sampler, std::size_t count,
                                    std::uint64_t seed, const OutputDesc& desc) {
    require(count >= 1, "synthetic bridge needs a positive sample count");
    Rng rng(seed);
    const Matrix x = sampler(count, rng);
    require(static_cast<std::size_t>(x.rows()) == count, "sampler returned the wrong number of rows");
    return make_sketch(model, x, desc);
}

class IslandRegistry {
public:
    // Exact signature match; retired (merged) islands forward to the island
    // they were merged into.
    std::optional<IslandId> locate(const IslandSignature& sig) const {
        const auto it = by_signature_.find(sig.canonical());
        if (it == by_signature_.end()) {
            return std::nullopt;
        }
        IslandId id = it->second;
        while (islands_.at(id).merged_into) {
            id = *islands_.at(id).merged_into;
        }
        return id;
    }

    // The island registered under exactly this signature, retired or not.
    std::optional<IslandId> exact(const IslandSignature& sig) const {
        const auto it = by_signature_.find(sig.canonical());
        if (it == by_signature_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    const Island& create(const IslandSignature& sig, const Matrix& calibration) {
        if (by_signature_.count(sig.canonical()) != 0) {
            throw UsageError("an island with this signature already exists");
        }
        Island island;
        island.id = next_id_++;
        island.signature = sig;
        island.kernel = median_heuristic_kernel(calibration);
        return insert(std::move(island));
    }

    // Validates that `spanning` covers exactly the union of two live islands
    // with matching output and objective.
    void check_mergeable(const IslandSignature& spanning, IslandId a, IslandId b) const {
        const Island& ia = get(a);
        const Island& ib = get(b);
        require(a != b, "cannot merge an island with itself");
        require(ia.live() && ib.live(), "only live islands can be merged");
        require(ia.signature.output == spanning.output && ib.signature.output == spanning.output,
                "merged islands must share the output space");
        require(ia.signature.objective == spanning.objective && ib.signature.objective == spanning.objective,
                "merged islands must share the objective");
        std::map<std::string, std::size_t> uni;
        for (const auto* s : {&ia.signature, &ib.signature}) {
            for (const auto& f : s->input_schema) {
                const auto [it, inserted] = uni.emplace(f.name, f.dim);
                require(inserted || it->second == f.dim, "islands disagree on the dimension of '" + f.name + "'");
            }
        }
        std::vector<InputField> expected;
        for (const auto& [name, dim] : uni) {
            expected.push_back(InputField{name, dim});
        }
        require(expected == spanning.input_schema, "spanning model input schema is not the union of the islands");
        require(by_signature_.count(spanning.canonical()) == 0, "spanning signature already names an island");
    }

    // New live island over the union schema; a and b retire into it and keep
    // their members reachable.
    const Island& merge(const IslandSignature& spanning, IslandId a, IslandId b, const Matrix& calibration) {
        check_mergeable(spanning, a, b);
        Island merged;
        merged.id = next_id_++;
        merged.signature = spanning;
        merged.kernel = median_heuristic_kernel(calibration);
        merged.merged_from = std::make_pair(a, b);
        for (IslandId parent : {a, b}) {
            const Island& p = islands_.at(parent);
            merged.members.insert(p.members.begin(), p.members.end());
        }
        const IslandId id = merged.id;
        insert(std::move(merged));
        islands_.at(a).merged_into = id;
        islands_.at(b).merged_into = id;
        return islands_.at(id);
    }

    // Pair of live islands whose schemas partition `spanning`, if any.
    std::optional<std::pair<IslandId, IslandId>> find_merge_pair(const IslandSignature& spanning) const {
        for (const auto& [a, ia] : islands_) {
            if (!ia.live()) {
                continue;
            }
            for (const auto& [b, ib] : islands_) {
                if (b <= a || !ib.live()) {
                    continue;
                }
                try {
                    check_mergeable(spanning, a, b);
                    return std::make_pair(a, b);
                } catch (const UsageError&) {
                }
            }
        }
        return std::nullopt;
    }

    void add_member(IslandId island, LearnwareId id) { get_mut(island).members.insert(id); }
    void remove_member(IslandId island, LearnwareId id) { get_mut(island).members.erase(id); }

    const Island& get(IslandId id) const {
        const auto it = islands_.find(id);
        if (it == islands_.end()) {
            throw NotFoundError("no island with id " + std::to_string(id));
        }
        return it->second;
    }

    bool contains(IslandId id) const { return islands_.count(id) != 0; }
    const std::map<IslandId, Island>& all() const { return islands_; }
    IslandId next_id() const { return next_id_; }

    // Restores a persisted island verbatim.
    void restore(Island island, IslandId next_id) {
        insert(std::move(island));
        next_id_ = std::max(next_id_, next_id);
    }

private:
    Island& get_mut(IslandId id) {
        const auto it = islands_.find(id);
        if (it == islands_.end()) {
            throw NotFoundError("no island with id " + std::to_string(id));
        }
        return it->second;
    }

    const Island& insert(Island island) {
        const IslandId id = island.id;
        by_signature_[island.signature.canonical()] = id;
        next_id_ = std::max(next_id_, id + 1);
        return islands_.emplace(id, std::move(island)).first->second;
    }

    std::map<IslandId, Island> islands_;
    std::map<std::string, IslandId> by_signature_;
    IslandId next_id_ = 1;
};

// Coordinates two specifications share, as index lists into each. Input
// fields are matched by name (in canonical order); the output block is
// appended when both sides carry it and `include_outputs` is set.
struct CoordinateMatch {
    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    std::size_t shared_inputs = 0;
};

inline CoordinateMatch common_coordinates(const IslandSignature& left_sig, const Layout& left_layout,
                                          const IslandSignature& right_sig, const Layout& right_layout,
                                          bool include_outputs) {
    CoordinateMatch match;
    for (const auto& f : left_sig.input_schema) {
        const auto right_off = right_sig.offset_of(f.name);
        if (!right_off || right_sig.dim_of(f.name) != f.dim) {
            continue;
        }
        const std::size_t left_off = *left_sig.offset_of(f.name);
        for (std::size_t c = 0; c < f.dim; ++c) {
            match.left.push_back(left_off + c);
            match.right.push_back(*right_off + c);
        }
        match.shared_inputs += f.dim;
    }
    if (include_outputs && left_layout.y_dims > 0 && left_layout.y_dims == right_layout.y_dims) {
        for (std::size_t c = 0; c < left_layout.y_dims; ++c) {
            match.left.push_back(left_layout.x_dims + c);
            match.right.push_back(right_layout.x_dims + c);
        }
    }
    return match;
}

} // namespace learnware
