#pragma once

// JSON forms of the value types that cross process or disk boundaries.
// nlohmann/json writes doubles as the shortest decimal that round-trips, so
// decoding an encoded spec gives back the identical bits.

#include "learnware/kernel.hpp"
#include "learnware/predictor.hpp"
#include "learnware/rkme.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace learnware {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

namespace codec {

inline const json& field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) {
        throw CodecError(std::string("missing field '") + key + "'");
    }
    return j.at(key);
}

template <typename T>
T get(const json& j, const char* key) {
    try {
        return field(j, key).get<T>();
    } catch (const json::exception& e) {
        throw CodecError(std::string("bad field '") + key + "': " + e.what());
    }
}

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// `cols` is needed only to shape an empty matrix.
inline Matrix matrix_from_json(const json& j, Eigen::Index cols = 0) {
    if (!j.is_array()) {
        throw CodecError("matrix must be an array of rows");
    }
    if (j.empty()) {
        return Matrix(0, cols);
    }
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (!j.front().is_array()) {
        throw CodecError("matrix rows must be arrays");
    }
    const auto width = static_cast<Eigen::Index>(j.front().size());
    Matrix m(rows, width);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != width) {
            throw CodecError("matrix rows must all have the same length");
        }
        for (Eigen::Index c = 0; c < width; ++c) {
            const json& v = row[static_cast<std::size_t>(c)];
            if (!v.is_number()) {
                throw CodecError("matrix entries must be numbers");
            }
            m(r, c) = v.get<double>();
        }
    }
    return m;
}

inline json vector_to_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out.push_back(v(i));
    }
    return out;
}

inline Vector vector_from_json(const json& j) {
    if (!j.is_array()) {
        throw CodecError("vector must be an array");
    }
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) {
            throw CodecError("vector entries must be numbers");
        }
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

} // namespace codec

inline json to_json(const KernelSpec& k) { return json{{"kind", to_string(k.kind)}, {"gamma", k.gamma}}; }

inline KernelSpec kernel_from_json(const json& j) {
    const auto kind = codec::get<std::string>(j, "kind");
    if (kind != "gaussian") {
        throw CodecError("unknown kernel kind '" + kind + "'");
    }
    const auto gamma = codec::get<double>(j, "gamma");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw CodecError("kernel gamma must be positive");
    }
    return KernelSpec(gamma);
}

inline json to_json(const RkmeSpec& s) {
    return json{{"version", kFormatVersion},
                {"kernel", to_json(s.kernel)},
                {"beta", codec::vector_to_json(s.beta())},
                {"points", codec::matrix_to_json(s.points())},
                {"layout", {{"x_dims", s.layout.x_dims}, {"y_dims", s.layout.y_dims}}},
                {"n", s.n},
                {"source_m", s.source_m}};
}

inline RkmeSpec spec_from_json(const json& j) {
    if (codec::get<int>(j, "version") != kFormatVersion) {
        throw CodecError("unsupported specification version");
    }
    RkmeSpec s;
    s.kernel = kernel_from_json(codec::field(j, "kernel"));
    const json& layout = codec::field(j, "layout");
    s.layout = Layout{codec::get<std::size_t>(layout, "x_dims"), codec::get<std::size_t>(layout, "y_dims")};
    s.n = codec::get<std::size_t>(j, "n");
    s.source_m = codec::get<std::size_t>(j, "source_m");
    Matrix points = codec::matrix_from_json(codec::field(j, "points"), static_cast<Eigen::Index>(s.layout.total()));
    Vector beta = codec::vector_from_json(codec::field(j, "beta"));
    if (points.rows() != beta.size() || static_cast<std::size_t>(points.rows()) != s.n) {
        throw CodecError("specification row count does not match n");
    }
    try {
        s.reduced = WeightedPointSet(std::move(points), std::move(beta));
        s.validate();
    } catch (const UsageError& e) {
        throw CodecError(std::string("invalid specification: ") + e.what());
    }
    return s;
}

inline json to_json(const OutputDesc& d) {
    return json{{"kind", d.kind == OutputKind::regression ? "regression" : "classification"}, {"dim", d.dim}};
}

inline OutputDesc output_desc_from_json(const json& j) {
    OutputDesc d;
    const auto kind = codec::get<std::string>(j, "kind");
    if (kind == "regression") {
        d.kind = OutputKind::regression;
    } else if (kind == "classification") {
        d.kind = OutputKind::classification;
    } else {
        throw CodecError("unknown output kind '" + kind + "'");
    }
    d.dim = codec::get<std::size_t>(j, "dim");
    if (d.dim == 0) {
        throw CodecError("output dimension must be positive");
    }
    return d;
}

} // namespace learnware
