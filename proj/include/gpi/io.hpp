#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "gpi/error.hpp"
#include "gpi/linalg.hpp"
#include "json.hpp"

namespace gpi {

using json = nlohmann::json;

inline constexpr const char* kCodeVersion = "0.1.0";
inline constexpr const char* kVerdictSchema = "gpi-verdict/1";

/// {"dim": d, "rows": [[...], ...]}
inline json matrix_to_json(const Matrix& m) { return json{{"dim", m.rows()}, {"rows", m.to_rows()}}; }

/// Accepts {"dim": d, "rows": [...]} or a bare array of rows. Asymmetry above
/// 1e-12 (relative) and indefinite matrices are rejected by CovMatrix.
inline CovMatrix cov_from_json(const json& j) {
    const json* rows = &j;
    std::size_t dim = 0;
    if (j.is_object()) {
        if (!j.contains("rows")) throw Error(ErrorKind::ParseError, "matrix object needs \"rows\"");
        rows = &j.at("rows");
        if (j.contains("dim")) dim = j.at("dim").get<std::size_t>();
    }
    if (!rows->is_array() || rows->empty()) throw Error(ErrorKind::ParseError, "matrix rows must be a non-empty array");
    std::vector<std::vector<double>> r;
    for (const auto& row : *rows) {
        if (!row.is_array()) throw Error(ErrorKind::ParseError, "each matrix row must be an array");
        std::vector<double> vals;
        for (const auto& v : row) {
            if (!v.is_number()) throw Error(ErrorKind::ParseError, "matrix entries must be numbers");
            vals.push_back(v.get<double>());
        }
        r.push_back(std::move(vals));
    }
    if (dim != 0 && dim != r.size()) throw Error(ErrorKind::ParseError, "\"dim\" disagrees with the number of rows");
    return CovMatrix(Matrix::from_rows(r));
}

inline CovMatrix cov_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::ParseError, std::string("invalid matrix JSON: ") + e.what());
    }
    return cov_from_json(j);
}

/// Doubles that may be infinite are written as "inf" / "-inf".
inline json number_to_json(double v) {
    if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
    if (std::isnan(v)) return json("nan");
    return json(v);
}

inline double number_from_json(const json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        return std::numeric_limits<double>::quiet_NaN();
    }
    return j.get<double>();
}

}  // namespace gpi
