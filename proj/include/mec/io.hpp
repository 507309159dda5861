#pragma once

/**
 * @file io.hpp
 * @brief JSON instance and coupling file formats.
 *
 * Instances: { "distributions": [ ["1/2", "0.25", ...], ... ] } with every
 * mass a fraction or finite-decimal string; JSON numbers are rejected so
 * binary floats never sneak in as probabilities.
 *
 * Coupling files carry the algorithm, the resolved parameters, the entropy
 * as a 12-significant-digit decimal string, and the states sorted
 * lexicographically by origin tuple with lowest-terms fraction masses.
 * Serialization is byte-deterministic for a given coupling.
 */

#include "mec/model.hpp"

#include <json.hpp>

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace mec {

using json = nlohmann::ordered_json;

/// 12 significant digits, shortest form.
inline std::string format_entropy(EntropyValue bits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", bits);
    return std::string(buf);
}

inline std::vector<Distribution> parse_instance(const json& doc) {
    if (!doc.is_object() || !doc.contains("distributions") || !doc["distributions"].is_array())
        throw std::invalid_argument("instance: expected {\"distributions\": [[...], ...]}");
    std::vector<Distribution> out;
    for (const json& row : doc["distributions"]) {
        if (!row.is_array()) throw std::invalid_argument("instance: each distribution must be an array");
        std::vector<Mass> masses;
        for (const json& cell : row) {
            if (!cell.is_string())
                throw std::invalid_argument("instance: masses must be fraction or decimal strings");
            masses.push_back(Mass::parse(cell.get<std::string>()));
        }
        out.push_back(Distribution::from_masses(std::move(masses)));
    }
    if (out.size() < 2) throw std::invalid_argument("instance: need at least two distributions");
    return out;
}

inline std::vector<Distribution> parse_instance_text(const std::string& text) {
    return parse_instance(json::parse(text));
}

/// Resolved parameters echoed into every output file so results are
/// self-describing; fields not applicable to an algorithm stay null.
struct RunParamsMeta {
    std::optional<Mass> epsilon;
    std::optional<Mass> epsilon_prime;
    std::optional<Mass> alpha;
    std::optional<Mass> tau;
    std::optional<std::size_t> budget;
    std::optional<bool> theorem_mode;

    json to_json() const {
        json j = json::object();
        j["epsilon"] = epsilon ? json(epsilon->to_string()) : json(nullptr);
        j["epsilon_prime"] = epsilon_prime ? json(epsilon_prime->to_string()) : json(nullptr);
        j["alpha"] = alpha ? json(alpha->to_string()) : json(nullptr);
        j["tau"] = tau ? json(tau->to_string()) : json(nullptr);
        j["budget"] = budget ? json(*budget) : json(nullptr);
        j["theorem_mode"] = theorem_mode ? json(*theorem_mode) : json(nullptr);
        return j;
    }
};

inline json coupling_to_json(const Coupling& c, const std::string& algorithm, const RunParamsMeta& meta,
                             std::optional<EntropyValue> dp_cost_bits = std::nullopt) {
    json doc = json::object();
    doc["algorithm"] = algorithm;
    doc["params"] = meta.to_json();
    doc["entropy_bits"] = format_entropy(coupling_entropy(c));
    if (dp_cost_bits) doc["dp_cost_bits"] = format_entropy(*dp_cost_bits);
    json states = json::array();
    for (const CouplingState& s : c.states) {
        json st = json::object();
        st["mass"] = s.mass.to_string();
        st["indices"] = s.origins;
        states.push_back(std::move(st));
    }
    doc["states"] = std::move(states);
    return doc;
}

/// Reads back the states of a coupling file; the caller supplies the source
/// shape (from the instance) since the file does not repeat it.
inline Coupling coupling_from_json(const json& doc, std::vector<int> source_shape) {
    if (!doc.is_object() || !doc.contains("states") || !doc["states"].is_array())
        throw std::invalid_argument("coupling: expected {\"states\": [...]}");
    std::vector<CouplingState> states;
    for (const json& st : doc["states"]) {
        if (!st.is_object() || !st.contains("mass") || !st["mass"].is_string() || !st.contains("indices"))
            throw std::invalid_argument("coupling: each state needs a mass string and indices");
        CouplingState s;
        s.mass = Mass::parse(st["mass"].get<std::string>());
        for (const json& ix : st["indices"]) {
            if (!ix.is_number_integer()) throw std::invalid_argument("coupling: indices must be integers");
            s.origins.push_back(ix.get<int>());
        }
        states.push_back(std::move(s));
    }
    Coupling out;
    out.m = static_cast<int>(source_shape.size());
    out.source_shape = std::move(source_shape);
    for (CouplingState& s : states) {
        if (static_cast<int>(s.origins.size()) != out.m)
            throw std::invalid_argument("coupling: origin tuple arity mismatch with instance");
    }
    out.states = std::move(states);
    return out;
}

} // namespace mec
