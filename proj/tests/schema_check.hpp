#pragma once

// Validator for the subset of JSON Schema used by docs/artifact.schema.json:
// type, const, enum, required, properties, additionalProperties (false),
// items, minimum, allOf, if/then and local $ref.

#include <string>
#include <vector>

#include <json.hpp>

namespace schema_check {

using nlohmann::json;

inline bool type_matches(const json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "boolean") return v.is_boolean();
    if (type == "null") return v.is_null();
    if (type == "integer") return v.is_number_integer();
    if (type == "number") return v.is_number();
    return false;
}

inline void validate(const json& v, const json& s, const json& root, const std::string& at,
                     std::vector<std::string>& errors) {
    if (s.contains("$ref")) {
        const std::string ref = s["$ref"].get<std::string>();
        const std::string prefix = "#/$defs/";
        if (ref.rfind(prefix, 0) != 0) {
            errors.push_back(at + ": unsupported $ref " + ref);
            return;
        }
        validate(v, root["$defs"][ref.substr(prefix.size())], root, at, errors);
    }
    if (s.contains("type")) {
        bool ok = false;
        if (s["type"].is_array()) {
            for (const auto& t : s["type"]) ok = ok || type_matches(v, t.get<std::string>());
        } else {
            ok = type_matches(v, s["type"].get<std::string>());
        }
        if (!ok) {
            errors.push_back(at + ": type mismatch, expected " + s["type"].dump());
            return;
        }
    }
    if (s.contains("const") && v != s["const"]) errors.push_back(at + ": expected " + s["const"].dump());
    if (s.contains("enum")) {
        bool found = false;
        for (const auto& e : s["enum"]) found = found || v == e;
        if (!found) errors.push_back(at + ": " + v.dump() + " not in " + s["enum"].dump());
    }
    if (s.contains("minimum") && v.is_number() && v.get<double>() < s["minimum"].get<double>()) {
        errors.push_back(at + ": below minimum");
    }
    if (v.is_object()) {
        if (s.contains("required")) {
            for (const auto& k : s["required"]) {
                if (!v.contains(k.get<std::string>())) errors.push_back(at + ": missing " + k.get<std::string>());
            }
        }
        if (s.contains("properties")) {
            for (const auto& [k, sub] : s["properties"].items()) {
                if (v.contains(k)) validate(v[k], sub, root, at + "/" + k, errors);
            }
        }
        if (s.contains("additionalProperties") && s["additionalProperties"] == false) {
            for (const auto& item : v.items()) {
                if (!s.contains("properties") || !s["properties"].contains(item.key())) {
                    errors.push_back(at + ": unexpected key " + item.key());
                }
            }
        }
    }
    if (v.is_array() && s.contains("items")) {
        for (std::size_t i = 0; i < v.size(); ++i) validate(v[i], s["items"], root, at + "/" + std::to_string(i), errors);
    }
    if (s.contains("allOf")) {
        for (const auto& sub : s["allOf"]) validate(v, sub, root, at, errors);
    }
    if (s.contains("if")) {
        std::vector<std::string> probe;
        validate(v, s["if"], root, at, probe);
        if (probe.empty() && s.contains("then")) validate(v, s["then"], root, at, errors);
    }
}

// Empty result means valid.
inline std::vector<std::string> validate(const json& v, const json& schema) {
    std::vector<std::string> errors;
    validate(v, schema, schema, "", errors);
    return errors;
}

}  // namespace schema_check
