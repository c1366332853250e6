#pragma once

// Schema helpers shared by the file readers. Errors name the JSON path.

#include "tsc/error.h"

#include <json.hpp>

#include <optional>
#include <string>
#include <string_view>

namespace tsc::detail {

using nlohmann::json;

inline json parse_json(std::string_view text, const std::string &what) {
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error &e) {
        throw SyntaxError(what + ": " + e.what(), e.byte);
    }
}

inline const json &member(const json &obj, const char *key, const std::string &path) {
    if (!obj.is_object())
        throw ValidationError(path + ": expected an object");
    auto it = obj.find(key);
    if (it == obj.end())
        throw ValidationError(path + "." + key + ": missing");
    return *it;
}

inline std::string get_string(const json &obj, const char *key, const std::string &path) {
    const json &v = member(obj, key, path);
    if (!v.is_string())
        throw ValidationError(path + "." + key + ": expected a string");
    return v.get<std::string>();
}

inline std::optional<std::string> get_optional_string(const json &obj, const char *key, const std::string &path) {
    const json &v = member(obj, key, path);
    if (v.is_null())
        return std::nullopt;
    if (!v.is_string())
        throw ValidationError(path + "." + key + ": expected a string or null");
    return v.get<std::string>();
}

inline double get_number(const json &obj, const char *key, const std::string &path) {
    const json &v = member(obj, key, path);
    if (!v.is_number())
        throw ValidationError(path + "." + key + ": expected a number");
    return v.get<double>();
}

inline const json &get_array(const json &obj, const char *key, const std::string &path) {
    const json &v = member(obj, key, path);
    if (!v.is_array())
        throw ValidationError(path + "." + key + ": expected an array");
    return v;
}

inline std::string element_string(const json &v, const std::string &path) {
    if (!v.is_string())
        throw ValidationError(path + ": expected a string");
    return v.get<std::string>();
}

} // namespace tsc::detail
