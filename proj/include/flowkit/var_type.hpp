#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace flowkit {

enum class ScalarType { String, Number, Boolean, Object, File };

// Variable type: a scalar or a one-level array of a scalar.
struct VarType {
    ScalarType elem = ScalarType::String;
    bool is_array = false;

    constexpr bool operator==(const VarType&) const = default;

    bool is_file_kind() const { return elem == ScalarType::File; }

    static constexpr VarType string() { return {ScalarType::String, false}; }
    static constexpr VarType number() { return {ScalarType::Number, false}; }
    static constexpr VarType boolean() { return {ScalarType::Boolean, false}; }
    static constexpr VarType object() { return {ScalarType::Object, false}; }
    static constexpr VarType file() { return {ScalarType::File, false}; }
    static constexpr VarType array_of(ScalarType t) { return {t, true}; }

    std::string to_string() const;
    static std::optional<VarType> parse(std::string_view text);
};

std::string scalar_type_name(ScalarType t);

}  // namespace flowkit
