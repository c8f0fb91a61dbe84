#include "flowkit/var_type.hpp"

namespace flowkit {

std::string scalar_type_name(ScalarType t) {
    switch (t) {
        case ScalarType::String: return "string";
        case ScalarType::Number: return "number";
        case ScalarType::Boolean: return "boolean";
        case ScalarType::Object: return "object";
        case ScalarType::File: return "file";
    }
    return "string";
}

std::string VarType::to_string() const {
    if (is_array) return "array[" + scalar_type_name(elem) + "]";
    return scalar_type_name(elem);
}

static std::optional<ScalarType> parse_scalar(std::string_view text) {
    if (text == "string") return ScalarType::String;
    if (text == "number") return ScalarType::Number;
    if (text == "boolean") return ScalarType::Boolean;
    if (text == "object") return ScalarType::Object;
    if (text == "file") return ScalarType::File;
    return std::nullopt;
}

std::optional<VarType> VarType::parse(std::string_view text) {
    if (text.rfind("array[", 0) == 0 && text.size() > 7 && text.back() == ']') {
        auto inner = parse_scalar(text.substr(6, text.size() - 7));
        if (!inner) return std::nullopt;
        return VarType{*inner, true};
    }
    auto scalar = parse_scalar(text);
    if (!scalar) return std::nullopt;
    return VarType{*scalar, false};
}

}  // namespace flowkit
