#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowkit/errors.hpp"

namespace flowkit {

// Raw node record straight from the interchange JSON, pre-validation.
struct RawNode {
    std::string id;
    std::string type;
    std::string title;
    nlohmann::json params = nlohmann::json::object();
    std::optional<std::string> parent_id;

    bool operator==(const RawNode&) const = default;
};

struct RawEdge {
    std::string source;
    int port = 0;
    std::string target;

    auto operator<=>(const RawEdge&) const = default;
};

struct WorkflowDoc {
    std::vector<RawNode> nodes_info;
    std::vector<RawEdge> edges;

    bool operator==(const WorkflowDoc&) const = default;

    nlohmann::json to_json() const;
    std::string dump(int indent = 2) const;
};

// The three CoT sections of a model response.
struct ParsedResponse {
    std::vector<std::string> node_selection;
    std::string design_principle;
    std::string workflow_text;
    std::optional<WorkflowDoc> workflow_doc;
};

class ParseError : public Error {
public:
    enum class Kind { MissingTag, JsonSyntax, SchemaViolation };

    ParseError(Kind kind, std::string where, const std::string& message)
        : Error(kind == Kind::MissingTag      ? "MissingTag"
                : kind == Kind::JsonSyntax    ? "JsonSyntax"
                                              : "SchemaViolation",
                message),
          kind_(kind),
          where_(std::move(where)) {}

    Kind kind() const { return kind_; }
    // Tag name, byte position, or JSON path depending on the kind.
    const std::string& where() const { return where_; }

private:
    Kind kind_;
    std::string where_;
};

// Locates the <node_selection>, <design_principle>, and <workflow> tag pairs
// anywhere in the text (order-insensitive, surrounding prose ignored).
// Throws ParseError{MissingTag} when a pair is absent or unbalanced.
ParsedResponse extract_sections(const std::string& response_text);

// Removes one leading and one trailing code-fence line when present. Total and
// idempotent; handles an unterminated leading fence.
std::string strip_code_fences(const std::string& text);

// Strict decode of the (fence-stripped) workflow text. Accepts edges both as
// [source, port, target] triples and as {source, port, target} maps with the
// port defaulting to 0; everything is normalized to the triple form.
WorkflowDoc decode_workflow(const std::string& workflow_text);

// Re-wraps a response in the three tags; inverse of extract_sections for
// tag-free section contents.
std::string render_response(const ParsedResponse& response);

}  // namespace flowkit
