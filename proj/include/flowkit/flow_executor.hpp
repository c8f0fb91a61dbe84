#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowkit/node_catalog.hpp"
#include "flowkit/workflow_graph.hpp"

namespace flowkit {

// File outputs are metadata-first; content bytes are optional and only matter
// for live-platform runs.
struct FileValue {
    std::string name;
    std::string extension;   // includes the dot, e.g. ".pdf"
    std::string media_kind;  // image | audio | document | other
    std::uint64_t byte_length = 0;
    std::optional<std::string> bytes;

    bool operator==(const FileValue&) const = default;
};

class TypedValue {
public:
    VarType type;
    nlohmann::json data;           // scalar/object payload, or array of payloads
    std::vector<FileValue> files;  // payload for file kinds

    TypedValue() : type(VarType::string()), data("") {}

    static TypedValue string_value(std::string s);
    static TypedValue number_value(double v);
    static TypedValue boolean_value(bool b);
    static TypedValue object_value(nlohmann::json obj);
    static TypedValue array_value(ScalarType elem, nlohmann::json items);
    static TypedValue file_value(FileValue file);
    static TypedValue file_array_value(std::vector<FileValue> files);

    bool operator==(const TypedValue&) const = default;

    std::size_t array_size() const;
    TypedValue element_at(std::size_t i) const;

    // Template rendering: numbers in shortest round-trip form, arrays joined
    // by newline, objects as compact JSON, files by their file name.
    std::string render() const;

    nlohmann::json to_json() const;
    static TypedValue from_json(const nlohmann::json& j);
};

class ExecError : public Error {
public:
    enum class Kind {
        HandlerError,
        LimitExceeded,
        InputMismatch,
        UnboundToken,
        TypeMismatch,
        ScriptMissing,
    };

    ExecError(Kind kind, std::string node_id, const std::string& message);

    Kind exec_kind() const { return kind_; }
    const std::string& node_id() const { return node_id_; }

private:
    Kind kind_;
    std::string node_id_;
};

// Write-once scoped store; iteration items read through to the parent scope.
class VarStore {
public:
    explicit VarStore(const VarStore* parent = nullptr) : parent_(parent) {}

    void put(const std::string& node_id, const std::string& var, TypedValue value);
    const TypedValue* find(const std::string& node_id, const std::string& var) const;

private:
    const VarStore* parent_;
    std::map<std::pair<std::string, std::string>, TypedValue> values_;
};

struct TraceEvent {
    enum class Kind { NodeEnter, NodeExit, BranchTaken, IterationItem, Error };

    Kind kind;
    std::string node_id;
    int port = -1;
    int index = -1;
    std::string detail;

    std::string to_line() const;
    bool operator==(const TraceEvent&) const = default;
};

using Trace = std::vector<TraceEvent>;

struct ExecLimits {
    int max_node_executions = 10000;
    int max_iteration_items = 1000;
};

struct ExecOutput {
    std::map<std::string, TypedValue> text_outputs;
    std::map<std::string, TypedValue> file_outputs;
    Trace trace;

    bool empty() const { return text_outputs.empty() && file_outputs.empty(); }
};

class ExecContext;

// Handlers produce the node's declared output variables from its params.
using NodeHandler = std::function<std::map<std::string, TypedValue>(ExecContext&)>;

// Scripted outputs for model-backed and tool nodes, keyed on (node id, input
// digest). Raw-input entries are digested at load time.
class ScriptTable {
public:
    void add(const std::string& node_id, const std::string& raw_input, nlohmann::json output);
    void add_digest(const std::string& node_id, const std::string& digest,
                    nlohmann::json output);
    void merge(const ScriptTable& other);
    const nlohmann::json* find(const std::string& node_id, const std::string& raw_input) const;

    static std::string digest(const std::string& raw_input);
    static ScriptTable from_json(const nlohmann::json& doc);

private:
    std::map<std::pair<std::string, std::string>, nlohmann::json> entries_;
};

struct HandlerRegistry {
    std::map<NodeKind, NodeHandler> handlers;
    ScriptTable scripts;
    // With no script entry, model-backed nodes fall back to deterministic
    // behavior (llm echoes its prompt, classifier picks class 0) unless strict.
    bool strict_scripts = false;
};

// Deterministic handlers for all 20 kinds.
HandlerRegistry default_test_handlers();

class ExecContext {
public:
    ExecContext(const ValidatedGraph& graph, const Node& node, const Catalog& catalog,
                VarStore& store, const HandlerRegistry& registry)
        : graph_(graph), node_(node), catalog_(catalog), store_(store), registry_(registry) {}

    const Node& node() const { return node_; }
    const ValidatedGraph& graph() const { return graph_; }
    const Catalog& catalog() const { return catalog_; }
    const HandlerRegistry& registry() const { return registry_; }

    // Params with defaults materialized.
    nlohmann::json params() const;

    const TypedValue& resolve(const VarRefToken& ref) const;
    TypedValue resolve_token_param(const std::string& key) const;
    // Substitutes every {{#node.var#}} token in the text.
    std::string render(const std::string& text) const;
    std::string render_param(const std::string& key) const;

    const nlohmann::json* script_output(const std::string& raw_input) const;
    bool strict_scripts() const { return registry_.strict_scripts; }

private:
    const ValidatedGraph& graph_;
    const Node& node_;
    const Catalog& catalog_;
    VarStore& store_;
    const HandlerRegistry& registry_;
};

// Runs the graph on the given inputs: nodes execute in topo order along the
// taken branch path, untaken branches are skipped, end outputs are split into
// text and file partitions by VarType.
ExecOutput execute(const ValidatedGraph& graph, const std::map<std::string, TypedValue>& inputs,
                   const HandlerRegistry& handlers, const Catalog& catalog,
                   const ExecLimits& limits = {});

// Branch condition evaluation for one if-else branch spec.
bool evaluate_condition(const nlohmann::json& branch,
                        const std::function<TypedValue(const VarRefToken&)>& resolve);

// Token substitution over an explicit resolver; UnboundToken on a miss.
std::string render_template(const std::string& text,
                            const std::function<const TypedValue*(const VarRefToken&)>& lookup);

std::string media_kind_for_extension(const std::string& extension);

}  // namespace flowkit
