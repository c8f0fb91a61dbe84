#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowkit/errors.hpp"
#include "flowkit/var_type.hpp"

namespace flowkit {

enum class NodeKind {
    Start,
    End,
    Llm,
    QuestionClassifier,
    Code,
    DocumentExtractor,
    HttpRequest,
    IfElse,
    ListOperator,
    ParameterExtractor,
    TemplateTransform,
    VariableAggregator,
    Iteration,
    IterationStart,
    TextToSpeech,
    TextToImage,
    MermaidConverter,
    MarkdownExporter,
    GoogleSearch,
    Echarts,
};

inline constexpr int kNodeKindCount = 20;

const std::string& kind_id(NodeKind kind);

// Outbound port semantics. Start/end are terminal on one side: start accepts
// no inbound edges, end exposes no outbound ports.
enum class PortRule { Fixed, PerBranch, PerClass };

enum class ContainerRule { Plain, Container, ContainerEntry };

struct ParamSpec {
    std::string name;
    VarType type;
    bool required = false;
};

struct OutputVarSpec {
    std::string name;
    VarType type;
};

struct NodeSpec {
    NodeKind kind;
    std::vector<ParamSpec> primary_params;
    // Static output interface; kinds with `dynamic_outputs` derive their real
    // set from params or upstream types during graph resolution.
    std::vector<OutputVarSpec> output_vars;
    bool dynamic_outputs = false;
    PortRule port_rule = PortRule::Fixed;
    int fixed_ports = 1;
    bool accepts_inbound = true;
    ContainerRule container_rule = ContainerRule::Plain;
    // Bound model name for model-backed kinds (empty otherwise).
    std::string model_binding;
    std::string summary;
};

enum class ViolationKind { MissingRequired, UnknownKey, TypeMismatch, InvalidValue };

struct ParamViolation {
    ViolationKind kind;
    std::string key;
    std::string detail;

    std::string to_string() const;
};

// Per-kind model overrides; keys are kind ids.
struct CatalogConfig {
    std::map<std::string, std::string> model_overrides;
};

class Catalog {
public:
    explicit Catalog(CatalogConfig config = {});

    // Case-insensitive; resolves the "template" alias. Throws UnknownKindError.
    const NodeSpec& lookup(std::string_view kind_token) const;
    const NodeSpec* find(std::string_view kind_token) const;
    const NodeSpec& spec(NodeKind kind) const;

    // Canonical kind id after case folding and alias resolution.
    std::string canonical_kind_id(std::string_view kind_token) const;

    const std::vector<NodeSpec>& specs() const { return specs_; }

    int outbound_port_count(const NodeSpec& spec, const nlohmann::json& params) const;

    // Full primary-param validation: required presence, closed key set, JSON
    // shape per declared type, and kind-specific structural rules. Violations
    // come back in a stable order; never throws.
    std::vector<ParamViolation> validate_params(const NodeSpec& spec,
                                                const nlohmann::json& params) const;

    // Params with documented defaults materialized for absent optional keys.
    nlohmann::json canonical_params(const NodeSpec& spec, const nlohmann::json& params) const;

    // One record per kind: params, outputs, port and container semantics.
    nlohmann::json to_json() const;

private:
    std::vector<NodeSpec> specs_;
    std::map<std::string, NodeKind> token_index_;
};

const Catalog& default_catalog();

// Var-ref token helpers: `{{#node_id.var_name#}}`.
struct VarRefToken {
    std::string node_id;
    std::string var_name;

    std::string render() const { return "{{#" + node_id + "." + var_name + "#}}"; }
};

std::optional<VarRefToken> parse_var_ref(std::string_view text);
bool is_pure_var_ref(std::string_view text);
// Scans `text` for embedded var-ref tokens, in order of appearance.
std::vector<VarRefToken> find_var_refs(std::string_view text);

// Maps the unicode comparator spellings to their canonical ascii forms.
std::string normalize_comparator(std::string_view op);

}  // namespace flowkit
