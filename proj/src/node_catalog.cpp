#include "flowkit/node_catalog.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "flowkit/util.hpp"

namespace flowkit {

using nlohmann::json;

namespace {

struct KindName {
    NodeKind kind;
    const char* id;
};

constexpr std::array<KindName, kNodeKindCount> kKindNames{{
    {NodeKind::Start, "start"},
    {NodeKind::End, "end"},
    {NodeKind::Llm, "llm"},
    {NodeKind::QuestionClassifier, "question-classifier"},
    {NodeKind::Code, "code"},
    {NodeKind::DocumentExtractor, "document-extractor"},
    {NodeKind::HttpRequest, "http-request"},
    {NodeKind::IfElse, "if-else"},
    {NodeKind::ListOperator, "list-operator"},
    {NodeKind::ParameterExtractor, "parameter-extractor"},
    {NodeKind::TemplateTransform, "template-transform"},
    {NodeKind::VariableAggregator, "variable-aggregator"},
    {NodeKind::Iteration, "iteration"},
    {NodeKind::IterationStart, "iteration-start"},
    {NodeKind::TextToSpeech, "text-to-speech"},
    {NodeKind::TextToImage, "text-to-image"},
    {NodeKind::MermaidConverter, "mermaid-converter"},
    {NodeKind::MarkdownExporter, "markdown-exporter"},
    {NodeKind::GoogleSearch, "google-search"},
    {NodeKind::Echarts, "echarts"},
}};

const char* kTemplateAlias = "template";

std::string violation_kind_name(ViolationKind k) {
    switch (k) {
        case ViolationKind::MissingRequired: return "MissingRequired";
        case ViolationKind::UnknownKey: return "UnknownKey";
        case ViolationKind::TypeMismatch: return "TypeMismatch";
        case ViolationKind::InvalidValue: return "InvalidValue";
    }
    return "InvalidValue";
}

}  // namespace

const std::string& kind_id(NodeKind kind) {
    static const std::array<std::string, kNodeKindCount> ids = [] {
        std::array<std::string, kNodeKindCount> out;
        for (const auto& [k, id] : kKindNames) out[static_cast<std::size_t>(k)] = id;
        return out;
    }();
    return ids[static_cast<std::size_t>(kind)];
}

std::string ParamViolation::to_string() const {
    std::string out = violation_kind_name(kind) + "(" + key + ")";
    if (!detail.empty()) out += ": " + detail;
    return out;
}

Catalog::Catalog(CatalogConfig config) {
    specs_.reserve(kNodeKindCount);

    auto add = [&](NodeSpec spec) {
        auto it = config.model_overrides.find(kind_id(spec.kind));
        if (it != config.model_overrides.end()) spec.model_binding = it->second;
        specs_.push_back(std::move(spec));
    };

    const VarType str = VarType::string();
    const VarType num = VarType::number();
    const VarType obj = VarType::object();
    const VarType str_arr = VarType::array_of(ScalarType::String);
    const VarType obj_arr = VarType::array_of(ScalarType::Object);
    const VarType file = VarType::file();

    add({.kind = NodeKind::Start,
         .primary_params = {{"variables", obj_arr, true}},
         .output_vars = {},
         .dynamic_outputs = true,
         .port_rule = PortRule::Fixed,
         .fixed_ports = 1,
         .accepts_inbound = false,
         .summary = "Workflow entry; declares the typed input variables."});

    add({.kind = NodeKind::End,
         .primary_params = {{"outputs", obj_arr, true}},
         .output_vars = {},
         .port_rule = PortRule::Fixed,
         .fixed_ports = 0,
         .summary = "Workflow exit; maps upstream values to named outputs."});

    add({.kind = NodeKind::Llm,
         .primary_params = {{"prompt", str, true}, {"system_prompt", str, false}},
         .output_vars = {{"text", str}},
         .model_binding = "qwen3-vl-plus",
         .summary = "Single LLM call; the prompt may embed variable references."});

    add({.kind = NodeKind::QuestionClassifier,
         .primary_params = {{"query", str, true}, {"classes", str_arr, true}},
         .output_vars = {{"class_name", str}},
         .port_rule = PortRule::PerClass,
         .model_binding = "qwen3-max",
         .summary = "Routes to one outbound port per declared class."});

    add({.kind = NodeKind::Code,
         .primary_params = {{"script", str, true}, {"outputs", obj_arr, false}},
         .output_vars = {{"result", str}},
         .dynamic_outputs = true,
         .summary = "Evaluates a script; outputs default to {result: string}."});

    add({.kind = NodeKind::DocumentExtractor,
         .primary_params = {{"file", str, true}},
         .output_vars = {{"text", str}},
         .summary = "Extracts plain text from an upstream file variable."});

    add({.kind = NodeKind::HttpRequest,
         .primary_params = {{"url", str, true},
                            {"method", str, false},
                            {"headers", obj, false},
                            {"body", str, false}},
         .output_vars = {{"body", str}, {"status_code", num}},
         .summary = "Performs an HTTP call; returns body text and status."});

    add({.kind = NodeKind::IfElse,
         .primary_params = {{"conditions", obj_arr, true}},
         .output_vars = {},
         .port_rule = PortRule::PerBranch,
         .summary = "n condition branches plus a final ELSE port."});

    add({.kind = NodeKind::ListOperator,
         .primary_params = {{"list", str, true}, {"operation", str, true}, {"count", num, false}},
         .output_vars = {{"result", str_arr}, {"first_record", str}, {"last_record", str}},
         .dynamic_outputs = true,
         .summary = "Transforms an upstream list (identity, limit, reverse, sort)."});

    add({.kind = NodeKind::ParameterExtractor,
         .primary_params = {{"input", str, true},
                            {"parameters", obj_arr, true},
                            {"instruction", str, false}},
         .output_vars = {},
         .dynamic_outputs = true,
         .model_binding = "qwen3-max",
         .summary = "Extracts declared typed parameters from an input value."});

    add({.kind = NodeKind::TemplateTransform,
         .primary_params = {{"template", str, true}},
         .output_vars = {{"output", str}},
         .summary = "Renders a text template with variable references."});

    add({.kind = NodeKind::VariableAggregator,
         .primary_params = {{"variables", str_arr, true}},
         .output_vars = {{"output", str}},
         .dynamic_outputs = true,
         .summary = "Selects the first available input in declared order."});

    add({.kind = NodeKind::Iteration,
         .primary_params = {{"input", str, true}, {"output", str, true}},
         .output_vars = {{"output", str_arr}},
         .dynamic_outputs = true,
         .container_rule = ContainerRule::Container,
         .summary = "Maps its contained sub-workflow over an input list."});

    add({.kind = NodeKind::IterationStart,
         .primary_params = {},
         .output_vars = {},
         .accepts_inbound = false,
         .container_rule = ContainerRule::ContainerEntry,
         .summary = "Entry marker inside an iteration; contained, never connected."});

    add({.kind = NodeKind::TextToSpeech,
         .primary_params = {{"text", str, true}, {"voice", str, false}},
         .output_vars = {{"file", file}},
         .model_binding = "gpt-4o-mini-tts",
         .summary = "Synthesizes speech audio (.mp3) from text."});

    add({.kind = NodeKind::TextToImage,
         .primary_params = {{"prompt", str, true}, {"size", str, false}},
         .output_vars = {{"file", file}},
         .model_binding = "z-image-turbo",
         .summary = "Generates an image (.png) from a prompt."});

    add({.kind = NodeKind::MermaidConverter,
         .primary_params = {{"code", str, true}, {"format", str, false}},
         .output_vars = {{"file", file}},
         .summary = "Renders mermaid source to a diagram file (.png or .svg)."});

    add({.kind = NodeKind::MarkdownExporter,
         .primary_params = {{"markdown", str, true}, {"format", str, false}},
         .output_vars = {{"file", file}},
         .summary = "Exports markdown to a document file (.md/.pdf/.docx/.html)."});

    add({.kind = NodeKind::GoogleSearch,
         .primary_params = {{"query", str, true}, {"num_results", num, false}},
         .output_vars = {{"result", str}},
         .summary = "Web search; returns a text digest of results."});

    add({.kind = NodeKind::Echarts,
         .primary_params = {{"data", str, true}, {"chart_type", str, false}, {"title", str, false}},
         .output_vars = {{"result", str}},
         .summary = "Builds a chart config from tabular data."});

    for (const auto& s : specs_) token_index_[kind_id(s.kind)] = s.kind;
    token_index_[kTemplateAlias] = NodeKind::TemplateTransform;
}

const NodeSpec* Catalog::find(std::string_view kind_token) const {
    auto it = token_index_.find(to_lower(trim(kind_token)));
    if (it == token_index_.end()) return nullptr;
    return &spec(it->second);
}

const NodeSpec& Catalog::lookup(std::string_view kind_token) const {
    const NodeSpec* s = find(kind_token);
    if (!s) throw UnknownKindError(std::string(kind_token));
    return *s;
}

const NodeSpec& Catalog::spec(NodeKind kind) const {
    return specs_[static_cast<std::size_t>(kind)];
}

std::string Catalog::canonical_kind_id(std::string_view kind_token) const {
    return kind_id(lookup(kind_token).kind);
}

int Catalog::outbound_port_count(const NodeSpec& spec, const json& params) const {
    switch (spec.port_rule) {
        case PortRule::Fixed:
            return spec.fixed_ports;
        case PortRule::PerBranch: {
            auto it = params.find("conditions");
            if (it == params.end() || !it->is_array())
                throw MissingBranchSpecError(kind_id(spec.kind), "conditions");
            return static_cast<int>(it->size()) + 1;  // last port is ELSE
        }
        case PortRule::PerClass: {
            auto it = params.find("classes");
            if (it == params.end() || !it->is_array())
                throw MissingBranchSpecError(kind_id(spec.kind), "classes");
            return static_cast<int>(it->size());
        }
    }
    return spec.fixed_ports;
}

namespace {

bool json_matches(const VarType& t, const json& v) {
    if (t.is_array) return v.is_array();
    switch (t.elem) {
        case ScalarType::String: return v.is_string();
        case ScalarType::Number: return v.is_number();
        case ScalarType::Boolean: return v.is_boolean();
        case ScalarType::Object: return v.is_object();
        case ScalarType::File: return v.is_string();  // file params are var-ref tokens
    }
    return false;
}

class Checker {
public:
    explicit Checker(std::vector<ParamViolation>& out) : out_(out) {}

    void missing(const std::string& key, std::string detail = {}) {
        out_.push_back({ViolationKind::MissingRequired, key, std::move(detail)});
    }
    void unknown(const std::string& key) {
        out_.push_back({ViolationKind::UnknownKey, key, {}});
    }
    void type(const std::string& key, std::string detail) {
        out_.push_back({ViolationKind::TypeMismatch, key, std::move(detail)});
    }
    void value(const std::string& key, std::string detail) {
        out_.push_back({ViolationKind::InvalidValue, key, std::move(detail)});
    }

    // Validates a [{name, type}, ...] declaration list against an allowed type set.
    void declared_vars(const json& params, const std::string& key,
                       const std::set<std::string>& allowed_types, bool allow_extra_key,
                       const std::string& extra_key = {}) {
        auto it = params.find(key);
        if (it == params.end() || !it->is_array()) return;
        std::set<std::string> names;
        for (std::size_t i = 0; i < it->size(); ++i) {
            const json& entry = (*it)[i];
            std::string at = key + "[" + std::to_string(i) + "]";
            if (!entry.is_object()) {
                type(at, "expected an object with name and type");
                continue;
            }
            for (const auto& [k, v] : entry.items()) {
                (void)v;
                if (k != "name" && k != "type" && !(allow_extra_key && k == extra_key))
                    unknown(at + "." + k);
            }
            if (!entry.contains("name") || !entry["name"].is_string() ||
                entry["name"].get<std::string>().empty()) {
                value(at + ".name", "a non-empty string name is required");
                continue;
            }
            std::string name = entry["name"].get<std::string>();
            if (!names.insert(name).second) value(at + ".name", "duplicate name '" + name + "'");
            if (!entry.contains("type") || !entry["type"].is_string()) {
                value(at + ".type", "a type string is required");
                continue;
            }
            std::string ty = entry["type"].get<std::string>();
            if (!VarType::parse(ty)) {
                value(at + ".type", "unknown type '" + ty + "'");
            } else if (!allowed_types.empty() && !allowed_types.count(ty)) {
                value(at + ".type", "type '" + ty + "' not supported here");
            }
        }
    }

    void require_token(const json& params, const std::string& key) {
        auto it = params.find(key);
        if (it == params.end() || !it->is_string()) return;
        if (!is_pure_var_ref(it->get<std::string>()))
            value(key, "expected a single {{#node.var#}} reference");
    }

private:
    std::vector<ParamViolation>& out_;
};

const std::set<std::string> kStartVarTypes = {"string", "number", "boolean", "file",
                                              "array[file]"};
const std::set<std::string> kCodeOutputTypes = {"string", "number",        "boolean",
                                                "object", "array[string]", "array[number]",
                                                "array[object]"};
const std::set<std::string> kExtractorTypes = {"string", "number",        "boolean",
                                               "object", "array[string]", "array[number]",
                                               "array[object]"};
const std::set<std::string> kNumberOps = {"=", "!=", "<", "<=", ">", ">="};
const std::set<std::string> kStringOps = {"equals", "contains", "starts-with", "is-empty",
                                          "not-empty"};
const std::set<std::string> kHttpMethods = {"GET", "POST", "PUT", "DELETE", "PATCH", "HEAD"};
const std::set<std::string> kListOps = {"identity", "limit", "reverse", "sort"};
const std::set<std::string> kMermaidFormats = {"png", "svg"};
const std::set<std::string> kExportFormats = {"md", "pdf", "docx", "html"};
const std::set<std::string> kChartTypes = {"bar", "line", "pie"};

bool needs_right_operand(const std::string& op) {
    return op != "is-empty" && op != "not-empty";
}

}  // namespace

std::vector<ParamViolation> Catalog::validate_params(const NodeSpec& spec,
                                                     const json& params) const {
    std::vector<ParamViolation> out;
    Checker check(out);

    if (!params.is_object()) {
        check.type("params", "node params must be a JSON object");
        return out;
    }

    for (const auto& p : spec.primary_params) {
        auto it = params.find(p.name);
        if (it == params.end()) {
            if (p.required) check.missing(p.name);
            continue;
        }
        if (!json_matches(p.type, *it))
            check.type(p.name, "expected " + p.type.to_string());
    }
    for (const auto& [key, value] : params.items()) {
        (void)value;
        bool known = std::any_of(spec.primary_params.begin(), spec.primary_params.end(),
                                 [&](const ParamSpec& p) { return p.name == key; });
        if (!known) check.unknown(key);
    }

    switch (spec.kind) {
        case NodeKind::Start:
            check.declared_vars(params, "variables", kStartVarTypes, false);
            break;
        case NodeKind::End: {
            auto it = params.find("outputs");
            if (it == params.end() || !it->is_array()) break;
            std::set<std::string> names;
            for (std::size_t i = 0; i < it->size(); ++i) {
                const json& entry = (*it)[i];
                std::string at = "outputs[" + std::to_string(i) + "]";
                if (!entry.is_object()) {
                    check.type(at, "expected an object with name and value");
                    continue;
                }
                for (const auto& [k, v] : entry.items()) {
                    (void)v;
                    if (k != "name" && k != "value") check.unknown(at + "." + k);
                }
                if (!entry.contains("name") || !entry["name"].is_string() ||
                    entry["name"].get<std::string>().empty()) {
                    check.value(at + ".name", "a non-empty string name is required");
                    continue;
                }
                if (!names.insert(entry["name"].get<std::string>()).second)
                    check.value(at + ".name", "duplicate output name");
                if (!entry.contains("value") || !entry["value"].is_string() ||
                    !is_pure_var_ref(entry["value"].get<std::string>()))
                    check.value(at + ".value", "expected a single {{#node.var#}} reference");
            }
            break;
        }
        case NodeKind::Llm: {
            auto it = params.find("prompt");
            if (it != params.end() && it->is_string() && it->get<std::string>().empty())
                check.value("prompt", "prompt must not be empty");
            break;
        }
        case NodeKind::QuestionClassifier: {
            check.require_token(params, "query");
            auto it = params.find("classes");
            if (it != params.end() && it->is_array()) {
                if (it->empty()) check.value("classes", "at least one class is required");
                std::set<std::string> seen;
                for (std::size_t i = 0; i < it->size(); ++i) {
                    if (!(*it)[i].is_string() || (*it)[i].get<std::string>().empty()) {
                        check.value("classes[" + std::to_string(i) + "]",
                                    "class labels must be non-empty strings");
                    } else if (!seen.insert((*it)[i].get<std::string>()).second) {
                        check.value("classes[" + std::to_string(i) + "]", "duplicate class label");
                    }
                }
            }
            break;
        }
        case NodeKind::Code: {
            auto it = params.find("script");
            if (it != params.end() && it->is_string() && it->get<std::string>().empty())
                check.value("script", "script must not be empty");
            check.declared_vars(params, "outputs", kCodeOutputTypes, false);
            break;
        }
        case NodeKind::DocumentExtractor:
            check.require_token(params, "file");
            break;
        case NodeKind::HttpRequest: {
            auto it = params.find("url");
            if (it != params.end() && it->is_string() && it->get<std::string>().empty())
                check.value("url", "url must not be empty");
            auto m = params.find("method");
            if (m != params.end() && m->is_string() &&
                !kHttpMethods.count(to_upper_copy(m->get<std::string>())))
                check.value("method", "unsupported method '" + m->get<std::string>() + "'");
            auto h = params.find("headers");
            if (h != params.end() && h->is_object()) {
                for (const auto& [k, v] : h->items()) {
                    if (!v.is_string())
                        check.value("headers." + k, "header values must be strings");
                }
            }
            break;
        }
        case NodeKind::IfElse: {
            auto it = params.find("conditions");
            if (it == params.end() || !it->is_array()) break;
            if (it->empty()) check.value("conditions", "at least one branch is required");
            for (std::size_t i = 0; i < it->size(); ++i) {
                const json& branch = (*it)[i];
                std::string at = "conditions[" + std::to_string(i) + "]";
                if (!branch.is_object()) {
                    check.type(at, "expected a branch object");
                    continue;
                }
                for (const auto& [k, v] : branch.items()) {
                    (void)v;
                    if (k != "operator" && k != "rules") check.unknown(at + "." + k);
                }
                if (branch.contains("operator")) {
                    const json& op = branch["operator"];
                    if (!op.is_string() ||
                        (op.get<std::string>() != "and" && op.get<std::string>() != "or"))
                        check.value(at + ".operator", "expected \"and\" or \"or\"");
                }
                if (!branch.contains("rules") || !branch["rules"].is_array() ||
                    branch["rules"].empty()) {
                    check.value(at + ".rules", "a non-empty rules array is required");
                    continue;
                }
                const json& rules = branch["rules"];
                for (std::size_t r = 0; r < rules.size(); ++r) {
                    const json& rule = rules[r];
                    std::string rat = at + ".rules[" + std::to_string(r) + "]";
                    if (!rule.is_object()) {
                        check.type(rat, "expected a rule object");
                        continue;
                    }
                    for (const auto& [k, v] : rule.items()) {
                        (void)v;
                        if (k != "left" && k != "op" && k != "right") check.unknown(rat + "." + k);
                    }
                    if (!rule.contains("left") || !rule["left"].is_string() ||
                        !is_pure_var_ref(rule["left"].get<std::string>()))
                        check.value(rat + ".left", "expected a single {{#node.var#}} reference");
                    if (!rule.contains("op") || !rule["op"].is_string()) {
                        check.value(rat + ".op", "a comparator is required");
                        continue;
                    }
                    std::string op = normalize_comparator(rule["op"].get<std::string>());
                    if (!kNumberOps.count(op) && !kStringOps.count(op))
                        check.value(rat + ".op", "unknown comparator '" + op + "'");
                    bool has_right = rule.contains("right");
                    if (needs_right_operand(op) && !has_right)
                        check.value(rat + ".right", "comparator '" + op + "' needs a right operand");
                    if (has_right && !rule["right"].is_string() && !rule["right"].is_number() &&
                        !rule["right"].is_boolean())
                        check.type(rat + ".right", "expected a string, number, or boolean");
                }
            }
            break;
        }
        case NodeKind::ListOperator: {
            check.require_token(params, "list");
            auto op = params.find("operation");
            std::string op_name;
            if (op != params.end() && op->is_string()) {
                op_name = op->get<std::string>();
                if (!kListOps.count(op_name))
                    check.value("operation", "unknown operation '" + op_name + "'");
            }
            auto count = params.find("count");
            if (op_name == "limit") {
                if (count == params.end())
                    check.missing("count", "limit needs a count");
                else if (count->is_number() &&
                         (count->get<double>() < 1 ||
                          count->get<double>() != static_cast<double>(count->get<long long>())))
                    check.value("count", "count must be a positive integer");
            } else if (count != params.end() && !op_name.empty()) {
                check.value("count", "count is only valid with the limit operation");
            }
            break;
        }
        case NodeKind::ParameterExtractor:
            check.require_token(params, "input");
            check.declared_vars(params, "parameters", kExtractorTypes, false);
            if (params.contains("parameters") && params["parameters"].is_array() &&
                params["parameters"].empty())
                check.value("parameters", "at least one parameter is required");
            break;
        case NodeKind::TemplateTransform:
            break;
        case NodeKind::VariableAggregator: {
            auto it = params.find("variables");
            if (it == params.end() || !it->is_array()) break;
            if (it->empty()) check.value("variables", "at least one input is required");
            for (std::size_t i = 0; i < it->size(); ++i) {
                if (!(*it)[i].is_string() || !is_pure_var_ref((*it)[i].get<std::string>()))
                    check.value("variables[" + std::to_string(i) + "]",
                                "expected a single {{#node.var#}} reference");
            }
            break;
        }
        case NodeKind::Iteration:
            check.require_token(params, "input");
            check.require_token(params, "output");
            break;
        case NodeKind::IterationStart:
            break;
        case NodeKind::TextToSpeech:
            break;
        case NodeKind::TextToImage: {
            auto it = params.find("size");
            if (it != params.end() && it->is_string()) {
                const std::string& s = it->get_ref<const std::string&>();
                if (s != "1024x1024" && s != "768x1024" && s != "1024x768")
                    check.value("size", "unsupported size '" + s + "'");
            }
            break;
        }
        case NodeKind::MermaidConverter: {
            auto it = params.find("format");
            if (it != params.end() && it->is_string() &&
                !kMermaidFormats.count(it->get<std::string>()))
                check.value("format", "expected png or svg");
            break;
        }
        case NodeKind::MarkdownExporter: {
            auto it = params.find("format");
            if (it != params.end() && it->is_string() &&
                !kExportFormats.count(it->get<std::string>()))
                check.value("format", "expected one of md, pdf, docx, html");
            break;
        }
        case NodeKind::GoogleSearch: {
            auto it = params.find("num_results");
            if (it != params.end() && it->is_number()) {
                double v = it->get<double>();
                if (v < 1 || v > 50 || v != static_cast<double>(static_cast<long long>(v)))
                    check.value("num_results", "expected an integer in [1, 50]");
            }
            break;
        }
        case NodeKind::Echarts: {
            auto it = params.find("chart_type");
            if (it != params.end() && it->is_string() &&
                !kChartTypes.count(it->get<std::string>()))
                check.value("chart_type", "expected one of bar, line, pie");
            break;
        }
    }

    return out;
}

nlohmann::json Catalog::canonical_params(const NodeSpec& spec, const json& params) const {
    json out = params.is_object() ? params : json::object();

    auto set_default = [&](const char* key, json value) {
        if (!out.contains(key)) out[key] = std::move(value);
    };

    switch (spec.kind) {
        case NodeKind::Llm:
            set_default("system_prompt", "");
            break;
        case NodeKind::Code: {
            set_default("outputs", json::array({json{{"name", "result"}, {"type", "string"}}}));
            if (out["outputs"].is_array()) {
                std::sort(out["outputs"].begin(), out["outputs"].end(),
                          [](const json& a, const json& b) {
                              return a.value("name", "") < b.value("name", "");
                          });
            }
            break;
        }
        case NodeKind::HttpRequest: {
            set_default("method", "GET");
            set_default("headers", json::object());
            set_default("body", "");
            if (out.contains("method") && out["method"].is_string())
                out["method"] = to_upper_copy(out["method"].get<std::string>());
            break;
        }
        case NodeKind::IfElse: {
            if (out.contains("conditions") && out["conditions"].is_array()) {
                for (auto& branch : out["conditions"]) {
                    if (!branch.is_object()) continue;
                    if (!branch.contains("operator")) branch["operator"] = "and";
                    if (branch.contains("rules") && branch["rules"].is_array()) {
                        for (auto& rule : branch["rules"]) {
                            if (rule.is_object() && rule.contains("right") &&
                                rule["right"].is_number())
                                rule["right"] = format_number(rule["right"].get<double>());
                            if (rule.is_object() && rule.contains("right") &&
                                rule["right"].is_boolean())
                                rule["right"] = rule["right"].get<bool>() ? "true" : "false";
                            if (rule.is_object() && rule.contains("op") &&
                                rule["op"].is_string())
                                rule["op"] = normalize_comparator(rule["op"].get<std::string>());
                        }
                    }
                }
            }
            break;
        }
        case NodeKind::ParameterExtractor:
            set_default("instruction", "");
            break;
        case NodeKind::TextToSpeech:
            set_default("voice", "alloy");
            break;
        case NodeKind::TextToImage:
            set_default("size", "1024x1024");
            break;
        case NodeKind::MermaidConverter:
            set_default("format", "png");
            break;
        case NodeKind::MarkdownExporter:
            set_default("format", "md");
            break;
        case NodeKind::GoogleSearch:
            set_default("num_results", 5);
            break;
        case NodeKind::Echarts:
            set_default("chart_type", "bar");
            set_default("title", "");
            break;
        default:
            break;
    }
    return out;
}

json Catalog::to_json() const {
    json records = json::array();
    for (const auto& s : specs_) {
        json params = json::array();
        for (const auto& p : s.primary_params)
            params.push_back({{"name", p.name}, {"type", p.type.to_string()},
                              {"required", p.required}});
        json outputs = json::array();
        for (const auto& o : s.output_vars)
            outputs.push_back({{"name", o.name}, {"type", o.type.to_string()}});
        std::string port_rule;
        switch (s.port_rule) {
            case PortRule::Fixed:
                port_rule = "fixed(" + std::to_string(s.fixed_ports) + ")";
                break;
            case PortRule::PerBranch: port_rule = "per-branch"; break;
            case PortRule::PerClass: port_rule = "per-class"; break;
        }
        std::string container;
        switch (s.container_rule) {
            case ContainerRule::Plain: container = "plain"; break;
            case ContainerRule::Container: container = "container"; break;
            case ContainerRule::ContainerEntry: container = "container-entry"; break;
        }
        json rec = {{"kind", kind_id(s.kind)},
                    {"summary", s.summary},
                    {"primary_params", params},
                    {"output_vars", outputs},
                    {"dynamic_outputs", s.dynamic_outputs},
                    {"port_rule", port_rule},
                    {"accepts_inbound", s.accepts_inbound},
                    {"container_rule", container}};
        if (!s.model_binding.empty()) rec["model"] = s.model_binding;
        records.push_back(std::move(rec));
    }
    return records;
}

const Catalog& default_catalog() {
    static const Catalog catalog;
    return catalog;
}

std::optional<VarRefToken> parse_var_ref(std::string_view text) {
    if (text.size() < 8 || text.substr(0, 3) != "{{#" ||
        text.substr(text.size() - 3) != "#}}")
        return std::nullopt;
    std::string_view inner = text.substr(3, text.size() - 6);
    auto dot = inner.find('.');
    if (dot == std::string_view::npos || dot == 0 || dot + 1 >= inner.size())
        return std::nullopt;
    std::string_view node = inner.substr(0, dot);
    std::string_view var = inner.substr(dot + 1);
    if (node.find_first_of("{}#\n") != std::string_view::npos ||
        var.find_first_of("{}#\n.") != std::string_view::npos)
        return std::nullopt;
    return VarRefToken{std::string(node), std::string(var)};
}

bool is_pure_var_ref(std::string_view text) {
    return parse_var_ref(text).has_value();
}

std::string normalize_comparator(std::string_view op) {
    std::string s(op);
    if (s == "≠") return "!=";
    if (s == "≤") return "<=";
    if (s == "≥") return ">=";
    if (s == "==") return "=";
    return s;
}

std::vector<VarRefToken> find_var_refs(std::string_view text) {
    std::vector<VarRefToken> refs;
    std::size_t pos = 0;
    while (true) {
        auto open = text.find("{{#", pos);
        if (open == std::string_view::npos) break;
        auto close = text.find("#}}", open + 3);
        if (close == std::string_view::npos) break;
        if (auto ref = parse_var_ref(text.substr(open, close + 3 - open))) {
            refs.push_back(*ref);
            pos = close + 3;
        } else {
            pos = open + 3;
        }
    }
    return refs;
}

}  // namespace flowkit
