#include "flowkit/yaml_emitter.hpp"

#include <algorithm>
#include <set>

#include <yaml-cpp/yaml.h>

#include "flowkit/util.hpp"

namespace flowkit {

using ordered = nlohmann::ordered_json;
using nlohmann::json;

namespace {

constexpr const char* kDslVersion = "0.1.5";

// ---------------------------------------------------------------------------
// Deterministic YAML writer for the emitted document model. Strings that are
// not plainly safe are double-quoted with JSON-style escapes.
// ---------------------------------------------------------------------------

bool plain_safe(const std::string& s) {
    if (s.empty() || s.size() > 80) return false;
    if (s.front() == ' ' || s.back() == ' ') return false;
    static const std::set<std::string> reserved = {"true", "false", "null", "yes", "no",
                                                   "on",   "off",   "~",    "Null"};
    if (reserved.count(to_lower(s))) return false;
    bool digitish = true;
    for (char c : s) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                  c == '_' || c == '-' || c == '.' || c == '/' || c == ' ';
        if (!ok) return false;
        if (!((c >= '0' && c <= '9') || c == '.' || c == '-' || c == '+')) digitish = false;
    }
    if (digitish) return false;  // would parse as a number
    if (s.front() == '-') return false;
    return true;
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (unsigned char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (c < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\x%02x", c);
                    out += buf;
                } else {
                    out += static_cast<char>(c);
                }
        }
    }
    out += "\"";
    return out;
}

std::string scalar_text(const ordered& v) {
    if (v.is_string()) {
        const auto& s = v.get_ref<const std::string&>();
        return plain_safe(s) ? s : quote(s);
    }
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return format_number(v.get<double>());
    return "null";
}

void write_yaml(const ordered& v, std::string& out, int indent, bool inline_first) {
    std::string pad(static_cast<std::size_t>(indent), ' ');
    if (v.is_object()) {
        if (v.empty()) {
            out += " {}\n";
            return;
        }
        bool first = true;
        for (const auto& [key, value] : v.items()) {
            if (first && inline_first) {
                // key lands on the "- " line opened by the caller
                out += key + ":";
            } else {
                out += pad + key + ":";
            }
            first = false;
            if (value.is_object() || value.is_array()) {
                if (value.empty()) {
                    out += value.is_object() ? " {}\n" : " []\n";
                } else {
                    out += "\n";
                    write_yaml(value, out, indent + 2, false);
                }
            } else {
                out += " " + scalar_text(value) + "\n";
            }
        }
        return;
    }
    if (v.is_array()) {
        if (v.empty()) {
            out += " []\n";
            return;
        }
        for (const auto& item : v) {
            out += pad + "-";
            if (item.is_object() && !item.empty()) {
                out += " ";
                write_yaml(item, out, indent + 2, true);
            } else if (item.is_array() && !item.empty()) {
                out += "\n";
                write_yaml(item, out, indent + 2, false);
            } else if (item.is_object() || item.is_array()) {
                out += item.is_object() ? " {}\n" : " []\n";
            } else {
                out += " " + scalar_text(item) + "\n";
            }
        }
        return;
    }
    out += pad + scalar_text(v) + "\n";
}

std::string document_to_yaml(const ordered& doc) {
    std::string out;
    write_yaml(doc, out, 0, false);
    return out;
}

// ---------------------------------------------------------------------------
// Pinned platform mapping (Dify 1.9.2 shapes; extension kinds pin one plugin
// set via the tool table below).
// ---------------------------------------------------------------------------

struct ToolBinding {
    NodeKind kind;
    const char* provider_id;
    const char* provider_name;
    const char* tool_name;
    const char* tool_label;
    std::vector<const char*> parameter_keys;      // tool_parameters (mixed text)
    std::vector<const char*> configuration_keys;  // tool_configurations (constants)
};

const std::vector<ToolBinding>& tool_bindings() {
    static const std::vector<ToolBinding> bindings = {
        {NodeKind::GoogleSearch, "langgenius/google/google", "google", "google_search",
         "GoogleSearch", {"query"}, {"num_results"}},
        {NodeKind::TextToSpeech, "langgenius/openai_tts/openai_tts", "openai_tts",
         "text_to_speech", "TextToSpeech", {"text"}, {"voice"}},
        {NodeKind::TextToImage, "langgenius/zimage/zimage", "zimage", "text_to_image",
         "TextToImage", {"prompt"}, {"size"}},
        {NodeKind::MermaidConverter, "langgenius/mermaid_converter/mermaid_converter",
         "mermaid_converter", "convert", "MermaidConverter", {"code"}, {"format"}},
        {NodeKind::MarkdownExporter, "langgenius/markdown_exporter/markdown_exporter",
         "markdown_exporter", "export", "MarkdownExporter", {"markdown"}, {"format"}},
        {NodeKind::Echarts, "langgenius/echarts/echarts", "echarts", "render", "Echarts",
         {"data", "title"}, {"chart_type"}},
    };
    return bindings;
}

const ToolBinding* tool_binding_for(NodeKind kind) {
    for (const auto& b : tool_bindings())
        if (b.kind == kind) return &b;
    return nullptr;
}

const ToolBinding* tool_binding_by_name(const std::string& provider_id,
                                        const std::string& tool_name) {
    for (const auto& b : tool_bindings())
        if (provider_id == b.provider_id && tool_name == b.tool_name) return &b;
    return nullptr;
}

std::string dify_start_type(const VarType& t) {
    if (t == VarType::string()) return "paragraph";
    if (t == VarType::number()) return "number";
    if (t == VarType::boolean()) return "select";
    if (t == VarType::file()) return "file";
    if (t == VarType::array_of(ScalarType::File)) return "file-list";
    return "paragraph";
}

std::optional<VarType> start_type_from_dify(const std::string& s) {
    if (s == "paragraph" || s == "text-input") return VarType::string();
    if (s == "number") return VarType::number();
    if (s == "select") return VarType::boolean();
    if (s == "file") return VarType::file();
    if (s == "file-list") return VarType::array_of(ScalarType::File);
    return std::nullopt;
}

ordered selector(const VarRefToken& ref) {
    return ordered::array({ref.node_id, ref.var_name});
}

VarRefToken selector_to_ref(const json& sel, const std::string& where) {
    if (!sel.is_array() || sel.size() != 2)
        throw ImportError("lower", where + ": expected a [node, variable] selector");
    auto get = [&](const json& v) -> std::string {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_number_integer()) return std::to_string(v.get<long long>());
        throw ImportError("lower", where + ": selector entries must be strings");
    };
    return VarRefToken{get(sel[0]), get(sel[1])};
}

VarRefToken param_ref(const Node& node, const char* key) {
    auto ref = parse_var_ref(node.params.at(key).get<std::string>());
    if (!ref) throw EmitError(node.id, std::string("param '") + key + "' is not a reference");
    return *ref;
}

ordered model_payload(const NodeSpec& spec) {
    return ordered{{"completion_params", ordered{{"temperature", 0.7}}},
                   {"mode", "chat"},
                   {"name", spec.model_binding},
                   {"provider", "tongyi"}};
}

// Node data payload, keys in fixed (alphabetical) order per kind.
ordered node_data(const Node& node, const ValidatedGraph& graph, const Catalog& catalog) {
    const NodeSpec& spec = catalog.spec(node.kind);
    json params = catalog.canonical_params(spec, node.params);
    ordered data;

    switch (node.kind) {
        case NodeKind::Start: {
            ordered vars = ordered::array();
            for (const auto& v : params["variables"]) {
                auto type = VarType::parse(v["type"].get<std::string>());
                std::string name = v["name"].get<std::string>();
                ordered var{{"label", name}};
                if (!type) throw EmitError(node.id, "unsupported start variable type");
                if (*type == VarType::string()) var["max_length"] = 48000;
                var["options"] = *type == VarType::boolean()
                                     ? ordered::array({"true", "false"})
                                     : ordered::array();
                var["required"] = true;
                var["type"] = dify_start_type(*type);
                var["variable"] = name;
                vars.push_back(std::move(var));
            }
            data = ordered{{"desc", ""}, {"selected", false}, {"title", node.title},
                           {"type", "start"}, {"variables", vars}};
            break;
        }
        case NodeKind::End: {
            ordered outs = ordered::array();
            for (const auto& o : params["outputs"]) {
                auto ref = parse_var_ref(o["value"].get<std::string>());
                if (!ref) throw EmitError(node.id, "end output value is not a reference");
                outs.push_back(ordered{{"value_selector", selector(*ref)},
                                       {"variable", o["name"].get<std::string>()}});
            }
            data = ordered{{"desc", ""}, {"outputs", outs}, {"selected", false},
                           {"title", node.title}, {"type", "end"}};
            break;
        }
        case NodeKind::Llm: {
            ordered prompts = ordered::array();
            std::string system = params.value("system_prompt", std::string());
            if (!system.empty())
                prompts.push_back(ordered{{"role", "system"}, {"text", system}});
            prompts.push_back(
                ordered{{"role", "user"}, {"text", params["prompt"].get<std::string>()}});
            data = ordered{{"context", ordered{{"enabled", false},
                                               {"variable_selector", ordered::array()}}},
                           {"desc", ""},
                           {"model", model_payload(spec)},
                           {"prompt_template", prompts},
                           {"selected", false},
                           {"title", node.title},
                           {"type", "llm"},
                           {"variables", ordered::array()},
                           {"vision", ordered{{"enabled", false}}}};
            break;
        }
        case NodeKind::QuestionClassifier: {
            ordered classes = ordered::array();
            int i = 0;
            for (const auto& c : params["classes"])
                classes.push_back(
                    ordered{{"id", std::to_string(++i)}, {"name", c.get<std::string>()}});
            data = ordered{{"classes", classes},
                           {"desc", ""},
                           {"instructions", ""},
                           {"model", model_payload(spec)},
                           {"query_variable_selector", selector(param_ref(node, "query"))},
                           {"selected", false},
                           {"title", node.title},
                           {"topics", ordered::array()},
                           {"type", "question-classifier"}};
            break;
        }
        case NodeKind::Code: {
            ordered outs;
            std::vector<std::pair<std::string, std::string>> declared;
            for (const auto& o : params["outputs"])
                declared.emplace_back(o["name"].get<std::string>(),
                                      o["type"].get<std::string>());
            std::sort(declared.begin(), declared.end());
            for (const auto& [name, type] : declared)
                outs[name] = ordered{{"children", nullptr}, {"type", type}};
            data = ordered{{"code", params["script"].get<std::string>()},
                           {"code_language", "python3"},
                           {"desc", ""},
                           {"outputs", outs},
                           {"selected", false},
                           {"title", node.title},
                           {"type", "code"},
                           {"variables", ordered::array()}};
            break;
        }
        case NodeKind::DocumentExtractor:
            data = ordered{{"desc", ""},
                           {"is_array_file", false},
                           {"selected", false},
                           {"title", node.title},
                           {"type", "document-extractor"},
                           {"variable_selector", selector(param_ref(node, "file"))}};
            break;
        case NodeKind::HttpRequest: {
            std::string headers;
            for (const auto& [k, v] : params["headers"].items()) {
                if (!headers.empty()) headers += "\n";
                headers += k + ": " + v.get<std::string>();
            }
            std::string body = params.value("body", std::string());
            data = ordered{{"authorization", ordered{{"config", nullptr}, {"type", "no-auth"}}},
                           {"body", ordered{{"data", body},
                                            {"type", body.empty() ? "none" : "raw-text"}}},
                           {"desc", ""},
                           {"headers", headers},
                           {"method", to_lower(params["method"].get<std::string>())},
                           {"params", ""},
                           {"selected", false},
                           {"timeout", ordered{{"max_connect_timeout", 0},
                                               {"max_read_timeout", 0},
                                               {"max_write_timeout", 0}}},
                           {"title", node.title},
                           {"type", "http-request"},
                           {"url", params["url"].get<std::string>()},
                           {"variables", ordered::array()}};
            break;
        }
        case NodeKind::IfElse: {
            ordered cases = ordered::array();
            int case_no = 0;
            for (const auto& branch : params["conditions"]) {
                ++case_no;
                std::string case_id = "case_" + std::to_string(case_no);
                ordered conds = ordered::array();
                int cond_no = 0;
                for (const auto& rule : branch["rules"]) {
                    auto ref = parse_var_ref(rule["left"].get<std::string>());
                    if (!ref) throw EmitError(node.id, "condition left side is not a reference");
                    ordered cond{{"comparison_operator", rule["op"].get<std::string>()},
                                 {"id", case_id + "_" + std::to_string(++cond_no)},
                                 {"value", rule.contains("right")
                                               ? rule["right"].get<std::string>()
                                               : std::string()},
                                 {"variable_selector", selector(*ref)}};
                    conds.push_back(std::move(cond));
                }
                cases.push_back(ordered{{"case_id", case_id},
                                        {"conditions", conds},
                                        {"id", case_id},
                                        {"logical_operator",
                                         branch.value("operator", std::string("and"))}});
            }
            data = ordered{{"cases", cases}, {"desc", ""}, {"selected", false},
                           {"title", node.title}, {"type", "if-else"}};
            break;
        }
        case NodeKind::ListOperator: {
            std::string op = params["operation"].get<std::string>();
            auto elem = graph.output_type(node.id, "first_record");
            data = ordered{
                {"desc", ""},
                {"extract_by", ordered{{"enabled", false}, {"serial", "1"}}},
                {"filter_by", ordered{{"conditions", ordered::array()},
                                      {"enabled", false},
                                      {"logical_operator", "and"}}},
                {"item_var_type", elem ? elem->to_string() : "string"},
                {"limit", ordered{{"enabled", op == "limit"},
                                  {"size", op == "limit"
                                               ? static_cast<long long>(
                                                     params["count"].get<double>())
                                               : 10}}},
                {"order_by",
                 ordered{{"enabled", op == "sort" || op == "reverse"},
                         {"key", ""},
                         {"value", op == "reverse" ? "desc" : "asc"}}},
                {"selected", false},
                {"title", node.title},
                {"type", "list-operator"},
                {"variable", selector(param_ref(node, "list"))}};
            break;
        }
        case NodeKind::ParameterExtractor: {
            ordered parameters = ordered::array();
            for (const auto& p : params["parameters"])
                parameters.push_back(ordered{{"description", ""},
                                             {"name", p["name"].get<std::string>()},
                                             {"required", true},
                                             {"type", p["type"].get<std::string>()}});
            data = ordered{{"desc", ""},
                           {"instruction", params.value("instruction", std::string())},
                           {"model", model_payload(spec)},
                           {"parameters", parameters},
                           {"query", selector(param_ref(node, "input"))},
                           {"reasoning_mode", "prompt"},
                           {"selected", false},
                           {"title", node.title},
                           {"type", "parameter-extractor"}};
            break;
        }
        case NodeKind::TemplateTransform:
            data = ordered{{"desc", ""},
                           {"selected", false},
                           {"template", params["template"].get<std::string>()},
                           {"title", node.title},
                           {"type", "template-transform"},
                           {"variables", ordered::array()}};
            break;
        case NodeKind::VariableAggregator: {
            ordered vars = ordered::array();
            for (const auto& v : params["variables"]) {
                auto ref = parse_var_ref(v.get<std::string>());
                if (!ref)
                    throw EmitError(node.id, "aggregator entry is not a reference");
                vars.push_back(selector(*ref));
            }
            auto out_type = graph.output_type(node.id, "output");
            data = ordered{{"desc", ""},
                           {"output_type", out_type ? out_type->to_string() : "string"},
                           {"selected", false},
                           {"title", node.title},
                           {"type", "variable-aggregator"},
                           {"variables", vars}};
            break;
        }
        case NodeKind::Iteration: {
            auto out_type = graph.output_type(node.id, "output");
            data = ordered{{"desc", ""},
                           {"error_handle_mode", "terminated"},
                           {"is_parallel", false},
                           {"iterator_selector", selector(param_ref(node, "input"))},
                           {"output_selector", selector(param_ref(node, "output"))},
                           {"output_type", out_type ? out_type->to_string() : "array[string]"},
                           {"parallel_nums", 10},
                           {"selected", false},
                           {"start_node_id", graph.entry_of(node.id)},
                           {"title", node.title},
                           {"type", "iteration"}};
            break;
        }
        case NodeKind::IterationStart:
            data = ordered{{"desc", ""}, {"isInIteration", true}, {"title", node.title},
                           {"type", "iteration-start"}};
            break;
        default: {
            const ToolBinding* binding = tool_binding_for(node.kind);
            if (!binding) throw EmitError(node.id, "no platform encoding for this kind");
            ordered tool_params;
            for (const char* key : binding->parameter_keys) {
                std::string value =
                    params.contains(key) && params[key].is_string()
                        ? params[key].get<std::string>()
                        : std::string();
                tool_params[key] = ordered{{"type", "mixed"}, {"value", value}};
            }
            ordered tool_config;
            for (const char* key : binding->configuration_keys) {
                if (!params.contains(key)) continue;
                const json& v = params[key];
                if (v.is_number())
                    tool_config[key] = static_cast<long long>(v.get<double>());
                else
                    tool_config[key] = v.get<std::string>();
            }
            data = ordered{{"desc", ""},
                           {"is_team_authorization", true},
                           {"provider_id", binding->provider_id},
                           {"provider_name", binding->provider_name},
                           {"provider_type", "builtin"},
                           {"selected", false},
                           {"title", node.title},
                           {"tool_configurations", tool_config},
                           {"tool_label", binding->tool_label},
                           {"tool_name", binding->tool_name},
                           {"tool_parameters", tool_params},
                           {"type", "tool"}};
            break;
        }
    }
    return data;
}

struct Dimensions {
    long long width;
    long long height;
};

Dimensions node_dimensions(const Node& node) {
    switch (node.kind) {
        case NodeKind::Start:
        case NodeKind::End: return {244, 90};
        case NodeKind::Llm: return {244, 98};
        case NodeKind::QuestionClassifier: return {244, 130};
        case NodeKind::IfElse: return {244, 126};
        case NodeKind::IterationStart: return {44, 48};
        case NodeKind::VariableAggregator:
        case NodeKind::ListOperator: return {244, 102};
        default: return {244, 54};
    }
}

std::string source_handle(const Node& source, int port, const Catalog& catalog) {
    switch (source.kind) {
        case NodeKind::IfElse: {
            int branches = static_cast<int>(source.params["conditions"].size());
            if (port == branches) return "false";  // ELSE
            return "case_" + std::to_string(port + 1);
        }
        case NodeKind::QuestionClassifier:
            return std::to_string(port + 1);
        default:
            (void)catalog;
            return "source";
    }
}

int port_from_handle(const Node& source, const std::string& handle) {
    switch (source.kind) {
        case NodeKind::IfElse: {
            int branches = static_cast<int>(source.params["conditions"].size());
            if (handle == "false") return branches;
            if (handle.rfind("case_", 0) == 0) {
                try {
                    return std::stoi(handle.substr(5)) - 1;
                } catch (...) {
                }
            }
            throw ImportError("lower", "edge handle '" + handle + "' is not a known branch");
        }
        case NodeKind::QuestionClassifier:
            try {
                return std::stoi(handle) - 1;
            } catch (...) {
                throw ImportError("lower", "edge handle '" + handle + "' is not a class index");
            }
        default:
            if (handle != "source")
                throw ImportError("lower", "unexpected edge handle '" + handle + "'");
            return 0;
    }
}

}  // namespace

std::map<std::string, NodePosition> layout(const ValidatedGraph& graph) {
    std::map<std::string, NodePosition> positions;
    std::map<std::string, Dimensions> sizes;

    // Children first so iteration containers can size around them.
    auto place_scope = [&](const std::optional<std::string>& parent, long long x0, long long y0,
                           long long dx, long long dy, auto&& self) -> Dimensions {
        auto order = graph.scope_order(parent);
        std::map<std::string, int> depth;
        for (const auto& id : order) {
            int d = 0;
            for (const auto& e : graph.edges())
                if (e.target == id && depth.count(e.source)) d = std::max(d, depth[e.source] + 1);
            depth[id] = d;
        }
        std::map<int, int> layer_fill;
        long long max_x = 0, max_y = 0;
        for (const auto& id : order) {
            const Node& n = graph.node(id);
            Dimensions dim = node_dimensions(n);
            if (n.kind == NodeKind::Iteration) {
                Dimensions inner = self(std::optional<std::string>(id), 60, 80, 280, 110, self);
                dim = {std::max<long long>(inner.width + 60, 360),
                       std::max<long long>(inner.height + 80, 200)};
            }
            sizes[id] = dim;
            int d = depth[id];
            int slot = layer_fill[d]++;
            NodePosition pos{x0 + d * dx, y0 + slot * dy};
            positions[id] = pos;
            max_x = std::max(max_x, pos.x + dim.width);
            max_y = std::max(max_y, pos.y + dim.height);
        }
        return {max_x, max_y};
    };
    place_scope(std::nullopt, 80, 282, 320, 140, place_scope);

    // Guarantee injective absolute positions.
    auto absolute = [&](const std::string& id) {
        NodePosition p = positions[id];
        const Node& n = graph.node(id);
        if (n.parent_id) {
            NodePosition base = positions[*n.parent_id];
            p.x += base.x;
            p.y += base.y;
        }
        return p;
    };
    std::set<std::pair<long long, long long>> taken;
    for (const auto& id : graph.topo_order()) {
        NodePosition abs = absolute(id);
        while (taken.count({abs.x, abs.y})) {
            positions[id].y += 17;
            abs = absolute(id);
        }
        taken.insert({abs.x, abs.y});
    }
    return positions;
}

std::string emit(const ValidatedGraph& graph, const AppMeta& meta, const Catalog& catalog) {
    auto positions = layout(graph);

    ordered doc;
    doc["app"] = ordered{{"description", meta.description},
                         {"icon", "\xF0\x9F\xA4\x96"},
                         {"icon_background", "#FFEAD5"},
                         {"mode", "workflow"},
                         {"name", meta.name}};
    doc["kind"] = "app";
    doc["version"] = kDslVersion;

    ordered features{{"file_upload", ordered{{"enabled", false}}},
                     {"opening_statement", ""},
                     {"retriever_resource", ordered{{"enabled", false}}},
                     {"sensitive_word_avoidance", ordered{{"enabled", false}}},
                     {"speech_to_text", ordered{{"enabled", false}}},
                     {"suggested_questions", ordered::array()},
                     {"text_to_speech", ordered{{"enabled", false}}}};

    // Edges sorted canonically; ids derived from content for determinism.
    std::vector<RawEdge> edges = graph.edges();
    std::sort(edges.begin(), edges.end(), [](const RawEdge& a, const RawEdge& b) {
        if (a.source != b.source) return id_less(a.source, b.source);
        if (a.port != b.port) return a.port < b.port;
        return id_less(a.target, b.target);
    });

    ordered edges_json = ordered::array();
    for (const auto& e : edges) {
        const Node& src = graph.node(e.source);
        const Node& dst = graph.node(e.target);
        bool inside = src.parent_id.has_value();
        ordered data{{"isInIteration", inside}};
        if (inside) data["iteration_id"] = *src.parent_id;
        data["sourceType"] = kind_id(src.kind);
        data["targetType"] = kind_id(dst.kind);
        std::string id_seed = e.source + "|" + std::to_string(e.port) + "|" + e.target;
        edges_json.push_back(ordered{{"data", data},
                                     {"id", "edge-" + fnv1a64_hex(id_seed)},
                                     {"source", e.source},
                                     {"sourceHandle", source_handle(src, e.port, catalog)},
                                     {"target", e.target},
                                     {"targetHandle", "target"},
                                     {"type", "custom"},
                                     {"zIndex", inside ? 1002 : 0}});
    }

    ordered nodes_json = ordered::array();
    for (const auto& id : graph.topo_order()) {
        const Node& n = graph.node(id);
        Dimensions dim = node_dimensions(n);
        if (n.kind == NodeKind::Iteration) {
            // width/height were derived during layout from the children extent
            long long max_x = 360, max_y = 200;
            for (const Node* child : graph.children_of(id)) {
                Dimensions cd = node_dimensions(*child);
                max_x = std::max(max_x, positions[child->id].x + cd.width + 60);
                max_y = std::max(max_y, positions[child->id].y + cd.height + 80);
            }
            dim = {max_x, max_y};
        }
        NodePosition pos = positions[id];
        NodePosition abs = pos;
        if (n.parent_id) {
            abs.x += positions[*n.parent_id].x;
            abs.y += positions[*n.parent_id].y;
        }

        ordered rec{{"data", node_data(n, graph, catalog)}};
        if (n.parent_id) rec["extent"] = "parent";
        rec["height"] = dim.height;
        rec["id"] = n.id;
        if (n.parent_id) rec["parentId"] = *n.parent_id;
        rec["position"] = ordered{{"x", pos.x}, {"y", pos.y}};
        rec["positionAbsolute"] = ordered{{"x", abs.x}, {"y", abs.y}};
        rec["selected"] = false;
        rec["sourcePosition"] = "right";
        rec["targetPosition"] = "left";
        rec["type"] = n.kind == NodeKind::IterationStart ? "custom-iteration-start" : "custom";
        rec["width"] = dim.width;
        if (n.parent_id) rec["zIndex"] = 1002;
        nodes_json.push_back(std::move(rec));
    }

    doc["workflow"] = ordered{
        {"conversation_variables", ordered::array()},
        {"environment_variables", ordered::array()},
        {"features", features},
        {"graph", ordered{{"edges", edges_json},
                          {"nodes", nodes_json},
                          {"viewport", ordered{{"x", 0}, {"y", 0}, {"zoom", 1}}}}}};

    return document_to_yaml(doc);
}

namespace {

json yaml_to_json(const YAML::Node& node) {
    switch (node.Type()) {
        case YAML::NodeType::Null: return nullptr;
        case YAML::NodeType::Scalar: {
            const std::string& s = node.Scalar();
            if (node.Tag() == "!") return s;  // quoted: always a string
            if (s == "true") return true;
            if (s == "false") return false;
            if (s == "null" || s == "~") return nullptr;
            if (all_digits(s) || (s.size() > 1 && s[0] == '-' && all_digits(s.substr(1)))) {
                try {
                    return std::stoll(s);
                } catch (...) {
                }
            }
            if (s.find_first_not_of("0123456789+-.eE") == std::string::npos &&
                s.find_first_of("0123456789") != std::string::npos) {
                try {
                    std::size_t used = 0;
                    double d = std::stod(s, &used);
                    if (used == s.size()) return d;
                } catch (...) {
                }
            }
            return s;
        }
        case YAML::NodeType::Sequence: {
            json arr = json::array();
            for (const auto& item : node) arr.push_back(yaml_to_json(item));
            return arr;
        }
        case YAML::NodeType::Map: {
            json obj = json::object();
            for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
            return obj;
        }
        default: return nullptr;
    }
}

std::string require_string(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_string())
        throw ImportError("lower", where + ": missing string field '" + key + "'");
    return j[key].get<std::string>();
}

json raise_params(const json& data, const std::string& type, const std::string& where) {
    json params = json::object();
    if (type == "start") {
        json vars = json::array();
        for (const auto& v : data.value("variables", json::array())) {
            auto t = start_type_from_dify(require_string(v, "type", where));
            if (!t) throw ImportError("lower", where + ": unknown start variable type");
            vars.push_back({{"name", require_string(v, "variable", where)},
                            {"type", t->to_string()}});
        }
        params["variables"] = vars;
    } else if (type == "end") {
        json outs = json::array();
        for (const auto& o : data.value("outputs", json::array())) {
            VarRefToken ref = selector_to_ref(o.value("value_selector", json::array()), where);
            outs.push_back({{"name", require_string(o, "variable", where)},
                            {"value", ref.render()}});
        }
        params["outputs"] = outs;
    } else if (type == "llm") {
        std::string prompt, system;
        for (const auto& p : data.value("prompt_template", json::array())) {
            std::string role = p.value("role", std::string());
            if (role == "system") system = p.value("text", std::string());
            if (role == "user") prompt = p.value("text", std::string());
        }
        params["prompt"] = prompt;
        params["system_prompt"] = system;
    } else if (type == "question-classifier") {
        json classes = json::array();
        for (const auto& c : data.value("classes", json::array()))
            classes.push_back(require_string(c, "name", where));
        params["classes"] = classes;
        params["query"] =
            selector_to_ref(data.value("query_variable_selector", json::array()), where)
                .render();
    } else if (type == "code") {
        params["script"] = data.value("code", std::string());
        json outs = json::array();
        if (data.contains("outputs"))
            for (const auto& [name, payload] : data["outputs"].items())
                outs.push_back({{"name", name},
                                {"type", payload.value("type", std::string("string"))}});
        params["outputs"] = outs;
    } else if (type == "document-extractor") {
        params["file"] =
            selector_to_ref(data.value("variable_selector", json::array()), where).render();
    } else if (type == "http-request") {
        params["url"] = data.value("url", std::string());
        params["method"] = to_upper_copy(data.value("method", std::string("get")));
        json headers = json::object();
        for (const auto& line : split(data.value("headers", std::string()), '\n')) {
            if (trim(line).empty()) continue;
            auto colon = line.find(':');
            if (colon == std::string::npos)
                throw ImportError("lower", where + ": malformed header line");
            headers[trim(line.substr(0, colon))] = trim(line.substr(colon + 1));
        }
        params["headers"] = headers;
        params["body"] = data.contains("body") && data["body"].is_object()
                             ? data["body"].value("data", std::string())
                             : std::string();
    } else if (type == "if-else") {
        json branches = json::array();
        for (const auto& c : data.value("cases", json::array())) {
            json rules = json::array();
            for (const auto& cond : c.value("conditions", json::array())) {
                std::string op = normalize_comparator(
                    require_string(cond, "comparison_operator", where));
                json rule = {{"left",
                              selector_to_ref(cond.value("variable_selector", json::array()),
                                              where)
                                  .render()},
                             {"op", op}};
                if (op != "is-empty" && op != "not-empty")
                    rule["right"] = cond.value("value", std::string());
                rules.push_back(std::move(rule));
            }
            branches.push_back(
                {{"operator", c.value("logical_operator", std::string("and"))},
                 {"rules", rules}});
        }
        params["conditions"] = branches;
    } else if (type == "list-operator") {
        params["list"] = selector_to_ref(data.value("variable", json::array()), where).render();
        std::string op = "identity";
        if (data.contains("limit") && data["limit"].value("enabled", false)) {
            op = "limit";
            params["count"] = data["limit"].value("size", 10);
        } else if (data.contains("order_by") && data["order_by"].value("enabled", false)) {
            op = data["order_by"].value("value", std::string("asc")) == "desc" ? "reverse"
                                                                               : "sort";
        }
        params["operation"] = op;
    } else if (type == "parameter-extractor") {
        json parameters = json::array();
        for (const auto& p : data.value("parameters", json::array()))
            parameters.push_back({{"name", require_string(p, "name", where)},
                                  {"type", require_string(p, "type", where)}});
        params["parameters"] = parameters;
        params["input"] = selector_to_ref(data.value("query", json::array()), where).render();
        params["instruction"] = data.value("instruction", std::string());
    } else if (type == "template-transform") {
        params["template"] = data.value("template", std::string());
    } else if (type == "variable-aggregator") {
        json vars = json::array();
        for (const auto& sel : data.value("variables", json::array()))
            vars.push_back(selector_to_ref(sel, where).render());
        params["variables"] = vars;
    } else if (type == "iteration") {
        params["input"] =
            selector_to_ref(data.value("iterator_selector", json::array()), where).render();
        params["output"] =
            selector_to_ref(data.value("output_selector", json::array()), where).render();
    } else if (type == "iteration-start") {
        // no params
    } else {
        throw ImportError("lower", where + ": unknown node payload type '" + type + "'");
    }
    return params;
}

}  // namespace

WorkflowDoc lower_platform_yaml(const std::string& yaml_text, const Catalog& catalog) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        throw ImportError("yaml-parse", e.what());
    }
    json doc = yaml_to_json(root);

    if (!doc.is_object() || doc.value("kind", std::string()) != "app")
        throw ImportError("schema", "document kind must be 'app'");
    if (!doc.contains("app") || doc["app"].value("mode", std::string()) != "workflow")
        throw ImportError("schema", "app mode must be 'workflow'");
    if (!doc.contains("workflow") || !doc["workflow"].contains("graph"))
        throw ImportError("schema", "workflow.graph is required");
    const json& g = doc["workflow"]["graph"];
    if (!g.contains("nodes") || !g["nodes"].is_array())
        throw ImportError("schema", "workflow.graph.nodes is required");
    if (!g.contains("edges") || !g["edges"].is_array())
        throw ImportError("schema", "workflow.graph.edges is required");

    WorkflowDoc out;
    std::map<std::string, const json*> node_payload;
    for (const auto& n : g["nodes"]) {
        std::string where = "node " + n.value("id", std::string("?"));
        if (!n.contains("id") || !n.contains("data"))
            throw ImportError("lower", where + ": id and data are required");
        const json& data = n["data"];
        std::string type = data.value("type", std::string());

        RawNode raw;
        raw.id = n["id"].is_string() ? n["id"].get<std::string>()
                                     : std::to_string(n["id"].get<long long>());
        if (type == "tool") {
            const ToolBinding* binding =
                tool_binding_by_name(data.value("provider_id", std::string()),
                                     data.value("tool_name", std::string()));
            if (!binding)
                throw ImportError("lower", where + ": unknown tool binding '" +
                                               data.value("provider_id", std::string()) + "/" +
                                               data.value("tool_name", std::string()) + "'");
            raw.type = kind_id(binding->kind);
            json params = json::object();
            const json tp = data.value("tool_parameters", json::object());
            for (const char* key : binding->parameter_keys)
                if (tp.contains(key)) {
                    if (tp[key].is_object())
                        params[key] = tp[key].value("value", std::string());
                    else
                        params[key] = tp[key];
                }
            const json& tc = data.value("tool_configurations", json::object());
            for (const char* key : binding->configuration_keys)
                if (tc.contains(key)) params[key] = tc[key];
            raw.params = params;
        } else {
            raw.type = type;
            raw.params = raise_params(data, type, where);
        }
        raw.title = data.value("title", raw.type);
        if (n.contains("parentId")) raw.parent_id = n["parentId"].get<std::string>();
        node_payload[raw.id] = &n;
        out.nodes_info.push_back(std::move(raw));
    }

    std::map<std::string, const RawNode*> by_id;
    for (const auto& n : out.nodes_info) by_id[n.id] = &n;

    for (const auto& e : g["edges"]) {
        std::string source = e.value("source", std::string());
        std::string target = e.value("target", std::string());
        if (source.empty() || target.empty())
            throw ImportError("lower", "edge is missing source or target");
        std::string handle = e.value("sourceHandle", std::string("source"));
        auto it = by_id.find(source);
        if (it == by_id.end())
            throw ImportError("lower", "edge source '" + source + "' has no node");
        Node probe;
        probe.id = it->second->id;
        const NodeSpec* spec = catalog.find(it->second->type);
        if (!spec) throw ImportError("lower", "edge source has unknown kind");
        probe.kind = spec->kind;
        probe.params = it->second->params;
        out.edges.push_back({source, port_from_handle(probe, handle), target});
    }
    return out;
}

ValidatedGraph import_check(const std::string& yaml_text, const Catalog& catalog) {
    WorkflowDoc doc = lower_platform_yaml(yaml_text, catalog);
    try {
        ValidatedGraph graph = build(doc, catalog);
        auto violations = resolve_vars(graph, catalog);
        if (!violations.empty())
            throw ImportError("resolve", violations.front().to_string() + " (and " +
                                              std::to_string(violations.size() - 1) + " more)");
        return graph;
    } catch (const BuildError& e) {
        throw ImportError("build", e.what());
    }
}

}  // namespace flowkit
