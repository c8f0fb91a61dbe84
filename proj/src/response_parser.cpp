#include "flowkit/response_parser.hpp"

#include <algorithm>

#include "flowkit/util.hpp"

namespace flowkit {

using nlohmann::json;

namespace {

std::optional<std::string> find_tag_body(const std::string& text, const std::string& name) {
    std::string open = "<" + name + ">";
    std::string close = "</" + name + ">";
    auto begin = text.find(open);
    if (begin == std::string::npos) return std::nullopt;
    auto end = text.find(close, begin + open.size());
    if (end == std::string::npos) return std::nullopt;
    return text.substr(begin + open.size(), end - begin - open.size());
}

std::vector<std::string> parse_selection_tokens(const std::string& body) {
    std::vector<std::string> tokens;
    for (const auto& line : split(body, '\n')) {
        for (const auto& piece : split(line, ',')) {
            std::string token = trim(piece);
            // tolerate list markers: "- llm", "* llm", "3. llm"
            while (!token.empty() && (token.front() == '-' || token.front() == '*'))
                token = trim(token.substr(1));
            std::size_t digits = 0;
            while (digits < token.size() && token[digits] >= '0' && token[digits] <= '9')
                ++digits;
            if (digits > 0 && digits < token.size() &&
                (token[digits] == '.' || token[digits] == ')'))
                token = trim(token.substr(digits + 1));
            if (!token.empty()) tokens.push_back(token);
        }
    }
    return tokens;
}

std::string node_path(std::size_t i, const char* field = nullptr) {
    std::string p = "nodes_info[" + std::to_string(i) + "]";
    if (field) p += std::string(".") + field;
    return p;
}

[[noreturn]] void schema_error(const std::string& path, const std::string& message) {
    throw ParseError(ParseError::Kind::SchemaViolation, path, message + " at " + path);
}

std::string id_from_json(const json& v, const std::string& path) {
    if (v.is_string()) {
        if (v.get<std::string>().empty()) schema_error(path, "node ids must be non-empty");
        return v.get<std::string>();
    }
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    schema_error(path, "expected a string id");
}

}  // namespace

ParsedResponse extract_sections(const std::string& response_text) {
    static const char* kTags[] = {"node_selection", "design_principle", "workflow"};
    for (const char* tag : kTags) {
        if (!find_tag_body(response_text, tag))
            throw ParseError(ParseError::Kind::MissingTag, tag,
                             std::string("missing or unbalanced <") + tag + "> section");
    }
    ParsedResponse out;
    out.node_selection = parse_selection_tokens(*find_tag_body(response_text, "node_selection"));
    out.design_principle = trim(*find_tag_body(response_text, "design_principle"));
    out.workflow_text = trim(*find_tag_body(response_text, "workflow"));
    return out;
}

std::string strip_code_fences(const std::string& text) {
    std::string body = trim(text);
    if (body.rfind("```", 0) != 0) return body;

    auto first_newline = body.find('\n');
    if (first_newline == std::string::npos) return "";  // fence line only
    body = body.substr(first_newline + 1);

    auto last_newline = body.find_last_of('\n');
    std::string last_line =
        last_newline == std::string::npos ? body : body.substr(last_newline + 1);
    if (trim(last_line) == "```")
        body = last_newline == std::string::npos ? "" : body.substr(0, last_newline);
    return trim(body);
}

WorkflowDoc decode_workflow(const std::string& workflow_text) {
    std::string text = strip_code_fences(workflow_text);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(ParseError::Kind::JsonSyntax, std::to_string(e.byte),
                         std::string("workflow JSON is not parsable: ") + e.what());
    }

    if (!doc.is_object()) schema_error("$", "workflow document must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        if (key != "nodes_info" && key != "edges") schema_error(key, "unexpected top-level key");
    }
    if (!doc.contains("nodes_info") || !doc["nodes_info"].is_array())
        schema_error("nodes_info", "a nodes_info array is required");
    if (!doc.contains("edges") || !doc["edges"].is_array())
        schema_error("edges", "an edges array is required");

    WorkflowDoc out;
    const json& nodes = doc["nodes_info"];
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const json& n = nodes[i];
        if (!n.is_object()) schema_error(node_path(i), "expected a node object");
        for (const auto& [key, value] : n.items()) {
            (void)value;
            if (key != "id" && key != "type" && key != "title" && key != "params" &&
                key != "parent_id")
                schema_error(node_path(i, key.c_str()), "unexpected node field");
        }
        RawNode node;
        if (!n.contains("id")) schema_error(node_path(i, "id"), "node id is required");
        node.id = id_from_json(n["id"], node_path(i, "id"));
        if (!n.contains("type") || !n["type"].is_string())
            schema_error(node_path(i, "type"), "a type string is required");
        node.type = n["type"].get<std::string>();
        if (n.contains("title")) {
            if (!n["title"].is_string())
                schema_error(node_path(i, "title"), "title must be a string");
            node.title = n["title"].get<std::string>();
        } else {
            node.title = node.type;
        }
        if (n.contains("params")) {
            if (!n["params"].is_object())
                schema_error(node_path(i, "params"), "params must be an object");
            node.params = n["params"];
        }
        if (n.contains("parent_id") && !n["parent_id"].is_null())
            node.parent_id = id_from_json(n["parent_id"], node_path(i, "parent_id"));
        out.nodes_info.push_back(std::move(node));
    }

    const json& edges = doc["edges"];
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const json& e = edges[i];
        std::string path = "edges[" + std::to_string(i) + "]";
        RawEdge edge;
        if (e.is_array()) {
            if (e.size() != 3) schema_error(path, "edge triples are [source, port, target]");
            edge.source = id_from_json(e[0], path + "[0]");
            if (!e[1].is_number_integer() || e[1].get<long long>() < 0)
                schema_error(path + "[1]", "edge port must be a non-negative integer");
            edge.port = static_cast<int>(e[1].get<long long>());
            edge.target = id_from_json(e[2], path + "[2]");
        } else if (e.is_object()) {
            for (const auto& [key, value] : e.items()) {
                (void)value;
                if (key != "source" && key != "port" && key != "target")
                    schema_error(path + "." + key, "unexpected edge field");
            }
            if (!e.contains("source")) schema_error(path + ".source", "edge source is required");
            if (!e.contains("target")) schema_error(path + ".target", "edge target is required");
            edge.source = id_from_json(e["source"], path + ".source");
            edge.target = id_from_json(e["target"], path + ".target");
            if (e.contains("port")) {
                if (!e["port"].is_number_integer() || e["port"].get<long long>() < 0)
                    schema_error(path + ".port", "edge port must be a non-negative integer");
                edge.port = static_cast<int>(e["port"].get<long long>());
            }
        } else {
            schema_error(path, "expected an edge triple or object");
        }
        out.edges.push_back(std::move(edge));
    }
    return out;
}

json WorkflowDoc::to_json() const {
    json nodes = json::array();
    for (const auto& n : nodes_info) {
        json rec = {{"id", n.id}, {"type", n.type}, {"title", n.title}, {"params", n.params}};
        if (n.parent_id) rec["parent_id"] = *n.parent_id;
        nodes.push_back(std::move(rec));
    }
    json edges_json = json::array();
    for (const auto& e : edges) edges_json.push_back(json::array({e.source, e.port, e.target}));
    return json{{"nodes_info", nodes}, {"edges", edges_json}};
}

std::string WorkflowDoc::dump(int indent) const {
    return to_json().dump(indent);
}

std::string render_response(const ParsedResponse& response) {
    std::string selection;
    for (std::size_t i = 0; i < response.node_selection.size(); ++i) {
        if (i) selection += "\n";
        selection += response.node_selection[i];
    }
    std::string workflow = response.workflow_doc && response.workflow_text.empty()
                               ? response.workflow_doc->dump()
                               : response.workflow_text;
    return "<node_selection>\n" + selection + "\n</node_selection>\n\n<design_principle>\n" +
           response.design_principle + "\n</design_principle>\n\n<workflow>\n" + workflow +
           "\n</workflow>\n";
}

}  // namespace flowkit
