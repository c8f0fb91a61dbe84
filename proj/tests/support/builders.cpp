#include "builders.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <tuple>

#include "flowkit/util.hpp"

namespace flowkit::testing {

using nlohmann::json;

std::string data_dir() {
    return FLOWKIT_DATA_DIR;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("missing fixture: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

Corpus load_mini_corpus() {
    return load_corpus(data_dir() + "/corpus/mini_corpus.json");
}

std::string load_perfect_response(const std::string& task_id, int round_index) {
    return read_text_file(data_dir() + "/responses/perfect/" + task_id + "/round_" +
                          std::to_string(round_index + 1) + ".txt");
}

std::string wrap_response(const WorkflowDoc& doc, const std::string& principle) {
    const Catalog& catalog = default_catalog();
    std::set<std::string> kinds;
    for (const auto& n : doc.nodes_info) kinds.insert(catalog.canonical_kind_id(n.type));
    ParsedResponse response;
    response.node_selection.assign(kinds.begin(), kinds.end());
    response.design_principle = principle;
    response.workflow_text = doc.dump();
    return render_response(response);
}

json node_json(const std::string& id, const std::string& type, json params,
               const char* parent_id) {
    json n = {{"id", id}, {"type", type}, {"title", type}, {"params", std::move(params)}};
    if (parent_id) n["parent_id"] = parent_id;
    return n;
}

WorkflowDoc doc_from_json(json nodes, json edges) {
    json doc = {{"nodes_info", std::move(nodes)}, {"edges", std::move(edges)}};
    return decode_workflow(doc.dump());
}

WorkflowDoc chain_doc() {
    return doc_from_json(
        json::array(
            {node_json("1", "start",
                       {{"variables", json::array({{{"name", "text"}, {"type", "string"}}})}}),
             node_json("2", "llm", {{"prompt", "Answer: {{#1.text#}}"}}),
             node_json("3", "end",
                       {{"outputs",
                         json::array({{{"name", "reply"}, {"value", "{{#2.text#}}"}}})}})}),
        json::array({json::array({"1", 0, "2"}), json::array({"2", 0, "3"})}));
}

// ---------------------------------------------------------------------------
// Random graph generator
// ---------------------------------------------------------------------------

namespace {

struct AvailableVar {
    std::string node;
    std::string var;
    VarType type;

    std::string token() const { return "{{#" + node + "." + var + "#}}"; }
};

struct Gen {
    std::mt19937& rng;
    json nodes = json::array();
    json edges = json::array();
    std::vector<AvailableVar> vars;
    int next_id = 1;
    std::string prev_id;
    int prev_ports = 1;

    explicit Gen(std::mt19937& r) : rng(r) {}

    int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
    bool chance(int percent) { return pick(1, 100) <= percent; }

    std::string fresh_id() { return std::to_string(next_id++); }

    std::optional<AvailableVar> find_var(
        const std::function<bool(const AvailableVar&)>& pred) {
        std::vector<AvailableVar> matches;
        for (const auto& v : vars)
            if (pred(v)) matches.push_back(v);
        if (matches.empty()) return std::nullopt;
        return matches[static_cast<std::size_t>(pick(0, static_cast<int>(matches.size()) - 1))];
    }

    std::optional<AvailableVar> any_var() {
        return find_var([](const AvailableVar&) { return true; });
    }

    void add_node(const std::string& id, const std::string& type, json params,
                  const char* parent = nullptr) {
        nodes.push_back(node_json(id, type, std::move(params), parent));
    }

    void chain_edge(const std::string& to) {
        int port = prev_ports > 1 ? pick(0, prev_ports - 1) : 0;
        edges.push_back(json::array({prev_id, port, to}));
    }

    void produce(const std::string& node, const std::string& var, VarType type) {
        vars.push_back({node, var, type});
    }

    std::string text_with_refs(const std::string& prefix) {
        std::string out = prefix;
        int refs = pick(0, 2);
        for (int i = 0; i < refs; ++i)
            if (auto v = any_var()) out += " " + v->token();
        return out;
    }
};

// One middle node of the given kind; returns false when preconditions fail.
bool add_middle_node(Gen& g, const std::string& kind) {
    const std::string id = g.fresh_id();
    if (kind == "llm") {
        json params = {{"prompt", g.text_with_refs("Step " + id + ":")}};
        if (g.chance(30)) params["system_prompt"] = "Be brief.";
        g.add_node(id, kind, params);
        g.chain_edge(id);
        g.produce(id, "text", VarType::string());
    } else if (kind == "template-transform") {
        g.add_node(id, kind, {{"template", g.text_with_refs("T" + id + ":")}});
        g.chain_edge(id);
        g.produce(id, "output", VarType::string());
    } else if (kind == "code") {
        if (g.chance(60)) {
            auto v =
                g.find_var([](const AvailableVar& a) { return a.type == VarType::string(); });
            if (!v) return false;
            json params = {{"script", "\"c" + id + ": \" + " + v->token()}};
            if (g.chance(50))
                params["outputs"] =
                    json::array({{{"name", "result"}, {"type", "string"}}});
            g.add_node(id, kind, params);
            g.produce(id, "result", VarType::string());
        } else {
            static const char* types[] = {"string", "number", "array[string]",
                                          "array[number]", "object"};
            json outputs = json::array();
            int count = g.pick(1, 2);
            for (int i = 0; i < count; ++i) {
                std::string type = types[g.pick(0, 4)];
                outputs.push_back({{"name", "o" + std::to_string(i + 1)}, {"type", type}});
                g.produce(id, "o" + std::to_string(i + 1), *VarType::parse(type));
            }
            g.add_node(id, kind, {{"script", "table_" + id}, {"outputs", outputs}});
        }
        g.chain_edge(id);
    } else if (kind == "http-request") {
        json params = {{"url", "http://svc.local/api/" + id}};
        if (g.chance(50)) {
            params["method"] = "POST";
            params["body"] = g.text_with_refs("payload");
        }
        if (g.chance(30)) params["headers"] = json{{"X-Trace", "t" + id}};
        g.add_node(id, kind, params);
        g.chain_edge(id);
        g.produce(id, "body", VarType::string());
        g.produce(id, "status_code", VarType::number());
    } else if (kind == "google-search") {
        json params = {{"query", g.text_with_refs("find")}};
        if (g.chance(50)) params["num_results"] = g.pick(1, 9);
        g.add_node(id, kind, params);
        g.chain_edge(id);
        g.produce(id, "result", VarType::string());
    } else if (kind == "echarts") {
        json params = {{"data", g.text_with_refs("rows")}};
        if (g.chance(50)) params["title"] = "Chart " + id;
        if (g.chance(50)) {
            static const char* kinds[] = {"bar", "line", "pie"};
            params["chart_type"] = kinds[g.pick(0, 2)];
        }
        g.add_node(id, kind, params);
        g.chain_edge(id);
        g.produce(id, "result", VarType::string());
    } else if (kind == "text-to-speech") {
        json params = {{"text", g.text_with_refs("say")}};
        if (g.chance(30)) params["voice"] = "verse";
        g.add_node(id, kind, params);
        g.chain_edge(id);
        g.produce(id, "file", VarType::file());
    } else if (kind == "text-to-image") {
        json params = {{"prompt", g.text_with_refs("draw")}};
        if (g.chance(50)) params["size"] = "768x1024";
        g.add_node(id, kind, params);
        g.chain_edge(id);
        g.produce(id, "file", VarType::file());
    } else if (kind == "mermaid-converter") {
        json params = {{"code", "graph TD; a" + id + "-->b" + id + ";"}};
        if (g.chance(50)) params["format"] = "svg";
        g.add_node(id, kind, params);
        g.chain_edge(id);
        g.produce(id, "file", VarType::file());
    } else if (kind == "markdown-exporter") {
        static const char* formats[] = {"md", "pdf", "docx", "html"};
        json params = {{"markdown", g.text_with_refs("# Doc " + id)},
                       {"format", formats[g.pick(0, 3)]}};
        g.add_node(id, kind, params);
        g.chain_edge(id);
        g.produce(id, "file", VarType::file());
    } else if (kind == "document-extractor") {
        auto v =
            g.find_var([](const AvailableVar& a) { return a.type == VarType::file(); });
        if (!v) return false;
        g.add_node(id, kind, {{"file", v->token()}});
        g.chain_edge(id);
        g.produce(id, "text", VarType::string());
    } else if (kind == "question-classifier") {
        auto v =
            g.find_var([](const AvailableVar& a) { return a.type == VarType::string(); });
        if (!v) return false;
        int classes = g.pick(2, 3);
        json class_list = json::array();
        for (int i = 0; i < classes; ++i) class_list.push_back("class_" + std::to_string(i + 1));
        g.add_node(id, kind, {{"query", v->token()}, {"classes", class_list}});
        g.chain_edge(id);
        g.produce(id, "class_name", VarType::string());
        g.prev_id = id;
        g.prev_ports = classes;
        return true;
    } else if (kind == "parameter-extractor") {
        auto v =
            g.find_var([](const AvailableVar& a) { return a.type == VarType::string(); });
        if (!v) return false;
        static const char* types[] = {"string", "number", "boolean"};
        json parameters = json::array();
        int count = g.pick(1, 2);
        for (int i = 0; i < count; ++i) {
            std::string type = types[g.pick(0, 2)];
            parameters.push_back({{"name", "p" + std::to_string(i + 1)}, {"type", type}});
            g.produce(id, "p" + std::to_string(i + 1), *VarType::parse(type));
        }
        json params = {{"input", v->token()}, {"parameters", parameters}};
        if (g.chance(30)) params["instruction"] = "Extract carefully.";
        g.add_node(id, kind, params);
        g.chain_edge(id);
    } else if (kind == "if-else") {
        auto num =
            g.find_var([](const AvailableVar& a) { return a.type == VarType::number(); });
        auto str =
            g.find_var([](const AvailableVar& a) { return a.type == VarType::string(); });
        if (!num && !str) return false;
        int branches = g.pick(1, 2);
        json conditions = json::array();
        for (int b = 0; b < branches; ++b) {
            json rule;
            if (num && (!str || g.chance(50))) {
                static const char* ops[] = {"=", "!=", "<", "<=", ">", ">="};
                rule = {{"left", num->token()}, {"op", ops[g.pick(0, 5)]}, {"right", g.pick(0, 9)}};
            } else {
                static const char* ops[] = {"equals", "contains", "starts-with"};
                rule = {{"left", str->token()}, {"op", ops[g.pick(0, 2)]}, {"right", "x"}};
            }
            json branch = {{"rules", json::array({rule})}};
            if (g.chance(50)) branch["operator"] = g.chance(50) ? "and" : "or";
            conditions.push_back(branch);
        }
        g.add_node(id, kind, {{"conditions", conditions}});
        g.chain_edge(id);
        g.prev_id = id;
        g.prev_ports = branches + 1;
        return true;
    } else if (kind == "variable-aggregator") {
        auto first = g.any_var();
        if (!first) return false;
        VarType want = first->type;
        json refs = json::array({first->token()});
        int extra = g.pick(0, 2);
        for (int i = 0; i < extra; ++i)
            if (auto v = g.find_var(
                    [&](const AvailableVar& a) { return a.type == want; }))
                refs.push_back(v->token());
        g.add_node(id, kind, {{"variables", refs}});
        g.chain_edge(id);
        g.produce(id, "output", want);
    } else if (kind == "list-operator") {
        auto v =
            g.find_var([](const AvailableVar& a) { return a.type.is_array; });
        if (!v) return false;
        static const char* ops[] = {"identity", "limit", "reverse", "sort"};
        std::string op = ops[g.pick(0, 3)];
        json params = {{"list", v->token()}, {"operation", op}};
        if (op == "limit") params["count"] = g.pick(1, 5);
        g.add_node(id, kind, params);
        g.chain_edge(id);
        g.produce(id, "result", v->type);
        g.produce(id, "first_record", VarType{v->type.elem, false});
        g.produce(id, "last_record", VarType{v->type.elem, false});
    } else if (kind == "iteration") {
        auto v =
            g.find_var([](const AvailableVar& a) { return a.type.is_array; });
        if (!v) return false;
        std::string entry = g.fresh_id();
        std::string body = g.fresh_id();
        g.add_node(id, "iteration",
                   {{"input", v->token()}, {"output", "{{#" + body + ".output#}}"}});
        g.add_node(entry, "iteration-start", json::object(), id.c_str());
        g.add_node(body, "template-transform",
                   {{"template", "item " + id + ": {{#" + id + ".item#}}"}}, id.c_str());
        g.edges.push_back(json::array({entry, 0, body}));
        g.chain_edge(id);
        g.produce(id, "output", VarType::array_of(ScalarType::String));
    } else {
        return false;
    }
    if (kind != "question-classifier" && kind != "if-else") {
        g.prev_id = id;
        g.prev_ports = 1;
    }
    return true;
}

}  // namespace

WorkflowDoc random_valid_doc(std::mt19937& rng, const GraphGenOptions& options) {
    Gen g(rng);

    // start node: first input always a string; optional extras
    std::string start_id = g.fresh_id();
    json start_vars = json::array({{{"name", "text"}, {"type", "string"}}});
    g.produce(start_id, "text", VarType::string());
    if (g.chance(50)) {
        start_vars.push_back({{"name", "amount"}, {"type", "number"}});
        g.produce(start_id, "amount", VarType::number());
    }
    if (g.chance(40)) {
        start_vars.push_back({{"name", "attachment"}, {"type", "file"}});
        g.produce(start_id, "attachment", VarType::file());
    }
    g.add_node(start_id, "start", {{"variables", start_vars}});
    g.prev_id = start_id;
    g.prev_ports = 1;

    static const char* kinds[] = {
        "llm",         "template-transform", "code",           "http-request",
        "google-search", "echarts",          "text-to-speech", "text-to-image",
        "mermaid-converter", "markdown-exporter", "document-extractor",
        "question-classifier", "parameter-extractor", "if-else",
        "variable-aggregator", "list-operator", "iteration"};

    int middle = g.pick(options.min_middle_nodes, options.max_middle_nodes);
    int added = 0;
    int guard = 0;
    std::vector<std::pair<std::string, int>> branch_nodes;  // for extra port edges
    while (added < middle && guard < middle * 12) {
        ++guard;
        std::string kind = kinds[g.pick(0, 16)];
        std::string before_prev = g.prev_id;
        int before_ports = g.prev_ports;
        if (add_middle_node(g, kind)) {
            ++added;
            if (g.prev_ports > 1) branch_nodes.emplace_back(g.prev_id, g.prev_ports);
        } else {
            g.prev_id = before_prev;
            g.prev_ports = before_ports;
        }
    }

    // end node with 1-3 unique named outputs
    std::string end_id = g.fresh_id();
    json outputs = json::array();
    int out_count = g.pick(1, 3);
    std::set<std::string> used;
    for (int i = 0; i < out_count; ++i) {
        auto v = g.any_var();
        std::string name = "out" + std::to_string(i + 1);
        if (!used.insert(name).second) continue;
        outputs.push_back({{"name", name}, {"value", v->token()}});
    }
    g.add_node(end_id, "end", {{"outputs", outputs}});
    g.chain_edge(end_id);

    // untaken branch ports connect forward to the end node
    for (const auto& [branch_id, ports] : branch_nodes)
        for (int p = 0; p < ports; ++p)
            if (g.chance(60)) g.edges.push_back(json::array({branch_id, p, end_id}));

    return doc_from_json(g.nodes, g.edges);
}

bool graphs_equivalent(const ValidatedGraph& a, const ValidatedGraph& b,
                       const Catalog& catalog, std::string& why) {
    if (a.nodes().size() != b.nodes().size()) {
        why = "node counts differ";
        return false;
    }
    for (const auto& node : a.nodes()) {
        const Node* other = b.find_node(node.id);
        if (!other) {
            why = "node " + node.id + " missing";
            return false;
        }
        if (other->kind != node.kind) {
            why = "node " + node.id + " kind differs";
            return false;
        }
        if (other->title != node.title) {
            why = "node " + node.id + " title differs";
            return false;
        }
        if (other->parent_id != node.parent_id) {
            why = "node " + node.id + " parent differs";
            return false;
        }
        const NodeSpec& spec = catalog.spec(node.kind);
        json pa = catalog.canonical_params(spec, node.params);
        json pb = catalog.canonical_params(spec, other->params);
        if (pa != pb) {
            why = "node " + node.id + " params differ: " + pa.dump() + " vs " + pb.dump();
            return false;
        }
    }
    auto edge_set = [](const ValidatedGraph& g) {
        std::multiset<std::tuple<std::string, int, std::string>> out;
        for (const auto& e : g.edges()) out.insert({e.source, e.port, e.target});
        return out;
    };
    if (edge_set(a) != edge_set(b)) {
        why = "edge relations differ";
        return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Topo oracle
// ---------------------------------------------------------------------------

TopoOracle::TopoOracle(int n) : n_(n) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    do {
        std::vector<int> pos(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) pos[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;
        std::uint64_t mask = 0;
        int slot = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                if (pos[static_cast<std::size_t>(i)] < pos[static_cast<std::size_t>(j)])
                    mask |= (1ULL << slot);
                ++slot;
            }
        perms_.push_back(perm);
        forward_masks_.push_back(mask);
    } while (std::next_permutation(perm.begin(), perm.end()));
}

std::pair<int, int> TopoOracle::pair_at(int slot) const {
    int i = slot / (n_ - 1);
    int r = slot % (n_ - 1);
    int j = r < i ? r : r + 1;
    return {i, j};
}

TopoOracleResult TopoOracle::run(std::uint64_t edge_mask) const {
    // permutations enumerate in lexicographic order, so the first hit is the
    // tie-broken minimum
    for (std::size_t p = 0; p < perms_.size(); ++p) {
        if ((edge_mask & ~forward_masks_[p]) == 0) return {true, perms_[p]};
    }
    return {false, {}};
}

TopoResult library_topo(int n, std::uint64_t edge_mask, const TopoOracle& oracle) {
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back(std::to_string(i + 1));
    std::vector<RawEdge> edges;
    for (int slot = 0; slot < oracle.pair_count(); ++slot) {
        if (!(edge_mask & (1ULL << slot))) continue;
        auto [i, j] = oracle.pair_at(slot);
        edges.push_back({std::to_string(i + 1), 0, std::to_string(j + 1)});
    }
    return topological_sort(ids, edges);
}

}  // namespace flowkit::testing
