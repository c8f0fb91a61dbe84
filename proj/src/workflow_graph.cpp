#include "flowkit/workflow_graph.hpp"

#include <algorithm>
#include <deque>
#include <set>

#include "flowkit/util.hpp"

namespace flowkit {

using nlohmann::json;

std::string build_error_class_name(BuildErrorClass cls) {
    switch (cls) {
        case BuildErrorClass::DuplicateId: return "DuplicateId";
        case BuildErrorClass::UnknownKind: return "UnknownKind";
        case BuildErrorClass::DanglingEdge: return "DanglingEdge";
        case BuildErrorClass::PortOutOfRange: return "PortOutOfRange";
        case BuildErrorClass::ContainmentViolation: return "ContainmentViolation";
        case BuildErrorClass::CycleDetected: return "CycleDetected";
        case BuildErrorClass::MultipleStarts: return "MultipleStarts";
        case BuildErrorClass::NoEnd: return "NoEnd";
        case BuildErrorClass::Unreachable: return "Unreachable";
        case BuildErrorClass::ParamViolation: return "ParamViolation";
    }
    return "BuildError";
}

namespace {

std::string build_error_message(BuildErrorClass cls,
                                const std::vector<BuildErrorInstance>& instances) {
    std::string msg = build_error_class_name(cls) + " (" + std::to_string(instances.size()) +
                      " instance" + (instances.size() == 1 ? "" : "s") + ")";
    if (!instances.empty()) {
        msg += ": " + instances.front().subject;
        if (!instances.front().detail.empty()) msg += " - " + instances.front().detail;
    }
    return msg;
}

std::string edge_subject(const RawEdge& e) {
    return e.source + "->" + e.target + "@" + std::to_string(e.port);
}

}  // namespace

BuildError::BuildError(BuildErrorClass cls, std::vector<BuildErrorInstance> instances)
    : Error(build_error_class_name(cls), build_error_message(cls, instances)),
      cls_(cls),
      instances_(std::move(instances)) {}

TopoResult topological_sort(const std::vector<std::string>& node_ids,
                            const std::vector<RawEdge>& edges) {
    TopoResult result;
    std::map<std::string, int> in_degree;
    std::map<std::string, std::vector<std::string>> adjacency;
    for (const auto& id : node_ids) in_degree[id];
    for (const auto& e : edges) {
        adjacency[e.source].push_back(e.target);
        ++in_degree[e.target];
    }

    auto cmp = [](const std::string& a, const std::string& b) { return id_less(a, b); };
    std::vector<std::string> ready;
    for (const auto& [id, deg] : in_degree)
        if (deg == 0) ready.push_back(id);
    std::sort(ready.begin(), ready.end(), cmp);

    std::set<std::string> done;
    while (!ready.empty()) {
        std::string id = ready.front();
        ready.erase(ready.begin());
        result.order.push_back(id);
        done.insert(id);
        for (const auto& next : adjacency[id]) {
            if (--in_degree[next] == 0) {
                auto pos = std::lower_bound(ready.begin(), ready.end(), next, cmp);
                ready.insert(pos, next);
            }
        }
    }

    if (result.order.size() == node_ids.size()) {
        result.is_dag = true;
        return result;
    }

    // Minimal cycle witness: shortest closed walk in the residual subgraph,
    // found by BFS from each residual node in id order.
    std::vector<std::string> residual;
    for (const auto& id : node_ids)
        if (!done.count(id)) residual.push_back(id);
    std::sort(residual.begin(), residual.end(), cmp);

    std::map<std::string, std::vector<std::string>> residual_adj;
    for (const auto& e : edges)
        if (!done.count(e.source) && !done.count(e.target))
            residual_adj[e.source].push_back(e.target);
    for (auto& [id, nexts] : residual_adj) {
        (void)id;
        std::sort(nexts.begin(), nexts.end(), cmp);
    }

    std::vector<std::string> best;
    for (const auto& origin : residual) {
        std::map<std::string, std::string> parent;
        std::deque<std::string> queue{origin};
        std::set<std::string> seen{origin};
        bool closed = false;
        while (!queue.empty() && !closed) {
            std::string u = queue.front();
            queue.pop_front();
            for (const auto& v : residual_adj[u]) {
                if (v == origin) {
                    std::vector<std::string> cycle{origin};
                    for (std::string w = u; w != origin; w = parent[w]) cycle.push_back(w);
                    std::reverse(cycle.begin() + 1, cycle.end());
                    if (best.empty() || cycle.size() < best.size()) best = cycle;
                    closed = true;
                    break;
                }
                if (seen.insert(v).second) {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
    }
    result.cycle = best;
    return result;
}

namespace {

// Scratch state shared by the build checks.
struct Builder {
    const WorkflowDoc& doc;
    const Catalog& catalog;
    std::map<std::string, const RawNode*> by_id;
    std::map<std::string, const NodeSpec*> spec_of;  // only known kinds

    explicit Builder(const WorkflowDoc& d, const Catalog& c) : doc(d), catalog(c) {}

    std::optional<std::string> parent_of(const std::string& id) const {
        auto it = by_id.find(id);
        if (it == by_id.end()) return std::nullopt;
        return it->second->parent_id;
    }

    bool is_kind(const std::string& id, NodeKind kind) const {
        auto it = spec_of.find(id);
        return it != spec_of.end() && it->second->kind == kind;
    }

    [[noreturn]] void fail(BuildErrorClass cls, std::vector<BuildErrorInstance> instances) const {
        throw BuildError(cls, std::move(instances));
    }
};

VarType parse_type_or_string(const json& entry) {
    if (entry.is_object() && entry.contains("type") && entry["type"].is_string()) {
        if (auto t = VarType::parse(entry["type"].get<std::string>())) return *t;
    }
    return VarType::string();
}

}  // namespace

ValidatedGraph build(const WorkflowDoc& doc, const Catalog& catalog) {
    Builder b(doc, catalog);
    std::vector<BuildErrorInstance> bad;

    // 1. DuplicateId
    {
        std::map<std::string, int> counts;
        for (const auto& n : doc.nodes_info) ++counts[n.id];
        for (const auto& n : doc.nodes_info) {
            if (counts[n.id] > 1) {
                bad.push_back({n.id, "node id appears " + std::to_string(counts[n.id]) + " times",
                               std::nullopt});
                counts[n.id] = 1;  // report once per id
            }
        }
        if (!bad.empty()) b.fail(BuildErrorClass::DuplicateId, std::move(bad));
        for (const auto& n : doc.nodes_info) b.by_id[n.id] = &n;
    }

    // 2. UnknownKind
    for (const auto& n : doc.nodes_info) {
        if (const NodeSpec* spec = catalog.find(n.type))
            b.spec_of[n.id] = spec;
        else
            bad.push_back({n.id, "unknown node kind '" + n.type + "'", std::nullopt});
    }
    if (!bad.empty()) b.fail(BuildErrorClass::UnknownKind, std::move(bad));

    // 3. DanglingEdge
    for (const auto& e : doc.edges) {
        if (!b.by_id.count(e.source))
            bad.push_back({edge_subject(e), "edge source '" + e.source + "' does not exist", e});
        if (!b.by_id.count(e.target))
            bad.push_back({edge_subject(e), "edge target '" + e.target + "' does not exist", e});
    }
    if (!bad.empty()) b.fail(BuildErrorClass::DanglingEdge, std::move(bad));

    // 4. PortOutOfRange (same-scope edges only; cross-scope edges are
    // containment violations and classified in the next check)
    for (const auto& e : doc.edges) {
        if (b.parent_of(e.source) != b.parent_of(e.target)) continue;
        const NodeSpec& src = *b.spec_of[e.source];
        const NodeSpec& dst = *b.spec_of[e.target];
        if (!dst.accepts_inbound) {
            bad.push_back({edge_subject(e),
                           kind_id(dst.kind) + " accepts no inbound edges", e});
            continue;
        }
        int ports = 0;
        try {
            ports = catalog.outbound_port_count(src, b.by_id[e.source]->params);
        } catch (const MissingBranchSpecError&) {
            continue;  // undeterminable here; surfaces as a ParamViolation later
        }
        if (e.port >= ports)
            bad.push_back({edge_subject(e),
                           "port " + std::to_string(e.port) + " out of range for " +
                               kind_id(src.kind) + " with " + std::to_string(ports) +
                               " outbound port(s)",
                           e});
    }
    if (!bad.empty()) b.fail(BuildErrorClass::PortOutOfRange, std::move(bad));

    // 5. ContainmentViolation
    {
        std::map<std::string, int> entry_counts;
        for (const auto& n : doc.nodes_info) {
            const NodeSpec& spec = *b.spec_of[n.id];
            if (n.parent_id) {
                auto parent = b.by_id.find(*n.parent_id);
                if (parent == b.by_id.end()) {
                    bad.push_back({n.id, "parent '" + *n.parent_id + "' does not exist",
                                   std::nullopt});
                    continue;
                }
                if (!b.is_kind(*n.parent_id, NodeKind::Iteration)) {
                    bad.push_back({n.id, "parent '" + *n.parent_id + "' is not an iteration",
                                   std::nullopt});
                    continue;
                }
                if (spec.kind == NodeKind::Iteration)
                    bad.push_back({n.id, "nested iterations are not supported", std::nullopt});
                if (spec.kind == NodeKind::Start || spec.kind == NodeKind::End)
                    bad.push_back({n.id, kind_id(spec.kind) + " nodes must be top-level",
                                   std::nullopt});
                if (spec.kind == NodeKind::IterationStart) ++entry_counts[*n.parent_id];
            } else if (spec.kind == NodeKind::IterationStart) {
                bad.push_back({n.id, "iteration-start must live inside an iteration",
                               std::nullopt});
            }
        }
        for (const auto& n : doc.nodes_info) {
            if (b.is_kind(n.id, NodeKind::Iteration) && entry_counts[n.id] != 1)
                bad.push_back({n.id,
                               "iteration must contain exactly one iteration-start, found " +
                                   std::to_string(entry_counts[n.id]),
                               std::nullopt});
        }
        for (const auto& e : doc.edges) {
            if (b.parent_of(e.source) == b.parent_of(e.target)) continue;
            bool entry_pair =
                (b.is_kind(e.source, NodeKind::Iteration) &&
                 b.is_kind(e.target, NodeKind::IterationStart) &&
                 b.parent_of(e.target) == std::optional<std::string>(e.source)) ||
                (b.is_kind(e.target, NodeKind::Iteration) &&
                 b.is_kind(e.source, NodeKind::IterationStart) &&
                 b.parent_of(e.source) == std::optional<std::string>(e.target));
            bad.push_back({edge_subject(e),
                           entry_pair ? "an iteration and its iteration-start are related by "
                                        "inclusion only, never by an edge"
                                      : "edges must not cross an iteration boundary",
                           e});
        }
        if (!bad.empty()) b.fail(BuildErrorClass::ContainmentViolation, std::move(bad));
    }

    // Scopes: top level plus one per iteration.
    std::map<std::optional<std::string>, std::vector<std::string>> scope_nodes;
    std::map<std::optional<std::string>, std::vector<RawEdge>> scope_edges;
    for (const auto& n : doc.nodes_info) scope_nodes[n.parent_id].push_back(n.id);
    for (const auto& e : doc.edges) scope_edges[b.parent_of(e.source)].push_back(e);

    // 6. CycleDetected (per scope)
    std::map<std::optional<std::string>, TopoResult> scope_topo;
    for (const auto& [parent, ids] : scope_nodes) {
        TopoResult topo = topological_sort(ids, scope_edges[parent]);
        if (!topo.is_dag) {
            std::string joined;
            for (const auto& id : topo.cycle) {
                if (!joined.empty()) joined += ",";
                joined += id;
            }
            bad.push_back({"{" + joined + "}",
                           parent ? "cycle inside iteration '" + *parent + "'"
                                  : "cycle among top-level nodes",
                           std::nullopt});
        }
        scope_topo[parent] = std::move(topo);
    }
    if (!bad.empty()) b.fail(BuildErrorClass::CycleDetected, std::move(bad));

    // 7. MultipleStarts (exactly one start node overall)
    {
        std::vector<std::string> starts;
        for (const auto& n : doc.nodes_info)
            if (b.is_kind(n.id, NodeKind::Start)) starts.push_back(n.id);
        if (starts.size() != 1) {
            if (starts.empty())
                bad.push_back({"-", "workflow must declare exactly one start node, found none",
                               std::nullopt});
            for (const auto& id : starts)
                bad.push_back({id, "workflow must declare exactly one start node, found " +
                                       std::to_string(starts.size()),
                               std::nullopt});
            b.fail(BuildErrorClass::MultipleStarts, std::move(bad));
        }
    }

    // 8. NoEnd
    {
        bool any_end = std::any_of(doc.nodes_info.begin(), doc.nodes_info.end(),
                                   [&](const RawNode& n) { return b.is_kind(n.id, NodeKind::End); });
        if (!any_end)
            b.fail(BuildErrorClass::NoEnd,
                   {{"-", "workflow must declare at least one end node", std::nullopt}});
    }

    // 9. Unreachable (BFS from the scope entry over all ports)
    {
        std::map<std::string, std::string> entry_of;
        for (const auto& n : doc.nodes_info)
            if (b.is_kind(n.id, NodeKind::IterationStart) && n.parent_id)
                entry_of[*n.parent_id] = n.id;

        for (const auto& [parent, ids] : scope_nodes) {
            std::string root;
            if (!parent) {
                for (const auto& id : ids)
                    if (b.is_kind(id, NodeKind::Start)) root = id;
            } else {
                root = entry_of[*parent];
            }
            std::set<std::string> visited{root};
            std::deque<std::string> queue{root};
            while (!queue.empty()) {
                std::string u = queue.front();
                queue.pop_front();
                for (const auto& e : scope_edges[parent])
                    if (e.source == u && visited.insert(e.target).second)
                        queue.push_back(e.target);
            }
            for (const auto& id : ids)
                if (!visited.count(id))
                    bad.push_back({id,
                                   parent ? "not reachable from the iteration entry"
                                          : "not reachable from the start node",
                                   std::nullopt});
        }
        if (!bad.empty()) b.fail(BuildErrorClass::Unreachable, std::move(bad));
    }

    // 10. ParamViolation
    for (const auto& n : doc.nodes_info) {
        for (const auto& v : catalog.validate_params(*b.spec_of[n.id], n.params))
            bad.push_back({n.id, v.to_string(), std::nullopt});
    }
    if (!bad.empty()) b.fail(BuildErrorClass::ParamViolation, std::move(bad));

    // Admission: assemble the validated graph.
    ValidatedGraph g;
    for (const auto& n : doc.nodes_info) {
        Node node;
        node.id = n.id;
        node.kind = b.spec_of[n.id]->kind;
        node.title = n.title;
        node.params = n.params;
        node.parent_id = n.parent_id;
        g.index_[node.id] = g.nodes_.size();
        g.nodes_.push_back(std::move(node));
        if (b.is_kind(n.id, NodeKind::Start)) g.start_id_ = n.id;
        if (b.is_kind(n.id, NodeKind::IterationStart) && n.parent_id)
            g.iteration_entry_[*n.parent_id] = n.id;
    }
    g.edges_ = doc.edges;

    // Hierarchical topo order: each iteration is immediately followed by its
    // children in their own scope order.
    const auto& top = scope_topo[std::nullopt].order;
    std::vector<std::string> order;
    auto append_scope = [&](const std::vector<std::string>& ids, auto&& self) -> void {
        for (const auto& id : ids) {
            order.push_back(id);
            if (g.node(id).kind == NodeKind::Iteration) self(scope_topo[id].order, self);
        }
    };
    append_scope(top, append_scope);
    g.topo_order_ = std::move(order);

    for (const auto& n : g.nodes_) {
        try {
            g.port_counts_[n.id] =
                catalog.outbound_port_count(catalog.spec(n.kind), n.params);
        } catch (const MissingBranchSpecError&) {
            g.port_counts_[n.id] = 0;  // unreachable after ParamViolation passed
        }
    }

    // Output inference, processing containers depth-first so an iteration's
    // collected output type is derived after its children.
    auto lookup_output = [&](const std::string& id,
                             const std::string& var) -> std::optional<VarType> {
        auto it = g.outputs_.find(id);
        if (it == g.outputs_.end()) return std::nullopt;
        for (const auto& [name, type] : it->second)
            if (name == var) return type;
        return std::nullopt;
    };
    auto ref_type = [&](const json& params, const char* key) -> std::optional<VarType> {
        auto it = params.find(key);
        if (it == params.end() || !it->is_string()) return std::nullopt;
        auto ref = parse_var_ref(it->get<std::string>());
        if (!ref) return std::nullopt;
        return lookup_output(ref->node_id, ref->var_name);
    };

    auto infer_scope = [&](const std::vector<std::string>& ids, auto&& self) -> void {
        for (const auto& id : ids) {
            const Node& n = g.node(id);
            const NodeSpec& spec = catalog.spec(n.kind);
            auto& out = g.outputs_[id];
            switch (n.kind) {
                case NodeKind::Start:
                    if (n.params.contains("variables"))
                        for (const auto& v : n.params["variables"])
                            if (v.is_object() && v.contains("name") && v["name"].is_string())
                                out.emplace_back(v["name"].get<std::string>(),
                                                 parse_type_or_string(v));
                    break;
                case NodeKind::Code: {
                    json canon = catalog.canonical_params(spec, n.params);
                    for (const auto& v : canon["outputs"])
                        if (v.is_object() && v.contains("name") && v["name"].is_string())
                            out.emplace_back(v["name"].get<std::string>(),
                                             parse_type_or_string(v));
                    break;
                }
                case NodeKind::ParameterExtractor:
                    if (n.params.contains("parameters"))
                        for (const auto& v : n.params["parameters"])
                            if (v.is_object() && v.contains("name") && v["name"].is_string())
                                out.emplace_back(v["name"].get<std::string>(),
                                                 parse_type_or_string(v));
                    break;
                case NodeKind::ListOperator: {
                    auto list_type = ref_type(n.params, "list");
                    std::optional<VarType> elem;
                    if (list_type && list_type->is_array) elem = VarType{list_type->elem, false};
                    out.emplace_back("result", list_type && list_type->is_array
                                                   ? list_type
                                                   : std::optional<VarType>());
                    out.emplace_back("first_record", elem);
                    out.emplace_back("last_record", elem);
                    break;
                }
                case NodeKind::VariableAggregator: {
                    std::optional<VarType> chosen;
                    if (n.params.contains("variables"))
                        for (const auto& v : n.params["variables"]) {
                            if (!v.is_string()) continue;
                            auto ref = parse_var_ref(v.get<std::string>());
                            if (!ref) continue;
                            if (auto t = lookup_output(ref->node_id, ref->var_name)) {
                                chosen = t;
                                break;
                            }
                        }
                    out.emplace_back("output", chosen);
                    break;
                }
                case NodeKind::Iteration: {
                    self(g.scope_order(id), self);
                    auto selected = ref_type(n.params, "output");
                    std::optional<VarType> collected;
                    if (selected && !selected->is_array)
                        collected = VarType::array_of(selected->elem);
                    out.emplace_back("output", collected);
                    break;
                }
                default:
                    for (const auto& o : spec.output_vars) out.emplace_back(o.name, o.type);
                    break;
            }
        }
    };
    infer_scope(g.scope_order(std::nullopt), infer_scope);

    g.io_ = io_signature(g);
    return g;
}

const Node& ValidatedGraph::node(const std::string& id) const {
    return nodes_[index_.at(id)];
}

const Node* ValidatedGraph::find_node(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return nullptr;
    return &nodes_[it->second];
}

std::vector<const Node*> ValidatedGraph::children_of(const std::string& id) const {
    std::vector<const Node*> out;
    for (const auto& nid : topo_order_) {
        const Node& n = node(nid);
        if (n.parent_id && *n.parent_id == id) out.push_back(&n);
    }
    return out;
}

std::vector<std::string> ValidatedGraph::scope_order(
    const std::optional<std::string>& parent) const {
    std::vector<std::string> out;
    for (const auto& nid : topo_order_)
        if (node(nid).parent_id == parent) out.push_back(nid);
    return out;
}

const std::string& ValidatedGraph::entry_of(const std::string& iteration_id) const {
    return iteration_entry_.at(iteration_id);
}

const std::vector<std::pair<std::string, std::optional<VarType>>>& ValidatedGraph::outputs_of(
    const std::string& id) const {
    static const std::vector<std::pair<std::string, std::optional<VarType>>> empty;
    auto it = outputs_.find(id);
    return it == outputs_.end() ? empty : it->second;
}

std::optional<VarType> ValidatedGraph::output_type(const std::string& id,
                                                   const std::string& var) const {
    for (const auto& [name, type] : outputs_of(id))
        if (name == var) return type;
    return std::nullopt;
}

int ValidatedGraph::outbound_ports(const std::string& id) const {
    auto it = port_counts_.find(id);
    return it == port_counts_.end() ? 0 : it->second;
}

WorkflowDoc ValidatedGraph::to_doc() const {
    WorkflowDoc doc;
    for (const auto& id : topo_order_) {
        const Node& n = node(id);
        RawNode raw;
        raw.id = n.id;
        raw.type = kind_id(n.kind);
        raw.title = n.title;
        raw.params = n.params;
        raw.parent_id = n.parent_id;
        doc.nodes_info.push_back(std::move(raw));
    }
    doc.edges = edges_;
    std::sort(doc.edges.begin(), doc.edges.end(), [](const RawEdge& a, const RawEdge& b) {
        if (a.source != b.source) return id_less(a.source, b.source);
        if (a.port != b.port) return a.port < b.port;
        return id_less(a.target, b.target);
    });
    return doc;
}

std::string RefViolation::to_string() const {
    const char* names[] = {"UnknownRefNode", "UnknownRefVar", "UseBeforeDef", "CrossScopeRef",
                           "RefTypeMismatch"};
    return std::string(names[static_cast<int>(kind)]) + " at node " + node_id + ": " + token +
           (detail.empty() ? "" : " (" + detail + ")");
}

namespace {

struct Resolver {
    const ValidatedGraph& graph;
    const Catalog& catalog;
    std::vector<RefViolation> violations;
    std::map<std::string, std::size_t> scope_pos;  // node id -> position in its scope order

    Resolver(const ValidatedGraph& g, const Catalog& c) : graph(g), catalog(c) {
        index_scope(std::nullopt);
        for (const auto& n : g.nodes())
            if (n.kind == NodeKind::Iteration) index_scope(n.id);
    }

    void index_scope(const std::optional<std::string>& parent) {
        auto order = graph.scope_order(parent);
        for (std::size_t i = 0; i < order.size(); ++i) scope_pos[order[i]] = i;
    }

    void flag(RefViolationKind kind, const Node& n, const VarRefToken& ref, std::string detail) {
        violations.push_back({kind, n.id, ref.render(), std::move(detail)});
    }

    std::optional<VarType> iteration_item_type(const Node& iteration) const {
        auto it = iteration.params.find("input");
        if (it == iteration.params.end() || !it->is_string()) return std::nullopt;
        auto ref = parse_var_ref(it->get<std::string>());
        if (!ref) return std::nullopt;
        auto t = graph.output_type(ref->node_id, ref->var_name);
        if (t && t->is_array) return VarType{t->elem, false};
        return std::nullopt;
    }

    std::optional<VarRefToken> iteration_input_ref(const Node& iteration) const {
        auto it = iteration.params.find("input");
        if (it == iteration.params.end() || !it->is_string()) return std::nullopt;
        return parse_var_ref(it->get<std::string>());
    }

    // Core legality check; returns the referenced type when determinable.
    std::optional<VarType> check_ref(const Node& n, const VarRefToken& ref) {
        const Node* target = graph.find_node(ref.node_id);
        if (!target) {
            flag(RefViolationKind::UnknownRefNode, n, ref, "no such node");
            return std::nullopt;
        }
        if (n.parent_id) {
            const Node& iteration = graph.node(*n.parent_id);
            if (target->id == iteration.id) {
                if (ref.var_name == "item") return iteration_item_type(iteration);
                if (ref.var_name == "index") return VarType::number();
                flag(RefViolationKind::UnknownRefVar, n, ref,
                     "only item and index are visible inside the iteration");
                return std::nullopt;
            }
            if (target->parent_id != n.parent_id) {
                // The iteration's own input list stays referenceable inside it.
                auto input_ref = iteration_input_ref(iteration);
                if (input_ref && input_ref->node_id == ref.node_id &&
                    input_ref->var_name == ref.var_name)
                    return graph.output_type(ref.node_id, ref.var_name);
                flag(RefViolationKind::CrossScopeRef, n, ref,
                     "reference escapes the iteration scope");
                return std::nullopt;
            }
        } else if (target->parent_id) {
            flag(RefViolationKind::CrossScopeRef, n, ref,
                 "reference reaches inside an iteration");
            return std::nullopt;
        }

        const auto& outputs = graph.outputs_of(target->id);
        bool known = std::any_of(outputs.begin(), outputs.end(),
                                 [&](const auto& p) { return p.first == ref.var_name; });
        if (!known) {
            flag(RefViolationKind::UnknownRefVar, n, ref,
                 "node " + target->id + " does not produce '" + ref.var_name + "'");
            return std::nullopt;
        }
        if (scope_pos.at(target->id) >= scope_pos.at(n.id)) {
            flag(RefViolationKind::UseBeforeDef, n, ref,
                 "producer does not precede the consumer");
            return std::nullopt;
        }
        return graph.output_type(target->id, ref.var_name);
    }

    void expect_type(const Node& n, const VarRefToken& ref, const std::optional<VarType>& got,
                     bool want_array, std::optional<ScalarType> want_elem, const char* what) {
        if (!got) return;  // unresolved upstream; already reported there
        if (got->is_array != want_array || (want_elem && got->elem != *want_elem))
            flag(RefViolationKind::RefTypeMismatch, n, ref, what);
    }

    void check_embedded(const Node& n, const std::string& text) {
        for (const auto& ref : find_var_refs(text)) check_ref(n, ref);
    }

    void check_node(const Node& n) {
        const json& p = n.params;
        switch (n.kind) {
            case NodeKind::End:
                if (p.contains("outputs"))
                    for (const auto& entry : p["outputs"])
                        if (entry.is_object() && entry.contains("value") &&
                            entry["value"].is_string())
                            if (auto ref = parse_var_ref(entry["value"].get<std::string>()))
                                check_ref(n, *ref);
                break;
            case NodeKind::QuestionClassifier:
                if (auto ref = pure_ref(p, "query")) {
                    auto t = check_ref(n, *ref);
                    expect_type(n, *ref, t, false, ScalarType::String,
                                "classifier query must be a string");
                }
                break;
            case NodeKind::DocumentExtractor:
                if (auto ref = pure_ref(p, "file")) {
                    auto t = check_ref(n, *ref);
                    if (t && !t->is_file_kind())
                        flag(RefViolationKind::RefTypeMismatch, n, *ref,
                             "document-extractor needs a file variable");
                }
                break;
            case NodeKind::ListOperator:
                if (auto ref = pure_ref(p, "list")) {
                    auto t = check_ref(n, *ref);
                    if (t && !t->is_array)
                        flag(RefViolationKind::RefTypeMismatch, n, *ref,
                             "list-operator needs a list variable");
                }
                break;
            case NodeKind::ParameterExtractor:
                if (auto ref = pure_ref(p, "input")) {
                    auto t = check_ref(n, *ref);
                    expect_type(n, *ref, t, false, ScalarType::String,
                                "extractor input must be a string");
                }
                if (p.contains("instruction") && p["instruction"].is_string())
                    check_embedded(n, p["instruction"].get<std::string>());
                break;
            case NodeKind::VariableAggregator: {
                std::optional<VarType> first;
                if (p.contains("variables"))
                    for (const auto& v : p["variables"]) {
                        if (!v.is_string()) continue;
                        auto ref = parse_var_ref(v.get<std::string>());
                        if (!ref) continue;
                        auto t = check_ref(n, *ref);
                        if (!t) continue;
                        if (!first) {
                            first = t;
                        } else if (*t != *first) {
                            flag(RefViolationKind::RefTypeMismatch, n, *ref,
                                 "aggregator inputs must share one type");
                        }
                    }
                break;
            }
            case NodeKind::Iteration: {
                if (auto ref = pure_ref(p, "input")) {
                    auto t = check_ref(n, *ref);
                    if (t && !t->is_array)
                        flag(RefViolationKind::RefTypeMismatch, n, *ref,
                             "iteration input must be a list");
                }
                if (auto ref = pure_ref(p, "output")) {
                    const Node* target = graph.find_node(ref->node_id);
                    if (!target) {
                        flag(RefViolationKind::UnknownRefNode, n, *ref, "no such node");
                    } else if (!target->parent_id || *target->parent_id != n.id) {
                        flag(RefViolationKind::CrossScopeRef, n, *ref,
                             "iteration output selector must point inside the iteration");
                    } else {
                        auto t = graph.output_type(target->id, ref->var_name);
                        const auto& outs = graph.outputs_of(target->id);
                        bool known = std::any_of(outs.begin(), outs.end(), [&](const auto& o) {
                            return o.first == ref->var_name;
                        });
                        if (!known)
                            flag(RefViolationKind::UnknownRefVar, n, *ref,
                                 "node " + target->id + " does not produce '" + ref->var_name +
                                     "'");
                        else if (t && t->is_array)
                            flag(RefViolationKind::RefTypeMismatch, n, *ref,
                                 "iteration cannot collect list values");
                    }
                }
                break;
            }
            case NodeKind::IfElse:
                if (p.contains("conditions") && p["conditions"].is_array())
                    for (const auto& branch : p["conditions"]) {
                        if (!branch.is_object() || !branch.contains("rules") ||
                            !branch["rules"].is_array())
                            continue;
                        for (const auto& rule : branch["rules"]) {
                            if (!rule.is_object() || !rule.contains("left") ||
                                !rule["left"].is_string())
                                continue;
                            auto ref = parse_var_ref(rule["left"].get<std::string>());
                            if (!ref) continue;
                            auto t = check_ref(n, *ref);
                            if (!t || !rule.contains("op") || !rule["op"].is_string()) continue;
                            std::string op = normalize_comparator(rule["op"].get<std::string>());
                            bool ok = false;
                            if (t->is_array)
                                ok = op == "contains" || op == "is-empty";
                            else if (t->elem == ScalarType::Number)
                                ok = op == "=" || op == "!=" || op == "<" || op == "<=" ||
                                     op == ">" || op == ">=";
                            else if (t->elem == ScalarType::String ||
                                     t->elem == ScalarType::Boolean)
                                ok = op == "equals" || op == "contains" || op == "starts-with" ||
                                     op == "is-empty" || op == "not-empty";
                            if (!ok)
                                flag(RefViolationKind::RefTypeMismatch, n, *ref,
                                     "comparator '" + op + "' does not apply to " +
                                         t->to_string());
                        }
                    }
                break;
            default:
                for (const auto& [key, value] : p.items()) {
                    (void)key;
                    if (value.is_string()) check_embedded(n, value.get<std::string>());
                    if (value.is_object())
                        for (const auto& [k2, v2] : value.items()) {
                            (void)k2;
                            if (v2.is_string()) check_embedded(n, v2.get<std::string>());
                        }
                }
                break;
        }
    }

    static std::optional<VarRefToken> pure_ref(const json& params, const char* key) {
        auto it = params.find(key);
        if (it == params.end() || !it->is_string()) return std::nullopt;
        return parse_var_ref(it->get<std::string>());
    }
};

}  // namespace

std::vector<RefViolation> resolve_vars(const ValidatedGraph& graph, const Catalog& catalog) {
    Resolver r(graph, catalog);
    for (const auto& id : graph.topo_order()) r.check_node(graph.node(id));
    return r.violations;
}

IoSignature io_signature(const ValidatedGraph& graph) {
    IoSignature io;
    for (const auto& [name, type] : graph.outputs_of(graph.start_id()))
        if (type) io.inputs.push_back({name, *type});

    std::set<std::string> seen;
    for (const auto& id : graph.topo_order()) {
        const Node& n = graph.node(id);
        if (n.kind != NodeKind::End) continue;
        if (!n.params.contains("outputs")) continue;
        for (const auto& entry : n.params["outputs"]) {
            if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string())
                continue;
            std::string name = entry["name"].get<std::string>();
            if (!seen.insert(name).second) continue;  // first declaration wins
            if (!entry.contains("value") || !entry["value"].is_string()) continue;
            auto ref = parse_var_ref(entry["value"].get<std::string>());
            if (!ref) continue;
            if (auto t = graph.output_type(ref->node_id, ref->var_name))
                io.outputs.push_back({name, *t});
        }
    }
    return io;
}

}  // namespace flowkit
