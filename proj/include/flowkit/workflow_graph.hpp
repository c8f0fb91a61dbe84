#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowkit/node_catalog.hpp"
#include "flowkit/response_parser.hpp"

namespace flowkit {

struct Node {
    std::string id;
    NodeKind kind = NodeKind::Start;
    std::string title;
    nlohmann::json params = nlohmann::json::object();
    std::optional<std::string> parent_id;
};

struct VarDecl {
    std::string name;
    VarType type;

    bool operator==(const VarDecl&) const = default;
};

struct IoSignature {
    std::vector<VarDecl> inputs;
    std::vector<VarDecl> outputs;
};

enum class BuildErrorClass {
    DuplicateId,
    UnknownKind,
    DanglingEdge,
    PortOutOfRange,
    ContainmentViolation,
    CycleDetected,
    MultipleStarts,
    NoEnd,
    Unreachable,
    ParamViolation,
};

std::string build_error_class_name(BuildErrorClass cls);

struct BuildErrorInstance {
    std::string subject;  // node id or "source->target" for edge-shaped errors
    std::string detail;
    std::optional<RawEdge> edge;
};

// One failing check class with every instance of that class, per the fixed
// check order of build().
class BuildError : public Error {
public:
    BuildError(BuildErrorClass cls, std::vector<BuildErrorInstance> instances);

    BuildErrorClass error_class() const { return cls_; }
    const std::vector<BuildErrorInstance>& instances() const { return instances_; }

private:
    BuildErrorClass cls_;
    std::vector<BuildErrorInstance> instances_;
};

class ValidatedGraph {
public:
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<RawEdge>& edges() const { return edges_; }
    const std::vector<std::string>& topo_order() const { return topo_order_; }
    const IoSignature& io_signature() const { return io_; }

    const Node& node(const std::string& id) const;
    const Node* find_node(const std::string& id) const;
    bool has_node(const std::string& id) const { return index_.count(id) > 0; }

    // Children of an iteration container, in topo order. Empty for plain nodes.
    std::vector<const Node*> children_of(const std::string& id) const;
    // Topo order restricted to one containment scope (top level: empty parent).
    std::vector<std::string> scope_order(const std::optional<std::string>& parent) const;

    const std::string& start_id() const { return start_id_; }
    const std::string& entry_of(const std::string& iteration_id) const;

    // Resolved output variables per node (dynamic kinds included). A nullopt
    // type means resolution could not determine it; resolve_vars reports why.
    const std::vector<std::pair<std::string, std::optional<VarType>>>& outputs_of(
        const std::string& id) const;
    std::optional<VarType> output_type(const std::string& id, const std::string& var) const;

    int outbound_ports(const std::string& id) const;

    // Canonical interchange form: nodes in topo order, edges sorted by
    // (source, port, target).
    WorkflowDoc to_doc() const;

private:
    friend ValidatedGraph build(const WorkflowDoc&, const Catalog&);

    std::vector<Node> nodes_;
    std::vector<RawEdge> edges_;
    std::vector<std::string> topo_order_;
    IoSignature io_;
    std::string start_id_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, std::string> iteration_entry_;
    std::map<std::string, std::vector<std::pair<std::string, std::optional<VarType>>>> outputs_;
    std::map<std::string, int> port_counts_;
};

// Structural validation and admission. Check order: DuplicateId, UnknownKind,
// DanglingEdge, PortOutOfRange, ContainmentViolation, CycleDetected,
// MultipleStarts, NoEnd, Unreachable, ParamViolation. The first failing class
// is thrown with all instances of that class.
ValidatedGraph build(const WorkflowDoc& doc, const Catalog& catalog);

struct TopoResult {
    bool is_dag = false;
    std::vector<std::string> order;  // valid when is_dag
    std::vector<std::string> cycle;  // minimal cycle witness when not
};

// Deterministic order: Kahn's algorithm with ties broken by ascending node id
// (numeric comparison when both ids are numeric strings).
TopoResult topological_sort(const std::vector<std::string>& node_ids,
                            const std::vector<RawEdge>& edges);

enum class RefViolationKind {
    UnknownRefNode,
    UnknownRefVar,
    UseBeforeDef,
    CrossScopeRef,
    RefTypeMismatch,
};

struct RefViolation {
    RefViolationKind kind;
    std::string node_id;   // referencing node
    std::string token;     // the offending {{#...#}} token
    std::string detail;

    std::string to_string() const;
};

// Checks every variable reference in every param: target exists, var is
// produced, producer precedes the consumer in its scope, and no reference
// crosses an iteration boundary except the iteration's item/index and its
// input list.
std::vector<RefViolation> resolve_vars(const ValidatedGraph& graph, const Catalog& catalog);

// Inputs from the start node, outputs unioned over end nodes (topo order,
// first declaration wins on duplicate names).
IoSignature io_signature(const ValidatedGraph& graph);

}  // namespace flowkit
