#pragma once

#include <map>
#include <string>

#include "flowkit/node_catalog.hpp"
#include "flowkit/workflow_graph.hpp"

namespace flowkit {

struct AppMeta {
    std::string name = "workflow";
    std::string description;
};

struct NodePosition {
    long long x = 0;
    long long y = 0;  // relative to the parent container for iteration children
};

// Layered layout: x grows with longest-path depth from the scope entry, y with
// the stable index inside a layer. Absolute positions are injective.
std::map<std::string, NodePosition> layout(const ValidatedGraph& graph);

class EmitError : public Error {
public:
    EmitError(std::string node_id, const std::string& reason)
        : Error("EmitUnsupported", "node " + node_id + ": " + reason), node_id_(std::move(node_id)) {}

    const std::string& node_id() const { return node_id_; }

private:
    std::string node_id_;
};

class ImportError : public Error {
public:
    ImportError(std::string stage, const std::string& detail)
        : Error("ImportFailure", "[" + stage + "] " + detail), stage_(std::move(stage)) {}

    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

// Compiles a validated, reference-resolved graph to platform YAML. Pure:
// identical (graph, meta) pairs produce byte-identical output.
std::string emit(const ValidatedGraph& graph, const AppMeta& meta, const Catalog& catalog);

// Parses platform YAML back to the interchange form. Exposed for fixtures.
WorkflowDoc lower_platform_yaml(const std::string& yaml_text, const Catalog& catalog);

// Stand-in for a live platform import: parse, lower, build, resolve.
ValidatedGraph import_check(const std::string& yaml_text, const Catalog& catalog);

}  // namespace flowkit
