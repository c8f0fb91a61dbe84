#pragma once

#include <random>
#include <string>
#include <vector>

#include "flowkit/eval_harness.hpp"
#include "flowkit/response_parser.hpp"
#include "flowkit/workflow_graph.hpp"

namespace flowkit::testing {

std::string data_dir();
std::string read_text_file(const std::string& path);

Corpus load_mini_corpus();
std::string load_perfect_response(const std::string& task_id, int round_index);

// Builds a tagged response whose node_selection matches the workflow kinds.
std::string wrap_response(const WorkflowDoc& doc, const std::string& principle);

nlohmann::json node_json(const std::string& id, const std::string& type,
                         nlohmann::json params, const char* parent_id = nullptr);
WorkflowDoc doc_from_json(nlohmann::json nodes, nlohmann::json edges);

// Linear start -> llm -> end document used across tests.
WorkflowDoc chain_doc();

// ---------------------------------------------------------------------------
// Random valid-graph generator for round-trip properties. All 20 kinds are
// reachable; produced graphs build, resolve, and emit.
// ---------------------------------------------------------------------------

struct GraphGenOptions {
    int min_middle_nodes = 2;
    int max_middle_nodes = 8;
};

WorkflowDoc random_valid_doc(std::mt19937& rng, const GraphGenOptions& options = {});

// Semantic comparison behind emit/import: node set with canonical params and
// the port-labeled edge relation.
bool graphs_equivalent(const ValidatedGraph& a, const ValidatedGraph& b,
                       const Catalog& catalog, std::string& why);

// ---------------------------------------------------------------------------
// Brute-force topological-sort oracle over all vertex orderings. Node i maps
// to the id std::to_string(i + 1).
// ---------------------------------------------------------------------------

struct TopoOracleResult {
    bool is_dag = false;
    std::vector<int> best_order;  // lexicographically-minimal valid ordering
};

class TopoOracle {
public:
    explicit TopoOracle(int n);

    // `edge_mask` indexes the n*(n-1) ordered pairs (i, j), i != j, in
    // row-major order with the diagonal skipped.
    TopoOracleResult run(std::uint64_t edge_mask) const;

    int pair_count() const { return n_ * (n_ - 1); }
    std::pair<int, int> pair_at(int slot) const;

private:
    int n_;
    std::vector<std::vector<int>> perms_;
    std::vector<std::uint64_t> forward_masks_;  // edges compatible with each perm
};

// Runs the library implementation on the same encoded digraph.
TopoResult library_topo(int n, std::uint64_t edge_mask, const TopoOracle& oracle);

}  // namespace flowkit::testing
