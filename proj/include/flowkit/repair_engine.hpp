#pragma once

#include <functional>
#include <string>
#include <vector>

#include "flowkit/node_catalog.hpp"
#include "flowkit/response_parser.hpp"
#include "flowkit/workflow_graph.hpp"

namespace flowkit {

struct RepairOutcome {
    ParsedResponse repaired;
    std::vector<std::string> applied;  // ids: fence, json, topology, node-selection
    bool changed = false;
};

class UnrepairableError : public Error {
public:
    explicit UnrepairableError(const std::string& detail)
        : Error("Unrepairable", "auto-repair could not recover the workflow: " + detail) {}
};

// Strips code fences from the workflow section (the whole-response wrap case
// is handled inside the attempt pipeline, before tag extraction).
RepairOutcome repair_fences(const ParsedResponse& response);

// Lenient re-decode: trailing commas, single quotes, bare keys, line comments,
// applied cumulatively until the text parses. Identity on already-valid JSON
// and on texts none of the stages can fix.
std::string repair_json(const std::string& workflow_text);

// Cycle and containment recovery: deletes iteration/iteration-start pair
// edges and DFS back edges (children visited by ascending port, then target
// id). Never adds edges or removes nodes; at most 3 passes.
WorkflowDoc repair_topology(const WorkflowDoc& doc, const Catalog& catalog);

// Rewrites node_selection to the exact canonical kind set used by the
// workflow (the workflow is the executable artifact and wins).
RepairOutcome repair_node_selection(const ParsedResponse& response, const Catalog& catalog);

struct VerifyOutcome {
    bool ok = false;
    std::string failing_stage;  // empty when ok
    std::string detail;
};

using VerifyFn = std::function<VerifyOutcome(const ParsedResponse&)>;

struct AttemptRecord {
    int index = 0;
    std::vector<std::string> repairs;
    std::string stage;  // "verified" or the failing stage
    std::string detail;

    nlohmann::json to_json() const;
    std::string to_line() const;
};

// Fresh model output per call; non-null prior carries the previous failure.
using GenerateFn = std::function<std::string(int attempt, const AttemptRecord* prior)>;

struct AttemptOutcome {
    ParsedResponse response;
    std::vector<std::string> repairs;
    bool ok = false;
    std::string stage;
    std::string detail;
};

// One attempt: extract -> fence repair -> decode (json repair on failure) ->
// build (topology repair on failure) -> node-selection repair -> verify.
AttemptOutcome process_attempt(const std::string& raw_response, const Catalog& catalog,
                               const VerifyFn& verify);

struct RetryOptions {
    int max_attempts = 5;
};

struct RetryResult {
    ParsedResponse response;  // first verified, else the last attempt
    bool verified = false;
    std::vector<AttemptRecord> log;
};

RetryResult verified_retry(const GenerateFn& generate, const Catalog& catalog,
                           const VerifyFn& verify, RetryOptions options = {});

}  // namespace flowkit
