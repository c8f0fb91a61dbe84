#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flowkit/flow_executor.hpp"
#include "flowkit/node_catalog.hpp"
#include "flowkit/repair_engine.hpp"
#include "flowkit/response_parser.hpp"
#include "flowkit/workflow_graph.hpp"
#include "flowkit/yaml_emitter.hpp"

namespace flowkit {

// ---------------------------------------------------------------------------
// Corpus data model
// ---------------------------------------------------------------------------

struct RefVar {
    std::string name;
    VarType type;
    std::vector<std::string> extensions;  // accepted file extensions, optional
};

struct ReferenceVars {
    std::vector<RefVar> inputs;
    std::vector<RefVar> outputs;
};

struct TestCase {
    std::map<std::string, TypedValue> input;
    std::optional<std::string> ref_output;
};

struct Round {
    std::string instruction;
    ReferenceVars reference_vars;
    std::set<std::string> key_nodes;
    std::vector<TestCase> test_cases;
    ScriptTable scripts;
};

struct Task {
    std::string id;
    std::string domain;  // Research | Document | Enterprise | Developer | Education | AIGC
    std::vector<Round> rounds;
};

struct Corpus {
    std::vector<Task> tasks;

    const Task* find_task(const std::string& id) const;
    int total_subtasks() const;
    int total_cases() const;
};

const std::set<std::string>& corpus_domains();

Corpus parse_corpus(const nlohmann::json& doc);
Corpus load_corpus(const std::string& path);

// ---------------------------------------------------------------------------
// Judges
// ---------------------------------------------------------------------------

struct JudgeVerdict {
    bool ok = false;
    std::string reason;
    std::string transcript;  // raw model output for provider-backed judges
};

class Judge {
public:
    virtual ~Judge() = default;

    // CoT consistency: declared selection vs the kinds actually used.
    virtual JudgeVerdict consistency(const ParsedResponse& response,
                                     const std::set<std::string>& workflow_kinds) const = 0;
    virtual JudgeVerdict key_node_coverage(const std::set<std::string>& key_nodes,
                                           const std::vector<std::string>& selection) const = 0;
    virtual JudgeVerdict semantic_resolve(const std::vector<std::string>& instructions,
                                          const std::string& text_output,
                                          const nlohmann::json& input,
                                          const std::optional<std::string>& ref_output) const = 0;
};

// Deterministic mechanical judge: subset check for key nodes, exact
// bidirectional set matching (case folded, template alias honored), and
// containment-normalized matching for text outputs.
class RuleJudge : public Judge {
public:
    explicit RuleJudge(const Catalog& catalog) : catalog_(catalog) {}

    JudgeVerdict consistency(const ParsedResponse& response,
                             const std::set<std::string>& workflow_kinds) const override;
    JudgeVerdict key_node_coverage(const std::set<std::string>& key_nodes,
                                   const std::vector<std::string>& selection) const override;
    JudgeVerdict semantic_resolve(const std::vector<std::string>& instructions,
                                  const std::string& text_output, const nlohmann::json& input,
                                  const std::optional<std::string>& ref_output) const override;

    std::set<std::string> canonical_set(const std::vector<std::string>& tokens) const;

private:
    const Catalog& catalog_;
};

// Provider-backed judge behind the same contract; prompts are rendered from
// the shipped templates and the <result> tag is parsed strictly.
using JudgeModelFn = std::function<std::string(const std::string& prompt)>;

class ProviderJudge : public Judge {
public:
    ProviderJudge(JudgeModelFn model, std::string pass_template, std::string resolve_template,
                  const Catalog& catalog);

    JudgeVerdict consistency(const ParsedResponse& response,
                             const std::set<std::string>& workflow_kinds) const override;
    JudgeVerdict key_node_coverage(const std::set<std::string>& key_nodes,
                                   const std::vector<std::string>& selection) const override;
    JudgeVerdict semantic_resolve(const std::vector<std::string>& instructions,
                                  const std::string& text_output, const nlohmann::json& input,
                                  const std::optional<std::string>& ref_output) const override;

    static JudgeVerdict parse_judge_reply(const std::string& reply);

private:
    JudgeModelFn model_;
    std::string pass_template_;
    std::string resolve_template_;
    RuleJudge rules_;  // pass-stage rules 1/2b stay mechanical
};

// ---------------------------------------------------------------------------
// Staged pipelines
// ---------------------------------------------------------------------------

enum class StepStatus { Passed, Failed, NotEvaluated };

struct StepResult {
    StepStatus status = StepStatus::NotEvaluated;
    std::string detail;
};

struct PassReport {
    // 1 format, 2 conversion & import, 3 variable consistency, 4 logical validity
    std::array<StepResult, 4> steps;
    bool pass = false;
    std::optional<int> first_failing_step;  // 1-based

    nlohmann::json to_json() const;
};

struct ResolveReport {
    // 1 execution, 2 output validation
    std::array<StepResult, 2> steps;
    bool resolve = false;
    std::optional<int> first_failing_step;

    nlohmann::json to_json() const;
};

PassReport pass_pipeline(const std::string& response_text, const Round& round,
                         const Catalog& catalog, const Judge& judge);

ResolveReport resolve_pipeline(const ValidatedGraph& graph,
                               const std::vector<std::string>& instructions, const Round& round,
                               const TestCase& test_case, const HandlerRegistry& handlers,
                               const Catalog& catalog, const Judge& judge);

// Name-and-type exact comparison against the reference signature.
bool signatures_match(const IoSignature& got, const ReferenceVars& want, std::string& detail);

// Adapter for repair_engine::verified_retry: full Algorithm-1 verification.
VerifyFn make_retry_verifier(const Round& round, const Catalog& catalog, const Judge& judge);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct SubtaskResult {
    std::string task_id;
    std::string domain;
    int round_index = 0;  // 0-based
    PassReport pass;
    std::vector<ResolveReport> cases;  // empty when the pass stage failed
};

struct MetricsBucket {
    int subtasks = 0;
    int passed_subtasks = 0;
    int cases = 0;
    int resolved_cases = 0;

    double pass_rate() const { return subtasks ? 100.0 * passed_subtasks / subtasks : 0.0; }
    double resolve_rate() const { return cases ? 100.0 * resolved_cases / cases : 0.0; }
};

struct Metrics {
    MetricsBucket overall;
    std::map<std::string, MetricsBucket> by_domain;
    std::map<int, MetricsBucket> by_round;  // 0-based round index

    nlohmann::json to_json() const;
    std::string per_round_csv() const;
};

class IncompleteCoverageError : public Error {
public:
    explicit IncompleteCoverageError(const std::string& detail)
        : Error("IncompleteCoverage", detail) {}
};

// Failed-pass subtasks contribute every test case as unresolved.
Metrics compute_metrics(const std::vector<SubtaskResult>& results, const Corpus& corpus,
                        bool allow_partial = false);

struct AveragedMetrics {
    double pass_rate = 0;
    double resolve_rate = 0;
    int runs = 0;
};

AveragedMetrics average_runs(const std::vector<Metrics>& runs);

// Full evaluation of one response against one round (pass stage, then the
// resolve stage for each test case when the pass stage succeeds).
SubtaskResult evaluate_subtask(const std::string& task_id, const std::string& domain,
                               int round_index, const std::string& response_text,
                               const std::vector<std::string>& instructions, const Round& round,
                               const Catalog& catalog, const Judge& judge,
                               const HandlerRegistry& base_handlers);

}  // namespace flowkit
