#include "flowkit/eval_harness.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "flowkit/util.hpp"

namespace flowkit {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

const std::set<std::string>& corpus_domains() {
    static const std::set<std::string> domains = {"Research",  "Document",  "Enterprise",
                                                  "Developer", "Education", "AIGC"};
    return domains;
}

const Task* Corpus::find_task(const std::string& id) const {
    for (const auto& t : tasks)
        if (t.id == id) return &t;
    return nullptr;
}

int Corpus::total_subtasks() const {
    int n = 0;
    for (const auto& t : tasks) n += static_cast<int>(t.rounds.size());
    return n;
}

int Corpus::total_cases() const {
    int n = 0;
    for (const auto& t : tasks)
        for (const auto& r : t.rounds) n += static_cast<int>(r.test_cases.size());
    return n;
}

namespace {

[[noreturn]] void corpus_error(const std::string& path, const std::string& message) {
    throw ParseError(ParseError::Kind::SchemaViolation, path, message + " at " + path);
}

RefVar parse_ref_var(const json& v, const std::string& path) {
    if (!v.is_object() || !v.contains("name") || !v["name"].is_string())
        corpus_error(path, "a reference variable needs a string name");
    if (!v.contains("type") || !v["type"].is_string())
        corpus_error(path + ".type", "a type string is required");
    auto type = VarType::parse(v["type"].get<std::string>());
    if (!type) corpus_error(path + ".type", "unknown type '" + v["type"].get<std::string>() + "'");
    RefVar out{v["name"].get<std::string>(), *type, {}};
    if (v.contains("extensions")) {
        if (!v["extensions"].is_array())
            corpus_error(path + ".extensions", "extensions must be a list");
        for (const auto& e : v["extensions"]) out.extensions.push_back(e.get<std::string>());
    }
    return out;
}

}  // namespace

Corpus parse_corpus(const json& doc) {
    if (!doc.is_object() || !doc.contains("tasks") || !doc["tasks"].is_array())
        corpus_error("tasks", "corpus needs a tasks array");

    const Catalog& catalog = default_catalog();
    Corpus corpus;
    for (std::size_t ti = 0; ti < doc["tasks"].size(); ++ti) {
        const json& t = doc["tasks"][ti];
        std::string tpath = "tasks[" + std::to_string(ti) + "]";
        Task task;
        if (!t.contains("id") || !t["id"].is_string())
            corpus_error(tpath + ".id", "a task id is required");
        task.id = t["id"].get<std::string>();
        if (!t.contains("domain") || !t["domain"].is_string() ||
            !corpus_domains().count(t["domain"].get<std::string>()))
            corpus_error(tpath + ".domain", "domain must be one of the six labels");
        task.domain = t["domain"].get<std::string>();
        if (!t.contains("rounds") || !t["rounds"].is_array() || t["rounds"].size() < 2 ||
            t["rounds"].size() > 4)
            corpus_error(tpath + ".rounds", "tasks carry 2 to 4 rounds");

        for (std::size_t ri = 0; ri < t["rounds"].size(); ++ri) {
            const json& r = t["rounds"][ri];
            std::string rpath = tpath + ".rounds[" + std::to_string(ri) + "]";
            Round round;
            if (!r.contains("instruction") || !r["instruction"].is_string())
                corpus_error(rpath + ".instruction", "an instruction is required");
            round.instruction = r["instruction"].get<std::string>();

            if (!r.contains("reference_vars") || !r["reference_vars"].is_object())
                corpus_error(rpath + ".reference_vars", "reference_vars is required");
            const json& rv = r["reference_vars"];
            std::set<std::string> seen;
            for (const char* side : {"inputs", "outputs"}) {
                if (!rv.contains(side) || !rv[side].is_array())
                    corpus_error(rpath + ".reference_vars." + side, "a list is required");
                for (std::size_t vi = 0; vi < rv[side].size(); ++vi) {
                    RefVar var = parse_ref_var(
                        rv[side][vi],
                        rpath + ".reference_vars." + side + "[" + std::to_string(vi) + "]");
                    if (!seen.insert(std::string(side) + ":" + var.name).second)
                        corpus_error(rpath + ".reference_vars", "duplicate variable name '" +
                                                                    var.name + "'");
                    (std::string(side) == "inputs" ? round.reference_vars.inputs
                                                   : round.reference_vars.outputs)
                        .push_back(std::move(var));
                }
            }

            if (r.contains("key_nodes")) {
                if (!r["key_nodes"].is_array())
                    corpus_error(rpath + ".key_nodes", "key_nodes must be a list");
                for (const auto& k : r["key_nodes"]) {
                    if (!k.is_string() || !catalog.find(k.get<std::string>()))
                        corpus_error(rpath + ".key_nodes",
                                     "unknown key node '" + k.dump() + "'");
                    round.key_nodes.insert(catalog.canonical_kind_id(k.get<std::string>()));
                }
            }

            if (!r.contains("test_cases") || !r["test_cases"].is_array() ||
                r["test_cases"].empty())
                corpus_error(rpath + ".test_cases", "at least one test case is required");
            for (std::size_t ci = 0; ci < r["test_cases"].size(); ++ci) {
                const json& c = r["test_cases"][ci];
                std::string cpath = rpath + ".test_cases[" + std::to_string(ci) + "]";
                TestCase test_case;
                if (!c.contains("input") || !c["input"].is_object())
                    corpus_error(cpath + ".input", "a case input object is required");
                for (const auto& [name, value] : c["input"].items()) {
                    bool declared = std::any_of(
                        round.reference_vars.inputs.begin(), round.reference_vars.inputs.end(),
                        [&](const RefVar& v) { return v.name == name; });
                    if (!declared)
                        corpus_error(cpath + ".input." + name,
                                     "input is not declared in reference_vars");
                    try {
                        test_case.input[name] = TypedValue::from_json(value);
                    } catch (const ExecError& e) {
                        corpus_error(cpath + ".input." + name, e.what());
                    }
                }
                if (c.contains("ref_output") && !c["ref_output"].is_null()) {
                    if (!c["ref_output"].is_string())
                        corpus_error(cpath + ".ref_output", "ref_output must be a string");
                    test_case.ref_output = c["ref_output"].get<std::string>();
                }
                round.test_cases.push_back(std::move(test_case));
            }

            if (r.contains("scripts")) {
                try {
                    round.scripts = ScriptTable::from_json(r["scripts"]);
                } catch (const std::exception& e) {
                    corpus_error(rpath + ".scripts", e.what());
                }
            }
            task.rounds.push_back(std::move(round));
        }
        corpus.tasks.push_back(std::move(task));
    }
    return corpus;
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) corpus_error(path, "corpus file is not readable");
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw ParseError(ParseError::Kind::JsonSyntax, path, e.what());
    }
    return parse_corpus(doc);
}

// ---------------------------------------------------------------------------
// Rule judge
// ---------------------------------------------------------------------------

std::set<std::string> RuleJudge::canonical_set(const std::vector<std::string>& tokens) const {
    std::set<std::string> out;
    for (const auto& t : tokens) {
        if (const NodeSpec* spec = catalog_.find(t))
            out.insert(kind_id(spec->kind));
        else
            out.insert(to_lower(trim(t)));
    }
    return out;
}

JudgeVerdict RuleJudge::consistency(const ParsedResponse& response,
                                    const std::set<std::string>& workflow_kinds) const {
    std::set<std::string> declared = canonical_set(response.node_selection);

    // Rule 2a approximation: kinds used by the workflow must be mentioned in
    // the selection or in the stated principle.
    std::string principle = to_lower(response.design_principle);
    for (const auto& kind : workflow_kinds) {
        if (declared.count(kind)) continue;
        if (principle.find(kind) != std::string::npos) continue;
        if (kind == "template-transform" && principle.find("template") != std::string::npos)
            continue;
        return {false, "workflow uses '" + kind + "' but neither the node selection nor the "
                       "design principle mentions it"};
    }

    // Rule 2b: exact bidirectional set match.
    for (const auto& kind : workflow_kinds)
        if (!declared.count(kind))
            return {false, "workflow uses '" + kind + "' absent from node_selection"};
    for (const auto& kind : declared)
        if (!workflow_kinds.count(kind))
            return {false, "node_selection declares '" + kind + "' absent from the workflow"};
    return {true, "selection matches the workflow node set"};
}

JudgeVerdict RuleJudge::key_node_coverage(const std::set<std::string>& key_nodes,
                                          const std::vector<std::string>& selection) const {
    std::set<std::string> declared = canonical_set(selection);
    for (const auto& key : key_nodes) {
        std::string canonical = catalog_.find(key) ? catalog_.canonical_kind_id(key) : key;
        if (!declared.count(canonical))
            return {false, "required node '" + canonical + "' is missing from node_selection"};
    }
    return {true, "all required nodes are declared"};
}

namespace {

std::string normalize_text(const std::string& s) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : s) {
        char lc = (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a')
                                         : static_cast<char>(c);
        if (lc == ' ' || lc == '\t' || lc == '\n' || lc == '\r') {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += lc;
    }
    return out;
}

}  // namespace

JudgeVerdict RuleJudge::semantic_resolve(const std::vector<std::string>& instructions,
                                         const std::string& text_output,
                                         const nlohmann::json& input,
                                         const std::optional<std::string>& ref_output) const {
    (void)instructions;
    (void)input;
    if (!ref_output || ref_output->empty())
        return {true, "no reference answer; mechanical checks already passed"};
    std::string out = normalize_text(text_output);
    std::string ref = normalize_text(*ref_output);
    if (out.empty()) return {false, "empty text output against a non-empty reference"};
    if (out.find(ref) != std::string::npos || ref.find(out) != std::string::npos)
        return {true, "output and reference agree under containment"};
    return {false, "output does not contain the reference answer (nor vice versa)"};
}

// ---------------------------------------------------------------------------
// Provider judge
// ---------------------------------------------------------------------------

ProviderJudge::ProviderJudge(JudgeModelFn model, std::string pass_template,
                             std::string resolve_template, const Catalog& catalog)
    : model_(std::move(model)),
      pass_template_(std::move(pass_template)),
      resolve_template_(std::move(resolve_template)),
      rules_(catalog) {}

JudgeVerdict ProviderJudge::parse_judge_reply(const std::string& reply) {
    auto extract = [&](const std::string& tag) -> std::optional<std::string> {
        std::string open = "<" + tag + ">";
        std::string close = "</" + tag + ">";
        auto b = reply.find(open);
        if (b == std::string::npos) return std::nullopt;
        auto e = reply.find(close, b + open.size());
        if (e == std::string::npos) return std::nullopt;
        return trim(reply.substr(b + open.size(), e - b - open.size()));
    };
    auto result = extract("result");
    if (!result)
        return {false, "judge reply lacks a <result> section", reply};
    std::string verdict = to_lower(*result);
    if (verdict != "true" && verdict != "false")
        return {false, "judge result is neither true nor false", reply};
    return {verdict == "true", extract("reason").value_or(""), reply};
}

namespace {

std::string fill_placeholder(std::string text, const std::string& key,
                             const std::string& value) {
    std::string needle = "{{" + key + "}}";
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        text.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return text;
}

}  // namespace

JudgeVerdict ProviderJudge::consistency(const ParsedResponse& response,
                                        const std::set<std::string>& workflow_kinds) const {
    json gt = json::array();  // coverage is asked separately
    std::string selection;
    for (const auto& t : response.node_selection) selection += t + "\n";
    std::string prompt = pass_template_;
    prompt = fill_placeholder(prompt, "node_selection", selection);
    prompt = fill_placeholder(prompt, "design_principle", response.design_principle);
    prompt = fill_placeholder(prompt, "workflow", response.workflow_text);
    prompt = fill_placeholder(prompt, "gt_nodes", gt.dump());
    (void)workflow_kinds;
    return parse_judge_reply(model_(prompt));
}

JudgeVerdict ProviderJudge::key_node_coverage(const std::set<std::string>& key_nodes,
                                              const std::vector<std::string>& selection) const {
    // Mechanical where the rules fully specify the check.
    return rules_.key_node_coverage(key_nodes, selection);
}

JudgeVerdict ProviderJudge::semantic_resolve(const std::vector<std::string>& instructions,
                                             const std::string& text_output,
                                             const nlohmann::json& input,
                                             const std::optional<std::string>& ref_output) const {
    json queries = json::array();
    for (const auto& i : instructions) queries.push_back(i);
    std::string prompt = resolve_template_;
    prompt = fill_placeholder(prompt, "queries", queries.dump(2));
    prompt = fill_placeholder(prompt, "input", input.dump(2));
    prompt = fill_placeholder(prompt, "output", text_output);
    prompt = fill_placeholder(prompt, "reference_answer", ref_output.value_or(""));
    return parse_judge_reply(model_(prompt));
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

namespace {

json step_to_json(const StepResult& s) {
    const char* status = s.status == StepStatus::Passed     ? "passed"
                         : s.status == StepStatus::Failed   ? "failed"
                                                            : "not-evaluated";
    json j = {{"status", status}};
    if (!s.detail.empty()) j["detail"] = s.detail;
    return j;
}

}  // namespace

json PassReport::to_json() const {
    static const char* names[4] = {"format", "conversion_import", "variable_consistency",
                                   "logical_validity"};
    json steps_json = json::object();
    for (int i = 0; i < 4; ++i) steps_json[names[i]] = step_to_json(steps[i]);
    json j = {{"pass", pass}, {"steps", steps_json}};
    if (first_failing_step) j["first_failing_step"] = *first_failing_step;
    return j;
}

json ResolveReport::to_json() const {
    static const char* names[2] = {"execution", "output_validation"};
    json steps_json = json::object();
    for (int i = 0; i < 2; ++i) steps_json[names[i]] = step_to_json(steps[i]);
    json j = {{"resolve", resolve}, {"steps", steps_json}};
    if (first_failing_step) j["first_failing_step"] = *first_failing_step;
    return j;
}

bool signatures_match(const IoSignature& got, const ReferenceVars& want, std::string& detail) {
    auto render_side = [](std::vector<std::pair<std::string, std::string>> items) {
        std::sort(items.begin(), items.end());
        std::string s;
        for (const auto& [name, type] : items) {
            if (!s.empty()) s += ", ";
            s += name + ": " + type;
        }
        return "{" + s + "}";
    };
    auto to_pairs = [](const std::vector<VarDecl>& decls) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& d : decls) out.emplace_back(d.name, d.type.to_string());
        std::sort(out.begin(), out.end());
        return out;
    };
    auto ref_pairs = [](const std::vector<RefVar>& refs) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& r : refs) out.emplace_back(r.name, r.type.to_string());
        std::sort(out.begin(), out.end());
        return out;
    };

    auto got_in = to_pairs(got.inputs);
    auto want_in = ref_pairs(want.inputs);
    auto got_out = to_pairs(got.outputs);
    auto want_out = ref_pairs(want.outputs);
    if (got_in == want_in && got_out == want_out) return true;
    detail = "declared inputs " + render_side(got_in) + " / outputs " + render_side(got_out) +
             " do not match reference inputs " + render_side(want_in) + " / outputs " +
             render_side(want_out);
    return false;
}

PassReport pass_pipeline(const std::string& response_text, const Round& round,
                         const Catalog& catalog, const Judge& judge) {
    PassReport report;
    auto fail = [&](int step, const std::string& detail) {
        report.steps[static_cast<std::size_t>(step - 1)] = {StepStatus::Failed, detail};
        report.first_failing_step = step;
        report.pass = false;
        return report;
    };

    // Step 1: format check (tags present, JSON parsable)
    ParsedResponse parsed;
    try {
        parsed = extract_sections(response_text);
        parsed.workflow_doc = decode_workflow(parsed.workflow_text);
    } catch (const ParseError& e) {
        return fail(1, e.what());
    }
    report.steps[0] = {StepStatus::Passed, ""};

    // Step 2: conversion & import
    ValidatedGraph graph;
    try {
        graph = build(*parsed.workflow_doc, catalog);
        auto violations = resolve_vars(graph, catalog);
        if (!violations.empty()) {
            std::string detail = violations.front().to_string();
            if (violations.size() > 1)
                detail += " (+" + std::to_string(violations.size() - 1) + " more)";
            return fail(2, detail);
        }
        std::string yaml = emit(graph, AppMeta{"workflow", ""}, catalog);
        graph = import_check(yaml, catalog);
    } catch (const Error& e) {
        return fail(2, e.what());
    }
    report.steps[1] = {StepStatus::Passed, ""};

    // Step 3: variable consistency
    std::string mismatch;
    if (!signatures_match(io_signature(graph), round.reference_vars, mismatch))
        return fail(3, mismatch);
    report.steps[2] = {StepStatus::Passed, ""};

    // Step 4: logical validity
    std::set<std::string> workflow_kinds;
    for (const auto& n : graph.nodes()) workflow_kinds.insert(kind_id(n.kind));
    JudgeVerdict consistency = judge.consistency(parsed, workflow_kinds);
    if (!consistency.ok) return fail(4, "consistency: " + consistency.reason);
    JudgeVerdict coverage = judge.key_node_coverage(round.key_nodes, parsed.node_selection);
    if (!coverage.ok) return fail(4, "key nodes: " + coverage.reason);
    report.steps[3] = {StepStatus::Passed, ""};

    report.pass = true;
    return report;
}

ResolveReport resolve_pipeline(const ValidatedGraph& graph,
                               const std::vector<std::string>& instructions, const Round& round,
                               const TestCase& test_case, const HandlerRegistry& handlers,
                               const Catalog& catalog, const Judge& judge) {
    ResolveReport report;
    auto fail = [&](int step, const std::string& detail) {
        report.steps[static_cast<std::size_t>(step - 1)] = {StepStatus::Failed, detail};
        report.first_failing_step = step;
        report.resolve = false;
        return report;
    };

    // Step 1: execution check
    ExecOutput output;
    try {
        output = execute(graph, test_case.input, handlers, catalog);
    } catch (const ExecError& e) {
        return fail(1, e.what());
    }
    if (output.empty()) return fail(1, "execution produced no outputs");
    report.steps[0] = {StepStatus::Passed, ""};

    // Step 2: output validation, files first
    for (const auto& ref : round.reference_vars.outputs) {
        if (!ref.type.is_file_kind()) continue;
        auto it = output.file_outputs.find(ref.name);
        if (it == output.file_outputs.end())
            return fail(2, "file output '" + ref.name + "' was not produced");
        const auto& files = it->second.files;
        if (files.empty()) return fail(2, "file output '" + ref.name + "' is empty");
        for (const auto& f : files) {
            if (!ref.extensions.empty() &&
                std::find(ref.extensions.begin(), ref.extensions.end(), to_lower(f.extension)) ==
                    ref.extensions.end())
                return fail(2, "file output '" + ref.name + "' has extension '" + f.extension +
                                   "', expected one of " + [&] {
                                       std::string s;
                                       for (const auto& e : ref.extensions)
                                           s += (s.empty() ? "" : ", ") + e;
                                       return s;
                                   }());
            if (f.media_kind != media_kind_for_extension(f.extension))
                return fail(2, "file output '" + ref.name + "' media kind '" + f.media_kind +
                                   "' does not match its extension");
        }
    }

    if (output.text_outputs.empty()) {
        // all-file workflows resolve mechanically once the file check passed
        report.steps[1] = {StepStatus::Passed, "file outputs only"};
        report.resolve = true;
        return report;
    }

    std::string text;
    if (output.text_outputs.size() == 1) {
        text = output.text_outputs.begin()->second.render();
    } else {
        for (const auto& [name, value] : output.text_outputs) {
            if (!text.empty()) text += "\n";
            text += name + ": " + value.render();
        }
    }
    json input_json = json::object();
    for (const auto& [name, value] : test_case.input) {
        if (value.type.is_file_kind()) continue;  // file inputs are judged mechanically
        input_json[name] = value.to_json();
    }
    JudgeVerdict verdict =
        judge.semantic_resolve(instructions, text, input_json, test_case.ref_output);
    if (!verdict.ok) return fail(2, "semantic: " + verdict.reason);
    report.steps[1] = {StepStatus::Passed, verdict.reason};
    report.resolve = true;
    return report;
}

VerifyFn make_retry_verifier(const Round& round, const Catalog& catalog, const Judge& judge) {
    static const char* stage_names[4] = {"format", "conversion-import", "variable-consistency",
                                         "logical-validity"};
    const Round* round_ptr = &round;
    const Catalog* catalog_ptr = &catalog;
    const Judge* judge_ptr = &judge;
    return [round_ptr, catalog_ptr, judge_ptr](const ParsedResponse& response) {
        PassReport report =
            pass_pipeline(render_response(response), *round_ptr, *catalog_ptr, *judge_ptr);
        VerifyOutcome out;
        out.ok = report.pass;
        if (!report.pass && report.first_failing_step) {
            out.failing_stage = stage_names[*report.first_failing_step - 1];
            out.detail = report.steps[static_cast<std::size_t>(*report.first_failing_step - 1)].detail;
        }
        return out;
    };
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

json Metrics::to_json() const {
    auto bucket_json = [](const MetricsBucket& b) {
        return json{{"subtasks", b.subtasks},
                    {"passed_subtasks", b.passed_subtasks},
                    {"cases", b.cases},
                    {"resolved_cases", b.resolved_cases},
                    {"pass_rate", b.pass_rate()},
                    {"resolve_rate", b.resolve_rate()}};
    };
    json domains = json::object();
    for (const auto& [name, bucket] : by_domain) domains[name] = bucket_json(bucket);
    json rounds = json::object();
    for (const auto& [index, bucket] : by_round)
        rounds["round_" + std::to_string(index + 1)] = bucket_json(bucket);
    return json{{"overall", bucket_json(overall)},
                {"by_domain", domains},
                {"by_round", rounds}};
}

std::string Metrics::per_round_csv() const {
    std::ostringstream out;
    out << "round,pass_rate,resolve_rate\n";
    char buf[64];
    for (const auto& [index, bucket] : by_round) {
        std::snprintf(buf, sizeof(buf), "%d,%.2f,%.2f\n", index + 1, bucket.pass_rate(),
                      bucket.resolve_rate());
        out << buf;
    }
    return out.str();
}

Metrics compute_metrics(const std::vector<SubtaskResult>& results, const Corpus& corpus,
                        bool allow_partial) {
    std::map<std::pair<std::string, int>, const SubtaskResult*> by_subtask;
    for (const auto& r : results) {
        auto key = std::make_pair(r.task_id, r.round_index);
        if (by_subtask.count(key))
            throw IncompleteCoverageError("duplicate result for task '" + r.task_id +
                                          "' round " + std::to_string(r.round_index + 1));
        by_subtask[key] = &r;
    }

    Metrics metrics;
    for (const auto& task : corpus.tasks) {
        for (std::size_t ri = 0; ri < task.rounds.size(); ++ri) {
            const Round& round = task.rounds[ri];
            auto it = by_subtask.find({task.id, static_cast<int>(ri)});
            if (it == by_subtask.end()) {
                if (!allow_partial)
                    throw IncompleteCoverageError("no result for task '" + task.id +
                                                  "' round " + std::to_string(ri + 1));
                continue;
            }
            const SubtaskResult& result = *it->second;
            int case_count = static_cast<int>(round.test_cases.size());
            int resolved = 0;
            if (result.pass.pass)
                for (const auto& c : result.cases) resolved += c.resolve ? 1 : 0;

            for (MetricsBucket* bucket :
                 {&metrics.overall, &metrics.by_domain[task.domain],
                  &metrics.by_round[static_cast<int>(ri)]}) {
                bucket->subtasks += 1;
                bucket->passed_subtasks += result.pass.pass ? 1 : 0;
                bucket->cases += case_count;
                bucket->resolved_cases += resolved;
            }
        }
    }
    return metrics;
}

AveragedMetrics average_runs(const std::vector<Metrics>& runs) {
    AveragedMetrics avg;
    avg.runs = static_cast<int>(runs.size());
    if (runs.empty()) return avg;
    for (const auto& m : runs) {
        avg.pass_rate += m.overall.pass_rate();
        avg.resolve_rate += m.overall.resolve_rate();
    }
    avg.pass_rate /= runs.size();
    avg.resolve_rate /= runs.size();
    return avg;
}

SubtaskResult evaluate_subtask(const std::string& task_id, const std::string& domain,
                               int round_index, const std::string& response_text,
                               const std::vector<std::string>& instructions, const Round& round,
                               const Catalog& catalog, const Judge& judge,
                               const HandlerRegistry& base_handlers) {
    SubtaskResult result;
    result.task_id = task_id;
    result.domain = domain;
    result.round_index = round_index;
    result.pass = pass_pipeline(response_text, round, catalog, judge);
    if (!result.pass.pass) return result;

    HandlerRegistry handlers = base_handlers;
    handlers.scripts.merge(round.scripts);

    ParsedResponse parsed = extract_sections(response_text);
    ValidatedGraph graph = build(decode_workflow(parsed.workflow_text), catalog);
    for (const auto& test_case : round.test_cases)
        result.cases.push_back(resolve_pipeline(graph, instructions, round, test_case, handlers,
                                                catalog, judge));
    return result;
}

}  // namespace flowkit
