#include "flowkit/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <httplib.h>

#include "flowkit/agent_session.hpp"
#include "flowkit/eval_harness.hpp"
#include "flowkit/repair_engine.hpp"
#include "flowkit/util.hpp"
#include "flowkit/yaml_emitter.hpp"

namespace flowkit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::optional<std::string> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

bool write_file(const std::string& path, const std::string& content) {
    fs::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) return false;
    out << content;
    return true;
}

// A round context file: {"instruction", "reference_vars", "key_nodes", ...}
// using the corpus round schema.
std::optional<Round> load_round_file(const std::string& path, std::ostream& err) {
    auto text = read_file(path);
    if (!text) {
        err << "error: cannot read round file: " << path << "\n";
        return std::nullopt;
    }
    try {
        json round_json = json::parse(*text);
        json corpus_doc = {
            {"tasks", json::array({json{{"id", "cli"},
                                        {"domain", "Developer"},
                                        {"rounds", json::array({round_json, round_json})}}})}};
        Corpus corpus = parse_corpus(corpus_doc);
        return corpus.tasks.front().rounds.front();
    } catch (const std::exception& e) {
        err << "error: invalid round file: " << e.what() << "\n";
        return std::nullopt;
    }
}

// Accepts a tagged response file or a bare workflow JSON file.
std::optional<ParsedResponse> load_response_or_workflow(const std::string& text,
                                                        std::string& stage_error) {
    ParsedResponse parsed;
    if (text.find("<workflow>") != std::string::npos) {
        try {
            parsed = extract_sections(text);
        } catch (const ParseError& e) {
            stage_error = e.what();
            return std::nullopt;
        }
    } else {
        parsed.workflow_text = text;
        parsed.design_principle = "";
    }
    try {
        parsed.workflow_doc = decode_workflow(parsed.workflow_text);
    } catch (const ParseError& e) {
        stage_error = e.what();
        return std::nullopt;
    }
    return parsed;
}

std::map<std::string, TypedValue> parse_inputs(const json& doc) {
    std::map<std::string, TypedValue> inputs;
    for (const auto& [name, value] : doc.items()) inputs[name] = TypedValue::from_json(value);
    return inputs;
}

struct ResponseSource {
    // run -> task -> 0-based round -> response text
    std::vector<std::map<std::string, std::map<int, std::string>>> runs;
};

bool collect_responses_dir(const std::string& dir, ResponseSource& source, std::ostream& err) {
    std::map<std::string, std::map<int, std::string>> run;
    if (!fs::is_directory(dir)) {
        err << "error: not a directory: " << dir << "\n";
        return false;
    }
    for (const auto& task_entry : fs::directory_iterator(dir)) {
        if (!task_entry.is_directory()) continue;
        std::string task_id = task_entry.path().filename().string();
        for (const auto& file : fs::directory_iterator(task_entry.path())) {
            std::string name = file.path().filename().string();
            if (name.rfind("round_", 0) != 0) continue;
            auto dot = name.find('.');
            int round = 0;
            try {
                round = std::stoi(name.substr(6, dot - 6));
            } catch (...) {
                continue;
            }
            if (auto text = read_file(file.path().string()))
                run[task_id][round - 1] = *text;
        }
    }
    source.runs.push_back(std::move(run));
    return true;
}

bool collect_journals_dir(const std::string& dir, ResponseSource& source, std::ostream& err) {
    std::map<std::string, std::map<int, std::string>> run;
    if (!fs::is_directory(dir)) {
        err << "error: not a directory: " << dir << "\n";
        return false;
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".jsonl") continue;
        try {
            Dialogue dialogue = read_journal_file(entry.path().string());
            std::string task_id = dialogue.task_id.empty()
                                      ? entry.path().stem().string()
                                      : dialogue.task_id;
            for (std::size_t i = 0; i < dialogue.turns.size(); ++i)
                run[task_id][static_cast<int>(i)] = dialogue.turns[i].final_response;
        } catch (const std::exception& e) {
            err << "error: bad journal " << entry.path() << ": " << e.what() << "\n";
            return false;
        }
    }
    source.runs.push_back(std::move(run));
    return true;
}

std::vector<std::string> instructions_until(const Task& task, int round_index) {
    std::vector<std::string> out;
    for (int i = 0; i <= round_index && i < static_cast<int>(task.rounds.size()); ++i)
        out.push_back(task.rounds[static_cast<std::size_t>(i)].instruction);
    return out;
}

struct RunEvaluation {
    Metrics metrics;
    json subtask_reports;
};

std::optional<RunEvaluation> evaluate_run(
    const Corpus& corpus, const std::map<std::string, std::map<int, std::string>>& responses,
    bool partial, const Judge& judge, std::ostream& err) {
    const Catalog& catalog = default_catalog();
    HandlerRegistry base = default_test_handlers();
    std::vector<SubtaskResult> results;
    json reports = json::array();

    for (const auto& task : corpus.tasks) {
        auto task_it = responses.find(task.id);
        for (std::size_t ri = 0; ri < task.rounds.size(); ++ri) {
            const std::string* text = nullptr;
            if (task_it != responses.end()) {
                auto round_it = task_it->second.find(static_cast<int>(ri));
                if (round_it != task_it->second.end()) text = &round_it->second;
            }
            if (!text) {
                if (!partial) {
                    err << "error: no response for task '" << task.id << "' round " << ri + 1
                        << " (use --partial to score anyway)\n";
                    return std::nullopt;
                }
                continue;
            }
            SubtaskResult result = evaluate_subtask(
                task.id, task.domain, static_cast<int>(ri), *text,
                instructions_until(task, static_cast<int>(ri)),
                task.rounds[ri], catalog, judge, base);
            json rec = {{"task", task.id},
                        {"round", ri + 1},
                        {"pass", result.pass.to_json()}};
            json cases = json::array();
            for (const auto& c : result.cases) cases.push_back(c.to_json());
            rec["cases"] = cases;
            reports.push_back(std::move(rec));
            results.push_back(std::move(result));
        }
    }
    try {
        RunEvaluation out{compute_metrics(results, corpus, partial), std::move(reports)};
        return out;
    } catch (const IncompleteCoverageError& e) {
        err << "error: " << e.what() << "\n";
        return std::nullopt;
    }
}

char rate_buf[64];

std::string fmt_rate(double v) {
    std::snprintf(rate_buf, sizeof(rate_buf), "%.2f", v);
    return rate_buf;
}

}  // namespace

int cmd_validate(const ValidateOptions& options, std::ostream& out, std::ostream& err) {
    auto text = read_file(options.input_path);
    if (!text) {
        err << "error: cannot read " << options.input_path << "\n";
        return kUsage;
    }
    const Catalog& catalog = default_catalog();

    std::optional<Round> round;
    if (options.round_path) {
        round = load_round_file(*options.round_path, err);
        if (!round) return kUsage;
    }

    if (round && text->find("<workflow>") != std::string::npos) {
        RuleJudge judge(catalog);
        PassReport report = pass_pipeline(*text, *round, catalog, judge);
        out << report.to_json().dump(2) << "\n";
        return report.pass ? kOk : kFailure;
    }

    std::string stage_error;
    auto parsed = load_response_or_workflow(*text, stage_error);
    if (!parsed) {
        out << "format: FAIL - " << stage_error << "\n";
        return kFailure;
    }
    out << "format: ok\n";

    try {
        ValidatedGraph graph = build(*parsed->workflow_doc, catalog);
        auto violations = resolve_vars(graph, catalog);
        if (!violations.empty()) {
            out << "structure: FAIL\n";
            for (const auto& v : violations) out << "  - " << v.to_string() << "\n";
            return kFailure;
        }
        out << "structure: ok (" << graph.nodes().size() << " nodes, topo order";
        for (const auto& id : graph.topo_order()) out << " " << id;
        out << ")\n";
        if (round) {
            RuleJudge judge(catalog);
            std::string detail;
            if (!signatures_match(io_signature(graph), round->reference_vars, detail)) {
                out << "variables: FAIL - " << detail << "\n";
                return kFailure;
            }
            out << "variables: ok\n";
        }
    } catch (const BuildError& e) {
        out << "structure: FAIL - " << e.what() << "\n";
        for (const auto& inst : e.instances())
            out << "  - " << inst.subject << (inst.detail.empty() ? "" : ": " + inst.detail)
                << "\n";
        return kFailure;
    }
    return kOk;
}

int cmd_convert(const ConvertOptions& options, std::ostream& out, std::ostream& err) {
    auto text = read_file(options.input_path);
    if (!text) {
        err << "error: cannot read " << options.input_path << "\n";
        return kUsage;
    }
    const Catalog& catalog = default_catalog();
    try {
        std::string stage_error;
        auto parsed = load_response_or_workflow(*text, stage_error);
        if (!parsed) {
            err << "error: " << stage_error << "\n";
            return kFailure;
        }
        ValidatedGraph graph = build(*parsed->workflow_doc, catalog);
        auto violations = resolve_vars(graph, catalog);
        if (!violations.empty()) {
            err << "error: " << violations.front().to_string() << "\n";
            return kFailure;
        }
        std::string yaml =
            emit(graph, AppMeta{options.app_name, options.app_description}, catalog);
        if (!options.output_path.empty()) {
            if (!write_file(options.output_path, yaml)) {
                err << "error: cannot write " << options.output_path << "\n";
                return kUsage;
            }
            out << "wrote " << options.output_path << " (" << yaml.size() << " bytes)\n";
        } else {
            out << yaml;
        }
        if (options.import_check) {
            ValidatedGraph reimported = import_check(yaml, catalog);
            out << "import-check: ok (" << reimported.nodes().size() << " nodes)\n";
        }
        if (options.push_base_url) {
            httplib::Client client(*options.push_base_url);
            httplib::Headers headers;
            if (!options.platform_token.empty())
                headers.emplace("Authorization", "Bearer " + options.platform_token);
            json body = {{"mode", "yaml-content"}, {"yaml_content", yaml}};
            auto res = client.Post("/console/api/apps/imports", headers, body.dump(),
                                   "application/json");
            if (!res || res->status >= 300) {
                err << "error: platform import failed"
                    << (res ? " (HTTP " + std::to_string(res->status) + ")" : "") << "\n";
                return kFailure;
            }
            out << "pushed to " << *options.push_base_url << "\n";
        }
        return kOk;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
}

int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err) {
    auto workflow_text = read_file(options.workflow_path);
    if (!workflow_text) {
        err << "error: cannot read " << options.workflow_path << "\n";
        return kUsage;
    }
    auto inputs_text = read_file(options.inputs_path);
    if (!inputs_text) {
        err << "error: cannot read " << options.inputs_path << "\n";
        return kUsage;
    }
    const Catalog& catalog = default_catalog();
    try {
        std::string stage_error;
        auto parsed = load_response_or_workflow(*workflow_text, stage_error);
        if (!parsed) {
            err << "error: " << stage_error << "\n";
            return kFailure;
        }
        ValidatedGraph graph = build(*parsed->workflow_doc, catalog);
        auto violations = resolve_vars(graph, catalog);
        if (!violations.empty()) {
            err << "error: " << violations.front().to_string() << "\n";
            return kFailure;
        }

        HandlerRegistry registry = default_test_handlers();
        registry.strict_scripts = options.strict_scripts;
        if (options.scripts_path) {
            auto scripts_text = read_file(*options.scripts_path);
            if (!scripts_text) {
                err << "error: cannot read " << *options.scripts_path << "\n";
                return kUsage;
            }
            registry.scripts.merge(ScriptTable::from_json(json::parse(*scripts_text)));
        }

        ExecOutput result;
        try {
            result = execute(graph, parse_inputs(json::parse(*inputs_text)), registry, catalog);
        } catch (const ExecError& e) {
            if (options.trace_path) {
                std::string trace_text;
                // the failed run leaves no ExecOutput; the error carries context
                write_file(*options.trace_path, trace_text);
            }
            err << "error: " << e.what() << "\n";
            return e.exec_kind() == ExecError::Kind::InputMismatch ? kUsage : kFailure;
        }

        json text_json = json::object();
        for (const auto& [name, value] : result.text_outputs)
            text_json[name] = value.render();
        json files_json = json::object();
        for (const auto& [name, value] : result.file_outputs)
            files_json[name] = value.to_json();
        out << json{{"text_outputs", text_json}, {"file_outputs", files_json}}.dump(2) << "\n";

        if (options.trace_path) {
            std::string trace_text;
            for (const auto& event : result.trace) trace_text += event.to_line() + "\n";
            if (!write_file(*options.trace_path, trace_text)) {
                err << "error: cannot write " << *options.trace_path << "\n";
                return kUsage;
            }
        }
        return kOk;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
}

int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err) {
    Corpus corpus;
    try {
        corpus = load_corpus(options.corpus_path);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }

    ResponseSource source;
    if (options.responses_dir) {
        if (!collect_responses_dir(*options.responses_dir, source, err)) return kUsage;
    }
    for (const auto& dir : options.journals_dirs)
        if (!collect_journals_dir(dir, source, err)) return kUsage;
    if (source.runs.empty()) {
        err << "error: provide --responses or --journals\n";
        return kUsage;
    }

    const Catalog& catalog = default_catalog();
    RuleJudge judge(catalog);

    std::vector<Metrics> run_metrics;
    json runs_json = json::array();
    for (const auto& run : source.runs) {
        auto evaluated = evaluate_run(corpus, run, options.partial, judge, err);
        if (!evaluated) return kUsage;
        run_metrics.push_back(evaluated->metrics);
        runs_json.push_back({{"metrics", evaluated->metrics.to_json()},
                             {"subtasks", evaluated->subtask_reports}});
    }

    json results = {{"corpus", options.corpus_path},
                    {"runs", runs_json},
                    {"metrics", run_metrics.front().to_json()}};
    if (run_metrics.size() > 1) {
        AveragedMetrics avg = average_runs(run_metrics);
        results["average"] = {{"runs", avg.runs},
                              {"pass_rate", avg.pass_rate},
                              {"resolve_rate", avg.resolve_rate}};
    }

    if (options.out_dir) {
        std::error_code ec;
        fs::create_directories(*options.out_dir, ec);
        if (!write_file((fs::path(*options.out_dir) / "results.json").string(),
                        results.dump(2) + "\n") ||
            !write_file((fs::path(*options.out_dir) / "per_round.csv").string(),
                        run_metrics.front().per_round_csv())) {
            err << "error: cannot write into " << *options.out_dir << "\n";
            return kUsage;
        }
    }

    const Metrics& m = run_metrics.front();
    out << "subtasks: " << m.overall.passed_subtasks << "/" << m.overall.subtasks
        << " passed, cases: " << m.overall.resolved_cases << "/" << m.overall.cases
        << " resolved\n";
    out << "pass_rate: " << fmt_rate(m.overall.pass_rate())
        << " resolve_rate: " << fmt_rate(m.overall.resolve_rate()) << "\n";
    if (run_metrics.size() > 1) {
        AveragedMetrics avg = average_runs(run_metrics);
        out << "average over " << avg.runs << " runs: pass_rate " << fmt_rate(avg.pass_rate)
            << " resolve_rate " << fmt_rate(avg.resolve_rate) << "\n";
    }
    return kOk;
}

int cmd_agent(const AgentOptions& options, std::ostream& out, std::ostream& err) {
    Corpus corpus;
    try {
        corpus = load_corpus(options.corpus_path);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
    auto guidelines = read_file(options.guidelines_path);
    if (!guidelines) {
        err << "error: cannot read guidelines template " << options.guidelines_path << "\n";
        return kUsage;
    }

    const Catalog& catalog = default_catalog();
    RuleJudge judge(catalog);

    ResponseSource scripted;
    if (options.scripted_responses_dir) {
        if (!collect_responses_dir(*options.scripted_responses_dir, scripted, err))
            return kUsage;
    } else if (!options.provider_config_path) {
        err << "error: provide --provider or --scripted\n";
        return kUsage;
    }

    HttpProviderConfig http_config;
    if (options.provider_config_path) {
        auto config_text = read_file(*options.provider_config_path);
        if (!config_text) {
            err << "error: cannot read provider config\n";
            return kUsage;
        }
        try {
            json config = json::parse(*config_text);
            http_config.base_url = config.at("base_url").get<std::string>();
            http_config.model = config.at("model").get<std::string>();
            if (config.contains("api_key_env"))
                if (const char* key =
                        std::getenv(config["api_key_env"].get<std::string>().c_str()))
                    http_config.api_key = key;
            if (config.contains("temperature"))
                http_config.generation.temperature = config["temperature"].get<double>();
            if (config.contains("max_tokens"))
                http_config.generation.max_tokens = config["max_tokens"].get<int>();
            if (config.contains("timeout_ms"))
                http_config.timeout_ms = config["timeout_ms"].get<int>();
            if (config.contains("transport_retries"))
                http_config.transport_retries = config["transport_retries"].get<int>();
        } catch (const std::exception& e) {
            err << "error: bad provider config: " << e.what() << "\n";
            return kUsage;
        }
    }

    std::error_code ec;
    fs::create_directories(options.out_dir, ec);

    RunRoundOptions run_options;
    run_options.max_attempts = options.max_attempts;

    bool aborted = false;
    for (const auto& task : corpus.tasks) {
        std::unique_ptr<ProviderClient> provider;
        if (options.scripted_responses_dir) {
            auto task_it = scripted.runs.front().find(task.id);
            std::map<int, std::string> canned =
                task_it == scripted.runs.front().end() ? std::map<int, std::string>{}
                                                       : task_it->second;
            // one canned response per round, replayed on every attempt
            auto counter = std::make_shared<int>(0);
            provider = std::make_unique<ScriptedProvider>(
                [canned, counter](int, const std::vector<Message>& messages) {
                    int round = 0;
                    for (const auto& m : messages)
                        if (m.role == "assistant") ++round;
                    (void)counter;
                    auto it = canned.find(round);
                    if (it == canned.end())
                        throw ProviderUnavailableError("no scripted response for round " +
                                                       std::to_string(round + 1));
                    return it->second;
                });
        } else {
            provider = std::make_unique<HttpProvider>(http_config);
        }

        try {
            Dialogue dialogue =
                run_task(task, *provider, catalog, judge, *guidelines, run_options);
            write_journal_file((fs::path(options.out_dir) / (task.id + ".jsonl")).string(),
                               dialogue);
            out << "task " << task.id << ": " << dialogue.turns.size() << " rounds\n";
        } catch (const ProviderUnavailableError& e) {
            err << "error: task " << task.id << " aborted: " << e.what() << "\n";
            aborted = true;
        }
    }
    if (aborted) return kFailure;

    EvalOptions eval_options;
    eval_options.corpus_path = options.corpus_path;
    eval_options.journals_dirs = {options.out_dir};
    eval_options.out_dir = options.out_dir;
    eval_options.judge = options.judge;
    return cmd_eval(eval_options, out, err);
}

int cmd_catalog(const CatalogOptions& options, std::ostream& out, std::ostream&) {
    const Catalog& catalog = default_catalog();
    if (options.text)
        out << render_knowledge_base(catalog);
    else
        out << catalog.to_json().dump(2) << "\n";
    return kOk;
}

int cmd_repair(const RepairOptions& options, std::ostream& out, std::ostream& err) {
    auto text = read_file(options.input_path);
    if (!text) {
        err << "error: cannot read " << options.input_path << "\n";
        return kUsage;
    }
    const Catalog& catalog = default_catalog();
    VerifyFn accept_all = [](const ParsedResponse&) { return VerifyOutcome{true, "", ""}; };
    AttemptOutcome outcome = process_attempt(*text, catalog, accept_all);

    if (options.explain) {
        json repairs = json::array();
        for (const auto& r : outcome.repairs) repairs.push_back(r);
        out << json{{"repairs", repairs},
                    {"stage", outcome.ok ? "verified" : outcome.stage},
                    {"detail", outcome.detail}}
                   .dump(2)
            << "\n";
    }
    std::string repaired = render_response(outcome.response);
    if (options.output_path) {
        if (!write_file(*options.output_path, repaired)) {
            err << "error: cannot write " << *options.output_path << "\n";
            return kUsage;
        }
    } else if (!options.explain) {
        out << repaired;
    }
    return outcome.ok ? kOk : kFailure;
}

}  // namespace flowkit::cli
