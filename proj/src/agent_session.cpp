#include "flowkit/agent_session.hpp"

#include <fstream>
#include <sstream>

#include <httplib.h>

#include "flowkit/util.hpp"

namespace flowkit {

using nlohmann::json;

std::string ScriptedProvider::generate(const std::string& system_prompt,
                                       const std::vector<Message>& messages,
                                       const GenConfig& config) {
    (void)system_prompt;
    (void)config;  // deterministic providers ignore generation settings
    int index = calls_++;
    if (fn_) return fn_(index, messages);
    if (responses_.empty())
        throw ProviderUnavailableError("scripted provider has no responses");
    if (static_cast<std::size_t>(index) >= responses_.size()) return responses_.back();
    return responses_[static_cast<std::size_t>(index)];
}

namespace {

struct ParsedUrl {
    std::string host_port;  // scheme://host[:port]
    std::string path;       // path prefix, no trailing slash
};

ParsedUrl split_base_url(const std::string& base_url) {
    auto scheme = base_url.find("://");
    if (scheme == std::string::npos)
        throw ProviderUnavailableError("base url must include a scheme: " + base_url);
    auto path_start = base_url.find('/', scheme + 3);
    ParsedUrl out;
    if (path_start == std::string::npos) {
        out.host_port = base_url;
    } else {
        out.host_port = base_url.substr(0, path_start);
        out.path = base_url.substr(path_start);
        while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
    }
    return out;
}

}  // namespace

std::string HttpProvider::generate(const std::string& system_prompt,
                                   const std::vector<Message>& messages,
                                   const GenConfig& config) {
    ParsedUrl url = split_base_url(config_.base_url);

    json body;
    body["model"] = config_.model;
    body["temperature"] = config.temperature;
    body["max_tokens"] = config.max_tokens;
    json msgs = json::array();
    if (!system_prompt.empty())
        msgs.push_back({{"role", "system"}, {"content", system_prompt}});
    for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    body["messages"] = msgs;

    std::string last_error;
    for (int attempt = 0; attempt <= config_.transport_retries; ++attempt) {
        httplib::Client client(url.host_port);
        client.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);
        client.set_connection_timeout(config_.timeout_ms / 1000,
                                      (config_.timeout_ms % 1000) * 1000);
        httplib::Headers headers;
        if (!config_.api_key.empty())
            headers.emplace("Authorization", "Bearer " + config_.api_key);

        auto res = client.Post(url.path + "/chat/completions", headers, body.dump(),
                               "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "provider returned HTTP " + std::to_string(res->status);
            continue;
        }
        try {
            json reply = json::parse(res->body);
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception& e) {
            last_error = std::string("malformed provider reply: ") + e.what();
        }
    }
    throw ProviderUnavailableError(last_error.empty() ? "provider unreachable" : last_error);
}

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

std::string summarize_variables(const ValidatedGraph& graph) {
    std::ostringstream out;
    out << "inputs:";
    if (graph.io_signature().inputs.empty()) out << " (none)";
    out << "\n";
    for (const auto& v : graph.io_signature().inputs)
        out << "  - " << v.name << ": " << v.type.to_string() << "\n";

    out << "nodes:\n";
    for (const auto& id : graph.topo_order()) {
        const Node& n = graph.node(id);
        std::string indent = n.parent_id ? "    " : "  ";
        out << indent << "- " << id << " (" << kind_id(n.kind) << ")";
        const auto& outputs = graph.outputs_of(id);
        if (!outputs.empty()) {
            out << " ->";
            for (const auto& [name, type] : outputs)
                out << " " << name << ":" << (type ? type->to_string() : "unknown");
        }
        out << "\n";
    }

    out << "outputs:";
    if (graph.io_signature().outputs.empty()) out << " (none)";
    out << "\n";
    for (const auto& v : graph.io_signature().outputs)
        out << "  - " << v.name << ": " << v.type.to_string() << "\n";
    return out.str();
}

std::string render_knowledge_base(const Catalog& catalog) {
    std::ostringstream out;
    for (const auto& spec : catalog.specs()) {
        out << "## " << kind_id(spec.kind) << "\n";
        if (!spec.summary.empty()) out << spec.summary << "\n";
        out << "- params:";
        if (spec.primary_params.empty()) out << " (none)";
        for (const auto& p : spec.primary_params)
            out << " " << p.name << " (" << p.type.to_string()
                << (p.required ? ", required)" : ", optional)");
        out << "\n";
        out << "- outputs:";
        if (spec.output_vars.empty() && !spec.dynamic_outputs) out << " (none)";
        for (const auto& o : spec.output_vars)
            out << " " << o.name << ": " << o.type.to_string();
        if (spec.dynamic_outputs) out << " (derived from params or upstream types)";
        out << "\n";
        switch (spec.port_rule) {
            case PortRule::Fixed:
                out << "- ports: " << spec.fixed_ports << " outbound\n";
                break;
            case PortRule::PerBranch:
                out << "- ports: one per condition branch plus a final ELSE port\n";
                break;
            case PortRule::PerClass:
                out << "- ports: one per declared class\n";
                break;
        }
        if (spec.container_rule == ContainerRule::Container)
            out << "- container: holds a sub-workflow; children set parent_id to this node; "
                   "connect nothing to its iteration-start\n";
        if (spec.container_rule == ContainerRule::ContainerEntry)
            out << "- container entry: lives inside an iteration (parent_id), receives no "
                   "edges\n";
        if (!spec.model_binding.empty()) out << "- model: " << spec.model_binding << "\n";
        out << "\n";
    }
    return out.str();
}

PromptBundle build_prompt(const Dialogue& dialogue, const std::string& instruction,
                          const Catalog& catalog, const std::string& guideline_template,
                          const PromptOptions& options) {
    PromptBundle bundle;

    std::string kb = render_knowledge_base(catalog);
    std::string system = guideline_template;
    const std::string placeholder = "{{node_knowledge_base}}";
    auto pos = system.find(placeholder);
    if (pos != std::string::npos)
        system.replace(pos, placeholder.size(), kb);
    else
        system += "\n\n# Node knowledge base\n\n" + kb;
    bundle.system_prompt = system;

    for (const auto& turn : dialogue.turns) {
        bundle.messages.push_back({"user", turn.instruction});
        bundle.messages.push_back({"assistant", turn.final_response});
    }

    std::string current = instruction;
    if (!dialogue.turns.empty()) {
        // latest summary wins; earlier rounds may have failed without one
        for (auto it = dialogue.turns.rbegin(); it != dialogue.turns.rend(); ++it) {
            if (it->variable_summary) {
                current += "\n\n# Variables available from the previous workflow\n" +
                           *it->variable_summary;
                break;
            }
        }
    }
    bundle.messages.push_back({"user", current});

    // Deterministic elision: replace oldest assistant bodies with their
    // variable summary until the bundle fits the budget.
    auto total_chars = [&] {
        std::size_t n = bundle.system_prompt.size();
        for (const auto& m : bundle.messages) n += m.content.size();
        return n;
    };
    std::size_t turn_index = 0;
    while (total_chars() > options.char_budget && turn_index < dialogue.turns.size()) {
        const Turn& turn = dialogue.turns[turn_index];
        std::string replacement = "[response elided]";
        if (turn.variable_summary)
            replacement += "\n# Variables the elided workflow exposed\n" + *turn.variable_summary;
        bundle.messages[turn_index * 2 + 1].content = replacement;
        ++turn_index;
    }
    return bundle;
}

// ---------------------------------------------------------------------------
// Rounds
// ---------------------------------------------------------------------------

Turn& run_round(Dialogue& dialogue, const Round& round, ProviderClient& provider,
                const Catalog& catalog, const Judge& judge,
                const std::string& guideline_template, const RunRoundOptions& options) {
    VerifyFn verify = make_retry_verifier(round, catalog, judge);

    GenerateFn generate = [&](int attempt, const AttemptRecord* prior) {
        PromptBundle bundle =
            build_prompt(dialogue, round.instruction, catalog, guideline_template,
                         options.prompt);
        if (attempt > 1 && options.feed_errors && prior) {
            std::string feedback =
                "The previous response failed verification at stage '" + prior->stage +
                "': " + prior->detail +
                "\nProduce a corrected, complete response with all three sections.";
            bundle.messages.push_back({"user", feedback});
        }
        return provider.generate(bundle.system_prompt, bundle.messages, GenConfig{});
    };

    RetryResult retry =
        verified_retry(generate, catalog, verify, RetryOptions{options.max_attempts});

    Turn turn;
    turn.instruction = round.instruction;
    turn.final_response = render_response(retry.response);
    turn.verified = retry.verified;
    turn.attempts = retry.log;
    turn.report = pass_pipeline(turn.final_response, round, catalog, judge);
    if (retry.verified && retry.response.workflow_doc) {
        try {
            ValidatedGraph graph = build(*retry.response.workflow_doc, catalog);
            turn.variable_summary = summarize_variables(graph);
        } catch (const BuildError&) {
            // verified responses build by construction; keep the turn usable
        }
    }
    dialogue.turns.push_back(std::move(turn));
    return dialogue.turns.back();
}

Dialogue run_task(const Task& task, ProviderClient& provider, const Catalog& catalog,
                  const Judge& judge, const std::string& guideline_template,
                  const RunRoundOptions& options) {
    Dialogue dialogue;
    dialogue.task_id = task.id;
    for (const auto& round : task.rounds)
        run_round(dialogue, round, provider, catalog, judge, guideline_template, options);
    return dialogue;
}

// ---------------------------------------------------------------------------
// Journals
// ---------------------------------------------------------------------------

std::string dialogue_to_journal(const Dialogue& dialogue) {
    std::ostringstream out;
    out << json{{"type", "session"}, {"task", dialogue.task_id}, {"version", 1}}.dump() << "\n";
    int round = 0;
    for (const auto& turn : dialogue.turns) {
        json attempts = json::array();
        for (const auto& a : turn.attempts) attempts.push_back(a.to_json());
        json record = {{"type", "turn"},
                       {"round", ++round},
                       {"instruction", turn.instruction},
                       {"final_response", turn.final_response},
                       {"verified", turn.verified},
                       {"attempts", attempts},
                       {"pass_report", turn.report.to_json()}};
        if (turn.variable_summary) record["variable_summary"] = *turn.variable_summary;
        out << record.dump() << "\n";
    }
    return out.str();
}

Dialogue dialogue_from_journal(const std::string& journal_text) {
    Dialogue dialogue;
    for (const auto& line : split(journal_text, '\n')) {
        if (trim(line).empty()) continue;
        json record = json::parse(line);
        std::string type = record.value("type", std::string());
        if (type == "session") {
            dialogue.task_id = record.value("task", std::string());
        } else if (type == "turn") {
            Turn turn;
            turn.instruction = record.value("instruction", std::string());
            turn.final_response = record.value("final_response", std::string());
            turn.verified = record.value("verified", false);
            if (record.contains("attempts"))
                for (const auto& a : record["attempts"]) {
                    AttemptRecord rec;
                    rec.index = a.value("attempt", 0);
                    rec.stage = a.value("stage", std::string());
                    rec.detail = a.value("detail", std::string());
                    if (a.contains("repairs"))
                        for (const auto& r : a["repairs"])
                            rec.repairs.push_back(r.get<std::string>());
                    turn.attempts.push_back(std::move(rec));
                }
            if (record.contains("variable_summary"))
                turn.variable_summary = record["variable_summary"].get<std::string>();
            dialogue.turns.push_back(std::move(turn));
        }
    }
    return dialogue;
}

void write_journal_file(const std::string& path, const Dialogue& dialogue) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoError", "cannot write journal file: " + path);
    out << dialogue_to_journal(dialogue);
}

Dialogue read_journal_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot read journal file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return dialogue_from_journal(buffer.str());
}

}  // namespace flowkit
