#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flowkit/eval_harness.hpp"
#include "flowkit/repair_engine.hpp"

namespace flowkit {

struct GenConfig {
    double temperature = 0.7;
    int max_tokens = 32768;
};

struct Message {
    std::string role;  // user | assistant
    std::string content;
};

class ProviderUnavailableError : public Error {
public:
    explicit ProviderUnavailableError(const std::string& detail)
        : Error("ProviderUnavailable", detail) {}
};

class ProviderClient {
public:
    virtual ~ProviderClient() = default;
    virtual std::string generate(const std::string& system_prompt,
                                 const std::vector<Message>& messages,
                                 const GenConfig& config) = 0;
};

// Deterministic provider for tests and offline runs: either a fixed response
// sequence or a callback over the full message state.
class ScriptedProvider : public ProviderClient {
public:
    explicit ScriptedProvider(std::vector<std::string> responses)
        : responses_(std::move(responses)) {}
    explicit ScriptedProvider(
        std::function<std::string(int call_index, const std::vector<Message>&)> fn)
        : fn_(std::move(fn)) {}

    std::string generate(const std::string& system_prompt, const std::vector<Message>& messages,
                         const GenConfig& config) override;

    int calls() const { return calls_; }

private:
    std::vector<std::string> responses_;
    std::function<std::string(int, const std::vector<Message>&)> fn_;
    int calls_ = 0;
};

struct HttpProviderConfig {
    std::string base_url;  // e.g. http://localhost:8000/v1
    std::string model;
    std::string api_key;
    GenConfig generation;
    int timeout_ms = 120000;
    int transport_retries = 2;
};

// OpenAI-style chat completions client. Transport retries are distinct from
// the 5 verification attempts and never consume them.
class HttpProvider : public ProviderClient {
public:
    explicit HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {}

    std::string generate(const std::string& system_prompt, const std::vector<Message>& messages,
                         const GenConfig& config) override;

private:
    HttpProviderConfig config_;
};

// ---------------------------------------------------------------------------
// Dialogue state
// ---------------------------------------------------------------------------

struct Turn {
    std::string instruction;
    std::string final_response;
    bool verified = false;
    std::vector<AttemptRecord> attempts;
    PassReport report;
    // Rendered from the round's validated graph; absent when the round failed.
    std::optional<std::string> variable_summary;
};

struct Dialogue {
    std::string task_id;
    std::vector<Turn> turns;

    int current_round() const { return static_cast<int>(turns.size()); }
};

// Compact text block describing a validated graph's variables: inputs, per
// node outputs in topo order (iteration children indented), then outputs.
std::string summarize_variables(const ValidatedGraph& graph);

// Human-readable catalog rendering injected into the system prompt.
std::string render_knowledge_base(const Catalog& catalog);

struct PromptBundle {
    std::string system_prompt;
    std::vector<Message> messages;
};

struct PromptOptions {
    std::size_t char_budget = 480000;  // ~120k tokens
};

// System prompt from the guideline template (the {{node_knowledge_base}}
// placeholder is filled from the catalog), history verbatim, and the last
// verified round's variable summary appended to the current instruction.
// Oversized histories elide oldest responses first, deterministically.
PromptBundle build_prompt(const Dialogue& dialogue, const std::string& instruction,
                          const Catalog& catalog, const std::string& guideline_template,
                          const PromptOptions& options = {});

struct RunRoundOptions {
    int max_attempts = 5;
    bool feed_errors = true;  // append the prior failure report to the retry prompt
    PromptOptions prompt;
};

// One benchmark round: wraps the provider in verified_retry, appends the turn
// (verified or not), and advances the dialogue either way.
Turn& run_round(Dialogue& dialogue, const Round& round, ProviderClient& provider,
                const Catalog& catalog, const Judge& judge,
                const std::string& guideline_template, const RunRoundOptions& options = {});

Dialogue run_task(const Task& task, ProviderClient& provider, const Catalog& catalog,
                  const Judge& judge, const std::string& guideline_template,
                  const RunRoundOptions& options = {});

// ---------------------------------------------------------------------------
// Session journals (JSONL; replayable and re-scorable offline)
// ---------------------------------------------------------------------------

std::string dialogue_to_journal(const Dialogue& dialogue);
Dialogue dialogue_from_journal(const std::string& journal_text);

void write_journal_file(const std::string& path, const Dialogue& dialogue);
Dialogue read_journal_file(const std::string& path);

}  // namespace flowkit
