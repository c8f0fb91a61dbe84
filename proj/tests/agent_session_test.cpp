#include <doctest.h>

#include "flowkit/agent_session.hpp"
#include "support/builders.hpp"

using namespace flowkit;
using namespace flowkit::testing;
using nlohmann::json;

namespace {

std::string guidelines() {
    return read_text_file(data_dir() + "/prompts/system_guidelines.md");
}

}  // namespace

TEST_CASE("variable summaries render inputs, nodes, and outputs in topo order") {
    ValidatedGraph graph = build(chain_doc(), default_catalog());
    std::string summary = summarize_variables(graph);
    CHECK(summary.find("- text: string") != std::string::npos);
    CHECK(summary.find("- 2 (llm) -> text:string") != std::string::npos);
    CHECK(summary.find("- reply: string") != std::string::npos);
    auto input_pos = summary.find("inputs:");
    auto node_pos = summary.find("nodes:");
    auto output_pos = summary.find("outputs:");
    CHECK(input_pos < node_pos);
    CHECK(node_pos < output_pos);

    // iteration children are indented below their container
    ParsedResponse parsed = extract_sections(load_perfect_response("study-planner", 1));
    ValidatedGraph nested = build(decode_workflow(parsed.workflow_text), default_catalog());
    std::string nested_summary = summarize_variables(nested);
    CHECK(nested_summary.find("    - 7 (llm)") != std::string::npos);
    CHECK(nested_summary.find("  - 5 (iteration)") != std::string::npos);

    // summaries depend only on the validated content
    CHECK(summarize_variables(nested) == nested_summary);
}

TEST_CASE("build_prompt injects the knowledge base and history") {
    Dialogue dialogue;
    dialogue.task_id = "t";
    PromptBundle first = build_prompt(dialogue, "round one", default_catalog(), guidelines());
    CHECK(first.system_prompt.find("## llm") != std::string::npos);
    CHECK(first.system_prompt.find("{{node_knowledge_base}}") == std::string::npos);
    REQUIRE(first.messages.size() == 1);
    CHECK(first.messages[0].content == "round one");
    CHECK(first.messages[0].content.find("Variables available") == std::string::npos);

    Turn turn;
    turn.instruction = "round one";
    turn.final_response = "resp";
    turn.verified = true;
    turn.variable_summary = "inputs:\n  - text: string\n";
    dialogue.turns.push_back(turn);

    PromptBundle second = build_prompt(dialogue, "round two", default_catalog(), guidelines());
    REQUIRE(second.messages.size() == 3);
    CHECK(second.messages[0].content == "round one");
    CHECK(second.messages[1].role == "assistant");
    CHECK(second.messages[2].content.find("round two") == 0);
    CHECK(second.messages[2].content.find("Variables available from the previous workflow") !=
          std::string::npos);
}

TEST_CASE("oversized histories elide oldest responses deterministically") {
    Dialogue dialogue;
    for (int i = 0; i < 3; ++i) {
        Turn turn;
        turn.instruction = "round " + std::to_string(i + 1);
        turn.final_response = std::string(4000, 'x');
        turn.variable_summary = "summary " + std::to_string(i + 1);
        dialogue.turns.push_back(turn);
    }
    PromptOptions roomy;
    roomy.char_budget = 1 << 20;
    PromptBundle untouched =
        build_prompt(dialogue, "current", default_catalog(), guidelines(), roomy);
    CHECK(untouched.messages[1].content == std::string(4000, 'x'));

    PromptOptions tight;
    tight.char_budget = 1;  // every turn's response body must give way
    PromptBundle bundle =
        build_prompt(dialogue, "current", default_catalog(), guidelines(), tight);
    CHECK(bundle.messages[1].content.find("[response elided]") == 0);
    CHECK(bundle.messages[1].content.find("summary 1") != std::string::npos);
    CHECK(bundle.messages[0].content == "round 1");  // instructions always survive

    PromptBundle again =
        build_prompt(dialogue, "current", default_catalog(), guidelines(), tight);
    for (std::size_t i = 0; i < bundle.messages.size(); ++i)
        CHECK(bundle.messages[i].content == again.messages[i].content);
}

TEST_CASE("run_round retries until verification and records the log") {
    Corpus corpus = load_mini_corpus();
    const Task* task = corpus.find_task("poster-studio");
    REQUIRE(task);
    const Catalog& catalog = default_catalog();
    RuleJudge judge(catalog);

    std::string good = load_perfect_response("poster-studio", 0);
    int call = 0;
    ScriptedProvider provider([&](int, const std::vector<Message>&) {
        ++call;
        return call < 3 ? "invalid response" : good;
    });

    Dialogue dialogue;
    dialogue.task_id = task->id;
    Turn& turn = run_round(dialogue, task->rounds[0], provider, catalog, judge, guidelines());
    CHECK(turn.verified);
    CHECK(turn.attempts.size() == 3);
    CHECK(turn.report.pass);
    CHECK(turn.variable_summary.has_value());
    CHECK(provider.calls() == 3);
}

TEST_CASE("a failed round still advances the dialogue") {
    Corpus corpus = load_mini_corpus();
    const Task* task = corpus.find_task("poster-studio");
    const Catalog& catalog = default_catalog();
    RuleJudge judge(catalog);

    int round_index = 0;
    ScriptedProvider provider([&](int, const std::vector<Message>& messages) {
        int assistants = 0;
        for (const auto& m : messages)
            if (m.role == "assistant") ++assistants;
        round_index = assistants;
        // round 1 always fails; later rounds answer correctly
        return assistants == 0 ? std::string("broken")
                               : load_perfect_response("poster-studio", assistants);
    });

    Dialogue dialogue;
    dialogue.task_id = task->id;
    for (const auto& round : task->rounds)
        run_round(dialogue, round, provider, catalog, judge, guidelines());

    REQUIRE(dialogue.turns.size() == 3);
    CHECK_FALSE(dialogue.turns[0].verified);
    CHECK(dialogue.turns[0].attempts.size() == 5);  // AttemptsExhausted
    CHECK_FALSE(dialogue.turns[0].variable_summary.has_value());
    CHECK(dialogue.turns[1].verified);
    CHECK(dialogue.turns[2].verified);
}

TEST_CASE("journals round trip and reproduce prompts byte for byte") {
    Corpus corpus = load_mini_corpus();
    const Task* task = corpus.find_task("report-builder");
    const Catalog& catalog = default_catalog();
    RuleJudge judge(catalog);

    ScriptedProvider provider([&](int, const std::vector<Message>& messages) {
        int assistants = 0;
        for (const auto& m : messages)
            if (m.role == "assistant") ++assistants;
        return load_perfect_response("report-builder", assistants);
    });

    Dialogue dialogue = run_task(*task, provider, catalog, judge, guidelines());
    REQUIRE(dialogue.turns.size() == 3);

    std::string journal = dialogue_to_journal(dialogue);
    Dialogue replayed = dialogue_from_journal(journal);
    CHECK(replayed.task_id == dialogue.task_id);
    REQUIRE(replayed.turns.size() == dialogue.turns.size());

    // replaying the transcript rebuilds identical prompts for every round
    for (std::size_t upto = 0; upto < dialogue.turns.size(); ++upto) {
        Dialogue original_prefix, replayed_prefix;
        original_prefix.task_id = dialogue.task_id;
        replayed_prefix.task_id = replayed.task_id;
        for (std::size_t i = 0; i < upto; ++i) {
            original_prefix.turns.push_back(dialogue.turns[i]);
            replayed_prefix.turns.push_back(replayed.turns[i]);
        }
        const std::string& instruction = task->rounds[upto].instruction;
        PromptBundle a = build_prompt(original_prefix, instruction, catalog, guidelines());
        PromptBundle b = build_prompt(replayed_prefix, instruction, catalog, guidelines());
        CHECK(a.system_prompt == b.system_prompt);
        REQUIRE(a.messages.size() == b.messages.size());
        for (std::size_t i = 0; i < a.messages.size(); ++i) {
            CHECK(a.messages[i].role == b.messages[i].role);
            CHECK(a.messages[i].content == b.messages[i].content);
        }
    }
}

TEST_CASE("scripted provider sequences and exhausts") {
    ScriptedProvider provider(std::vector<std::string>{"a", "b"});
    GenConfig config;
    CHECK(provider.generate("s", {}, config) == "a");
    CHECK(provider.generate("s", {}, config) == "b");
    CHECK(provider.generate("s", {}, config) == "b");  // sticks to the last
    CHECK(provider.calls() == 3);
}

TEST_CASE("error feedback reaches the retry prompt") {
    Corpus corpus = load_mini_corpus();
    const Task* task = corpus.find_task("poster-studio");
    const Catalog& catalog = default_catalog();
    RuleJudge judge(catalog);

    std::vector<std::vector<Message>> seen;
    ScriptedProvider provider([&](int, const std::vector<Message>& messages) {
        seen.push_back(messages);
        return seen.size() < 2 ? std::string("nope")
                               : load_perfect_response("poster-studio", 0);
    });

    Dialogue dialogue;
    dialogue.task_id = task->id;
    run_round(dialogue, task->rounds[0], provider, catalog, judge, guidelines());
    REQUIRE(seen.size() == 2);
    bool fed = false;
    for (const auto& m : seen[1])
        if (m.content.find("failed verification at stage 'format'") != std::string::npos)
            fed = true;
    CHECK(fed);
}
