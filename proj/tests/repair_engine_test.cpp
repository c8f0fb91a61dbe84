#include <doctest.h>

#include <random>

#include "flowkit/repair_engine.hpp"
#include "support/builders.hpp"

using namespace flowkit;
using namespace flowkit::testing;
using nlohmann::json;

namespace {

VerifyFn structural_only() {
    return [](const ParsedResponse&) { return VerifyOutcome{true, "", ""}; };
}

}  // namespace

TEST_CASE("repair_fences strips workflow fences and is identity otherwise") {
    ParsedResponse response;
    response.workflow_text = "```json\n{\"nodes_info\": [], \"edges\": []}\n```";
    RepairOutcome outcome = repair_fences(response);
    CHECK(outcome.changed);
    CHECK(outcome.applied == std::vector<std::string>{"fence"});
    CHECK(outcome.repaired.workflow_text == "{\"nodes_info\": [], \"edges\": []}");

    ParsedResponse clean;
    clean.workflow_text = "{\"nodes_info\": [], \"edges\": []}";
    RepairOutcome noop = repair_fences(clean);
    CHECK_FALSE(noop.changed);
    CHECK(noop.applied.empty());
}

TEST_CASE("fence-wrapped responses verify on the first attempt") {
    // twenty wrapping variants: whole-response fences (tag search tolerates
    // them), workflow-section fences (stripped and logged), and both at once
    for (int variant = 0; variant < 20; ++variant) {
        std::string inner = load_perfect_response("study-planner", 0);
        bool fence_workflow = variant % 2 == 0;
        if (fence_workflow) {
            auto open = inner.find("<workflow>") + std::string("<workflow>").size();
            inner.insert(open, variant % 4 ? "\n```json" : "\n```");
            auto close = inner.find("</workflow>");
            inner.insert(close, "```\n");
        }
        std::string wrapped = inner;
        if (variant % 3 != 2)
            wrapped = (variant % 2 ? "```markdown\n" : "```\n") + inner + "\n```";
        AttemptOutcome outcome = process_attempt(wrapped, default_catalog(), structural_only());
        CHECK(outcome.ok);
        if (fence_workflow)
            CHECK(std::find(outcome.repairs.begin(), outcome.repairs.end(), "fence") !=
                  outcome.repairs.end());
    }
}

TEST_CASE("repair_json fixes the targeted defects in order") {
    CHECK(repair_json("{\"a\":1,}") == "{\"a\":1}");
    CHECK(repair_json("{'a': 1}") == "{\"a\": 1}");
    CHECK(repair_json("{a: 1}") == "{\"a\": 1}");
    CHECK(repair_json("{\"a\": 1 // comment\n}") == "{\"a\": 1 \n}");
    CHECK(repair_json("{\"a\": [1, 2,], }") == "{\"a\": [1, 2]}");

    // apostrophes inside double-quoted strings stay untouched
    std::string tricky = "{\"a\": \"it's\"}";
    CHECK(repair_json(tricky) == tricky);

    // urls survive the comment stripper because they live inside strings
    std::string url = "{\"u\": \"http://x/y\",}";
    CHECK(repair_json(url) == "{\"u\": \"http://x/y\"}");

    // unfixable text comes back unchanged
    std::string hopeless = "{\"a\": [}";
    CHECK(repair_json(hopeless) == hopeless);
}

TEST_CASE("repair_json is identity on strictly valid input") {
    std::mt19937 rng(3);
    for (int i = 0; i < 50; ++i) {
        WorkflowDoc doc = random_valid_doc(rng);
        std::string text = doc.dump();
        CHECK(repair_json(text) == text);
    }
}

TEST_CASE("repair_topology deletes the iteration entry edge") {
    ParsedResponse parsed = extract_sections(load_perfect_response("study-planner", 1));
    WorkflowDoc doc = decode_workflow(parsed.workflow_text);
    doc.edges.push_back({"5", 0, "6"});  // iteration -> its iteration-start
    CHECK_THROWS_AS(build(doc, default_catalog()), BuildError);

    WorkflowDoc repaired = repair_topology(doc, default_catalog());
    ValidatedGraph graph = build(repaired, default_catalog());
    CHECK(graph.nodes().size() == doc.nodes_info.size());
    CHECK(repaired.edges.size() == doc.edges.size() - 1);
}

TEST_CASE("repair_topology removes injected back edges and nothing else") {
    std::mt19937 rng(31);
    const Catalog& catalog = default_catalog();
    int repaired_count = 0;
    for (int trial = 0; trial < 200; ++trial) {
        WorkflowDoc doc = random_valid_doc(rng);
        ValidatedGraph graph = build(doc, catalog);

        // inject one random back edge along the top-level topo order
        auto order = graph.scope_order(std::nullopt);
        if (order.size() < 3) continue;
        std::size_t from = 2 + rng() % (order.size() - 2);
        std::size_t to = 1 + rng() % (from - 1);
        const Node& source = graph.node(order[from]);
        if (catalog.spec(source.kind).kind == NodeKind::End) continue;
        if (!catalog.spec(graph.node(order[to]).kind).accepts_inbound) continue;
        int port = graph.outbound_ports(order[from]);
        if (port == 0) continue;
        WorkflowDoc broken = doc;
        broken.edges.push_back({order[from], 0, order[to]});

        bool still_valid = true;
        try {
            build(broken, catalog);
        } catch (const BuildError& e) {
            still_valid = false;
            if (e.error_class() != BuildErrorClass::CycleDetected) continue;
        }
        if (still_valid) continue;  // the extra edge happened not to close a cycle

        WorkflowDoc repaired = repair_topology(broken, catalog);
        ++repaired_count;
        std::multiset<std::tuple<std::string, int, std::string>> original, recovered;
        for (const auto& e : doc.edges) original.insert({e.source, e.port, e.target});
        for (const auto& e : repaired.edges) recovered.insert({e.source, e.port, e.target});
        CHECK(original == recovered);
    }
    CHECK(repaired_count > 50);
}

TEST_CASE("repair_topology gives up on graphs it cannot recover") {
    // the cycle sits behind the start node's only outlet; removing its back
    // edge disconnects nothing it can reconnect
    json nodes = json::array(
        {node_json("1", "start",
                   {{"variables", json::array({{{"name", "t"}, {"type", "string"}}})}}),
         node_json("2", "llm", {{"prompt", "a"}}),
         node_json("3", "llm", {{"prompt", "b"}}),
         node_json("4", "end",
                   {{"outputs", json::array({{{"name", "o"}, {"value", "{{#2.text#}}"}}})}})});
    // 2 and 3 feed each other with no path from start at all
    json edges = json::array({json::array({"1", 0, "4"}), json::array({"2", 0, "3"}),
                              json::array({"3", 0, "2"})});
    CHECK_THROWS_AS(repair_topology(doc_from_json(nodes, edges), default_catalog()),
                    UnrepairableError);
}

TEST_CASE("repair_node_selection recomputes the declaration from the workflow") {
    ParsedResponse response;
    response.workflow_doc = chain_doc();
    response.node_selection = {"start", "llm"};
    RepairOutcome outcome = repair_node_selection(response, default_catalog());
    CHECK(outcome.changed);
    CHECK(outcome.repaired.node_selection ==
          std::vector<std::string>{"end", "llm", "start"});

    // declared kinds present in the workflow but spelled differently do not
    // count as a mismatch
    ParsedResponse aliased;
    json nodes = json::array(
        {node_json("1", "start",
                   {{"variables", json::array({{{"name", "t"}, {"type", "string"}}})}}),
         node_json("2", "template-transform", {{"template", "x"}}),
         node_json("3", "end",
                   {{"outputs", json::array({{{"name", "o"}, {"value", "{{#2.output#}}"}}})}})});
    aliased.workflow_doc = doc_from_json(
        nodes, json::array({json::array({"1", 0, "2"}), json::array({"2", 0, "3"})}));
    aliased.node_selection = {"Start", "Template", "END"};
    RepairOutcome alias_outcome = repair_node_selection(aliased, default_catalog());
    CHECK_FALSE(alias_outcome.changed);

    // undeclared kinds used by the workflow get added
    ParsedResponse missing = extract_sections(load_perfect_response("study-planner", 1));
    missing.workflow_doc = decode_workflow(missing.workflow_text);
    missing.node_selection = {"start", "llm", "list-operator", "iteration",
                              "template-transform", "end"};  // code, iteration-start absent
    RepairOutcome fixed = repair_node_selection(missing, default_catalog());
    CHECK(fixed.changed);
    auto& sel = fixed.repaired.node_selection;
    CHECK(std::find(sel.begin(), sel.end(), "code") != sel.end());
    CHECK(std::find(sel.begin(), sel.end(), "iteration-start") != sel.end());
}

TEST_CASE("verified_retry consumes one attempt per generate call") {
    std::string good = load_perfect_response("poster-studio", 0);
    std::string bad = "no tags here";

    for (int failures = 0; failures <= 4; ++failures) {
        GenerateFn generate = [&, failures](int attempt, const AttemptRecord*) {
            return attempt <= failures ? bad : good;
        };
        RetryResult result = verified_retry(generate, default_catalog(), structural_only());
        CHECK(result.verified);
        CHECK(result.log.size() == static_cast<std::size_t>(failures + 1));
        CHECK(result.log.back().stage == "verified");
    }

    int calls = 0;
    GenerateFn always_bad = [&](int, const AttemptRecord*) {
        ++calls;
        return bad;
    };
    RetryResult exhausted = verified_retry(always_bad, default_catalog(), structural_only());
    CHECK_FALSE(exhausted.verified);
    CHECK(calls == 5);
    CHECK(exhausted.log.size() == 5);
    CHECK(exhausted.log.back().stage == "format");
}

TEST_CASE("attempts repair fences, json, topology, and selection in one pass") {
    // a response wearing all four defects at once
    ParsedResponse base = extract_sections(load_perfect_response("study-planner", 1));
    WorkflowDoc doc = decode_workflow(base.workflow_text);
    doc.edges.push_back({"5", 0, "6"});
    std::string dirty_json = doc.dump();
    auto brace = dirty_json.rfind(']');
    dirty_json.insert(brace, ",");  // trailing comma inside the last array

    std::string response_text =
        "<node_selection>\nstart\nllm\n</node_selection>\n"
        "<design_principle>short</design_principle>\n"
        "<workflow>\n```json\n" + dirty_json + "\n```\n</workflow>";

    AttemptOutcome outcome = process_attempt(response_text, default_catalog(), structural_only());
    CHECK(outcome.ok);
    CHECK(std::find(outcome.repairs.begin(), outcome.repairs.end(), "fence") !=
          outcome.repairs.end());
    CHECK(std::find(outcome.repairs.begin(), outcome.repairs.end(), "json") !=
          outcome.repairs.end());
    CHECK(std::find(outcome.repairs.begin(), outcome.repairs.end(), "topology") !=
          outcome.repairs.end());
    CHECK(std::find(outcome.repairs.begin(), outcome.repairs.end(), "node-selection") !=
          outcome.repairs.end());

    // repairs are identity on an already-valid response
    AttemptOutcome clean =
        process_attempt(load_perfect_response("study-planner", 1), default_catalog(),
                        structural_only());
    CHECK(clean.ok);
    CHECK(clean.repairs.empty());
}

TEST_CASE("attempt log lines serialize one record per attempt") {
    AttemptRecord record{2, {"fence", "json"}, "verified", ""};
    json j = record.to_json();
    CHECK(j["attempt"] == 2);
    CHECK(j["repairs"].size() == 2);
    CHECK(record.to_line().find("\"verified\"") != std::string::npos);
}
