#include <doctest.h>

#include <random>

#include "flowkit/workflow_graph.hpp"
#include "support/builders.hpp"

using namespace flowkit;
using namespace flowkit::testing;
using nlohmann::json;

TEST_CASE("build admits a linear chain with the expected topo order") {
    ValidatedGraph graph = build(chain_doc(), default_catalog());
    CHECK(graph.topo_order() == std::vector<std::string>{"1", "2", "3"});
    CHECK(graph.start_id() == "1");
    CHECK(resolve_vars(graph, default_catalog()).empty());
    REQUIRE(graph.io_signature().inputs.size() == 1);
    CHECK(graph.io_signature().inputs.front().name == "text");
    REQUIRE(graph.io_signature().outputs.size() == 1);
    CHECK(graph.io_signature().outputs.front().name == "reply");
    CHECK(graph.io_signature().outputs.front().type == VarType::string());
}

TEST_CASE("explicit iteration-to-entry edge is a containment violation") {
    // the failure mode where the container is wired to its own entry marker
    json nodes = json::array(
        {node_json("1", "start",
                   {{"variables", json::array({{{"name", "text"}, {"type", "string"}}})}}),
         node_json("2", "code",
                   {{"script", "items"},
                    {"outputs", json::array({{{"name", "items"}, {"type", "array[string]"}}})}}),
         node_json("5", "iteration", {{"input", "{{#2.items#}}"}, {"output", "{{#7.output#}}"}}),
         node_json("6", "iteration-start", json::object(), "5"),
         node_json("7", "template-transform", {{"template", "x {{#5.item#}}"}}, "5"),
         node_json("8", "end",
                   {{"outputs", json::array({{{"name", "out"}, {"value", "{{#5.output#}}"}}})}})});
    json edges = json::array({json::array({"1", 0, "2"}), json::array({"2", 0, "5"}),
                              json::array({"5", 0, "6"}),  // illegal: inclusion only
                              json::array({"6", 0, "7"}), json::array({"5", 0, "8"})});
    try {
        build(doc_from_json(nodes, edges), default_catalog());
        FAIL("expected ContainmentViolation");
    } catch (const BuildError& e) {
        CHECK(e.error_class() == BuildErrorClass::ContainmentViolation);
        REQUIRE(e.instances().size() == 1);
        CHECK(e.instances().front().subject == "5->6@0");
    }
}

TEST_CASE("cycle detection matches a brute-force oracle on small digraphs") {
    std::mt19937 rng(11);
    for (int n = 2; n <= 4; ++n) {
        TopoOracle oracle(n);
        std::uint64_t total = 1ULL << oracle.pair_count();
        for (std::uint64_t mask = 0; mask < total; ++mask) {
            TopoOracleResult expected = oracle.run(mask);
            TopoResult got = library_topo(n, mask, oracle);
            REQUIRE(expected.is_dag == got.is_dag);
            if (expected.is_dag) {
                REQUIRE(got.order.size() == static_cast<std::size_t>(n));
                for (int i = 0; i < n; ++i)
                    CHECK(got.order[static_cast<std::size_t>(i)] ==
                          std::to_string(expected.best_order[static_cast<std::size_t>(i)] + 1));
            }
        }
    }
    (void)rng;
}

TEST_CASE("topological_sort spec examples") {
    CHECK(topological_sort({"1"}, {}).order == std::vector<std::string>{"1"});

    std::vector<RawEdge> diamond = {{"1", 0, "2"}, {"1", 0, "3"}, {"2", 0, "4"}, {"3", 0, "4"}};
    TopoResult result = topological_sort({"1", "2", "3", "4"}, diamond);
    REQUIRE(result.is_dag);
    CHECK(result.order == std::vector<std::string>{"1", "2", "3", "4"});

    TopoResult cyc = topological_sort({"1", "2"}, {{"1", 0, "2"}, {"2", 0, "1"}});
    CHECK_FALSE(cyc.is_dag);
    std::set<std::string> witness(cyc.cycle.begin(), cyc.cycle.end());
    CHECK(witness == std::set<std::string>{"1", "2"});

    TopoResult tri =
        topological_sort({"1", "2", "3"}, {{"1", 0, "2"}, {"2", 0, "3"}, {"3", 0, "1"}});
    CHECK_FALSE(tri.is_dag);
    CHECK(std::set<std::string>(tri.cycle.begin(), tri.cycle.end()) ==
          std::set<std::string>{"1", "2", "3"});

    // numeric ids order numerically, not lexicographically
    TopoResult numeric = topological_sort({"10", "9", "2"}, {});
    CHECK(numeric.order == std::vector<std::string>{"2", "9", "10"});
}

TEST_CASE("build reports the whole failing class at once") {
    json nodes = json::array(
        {node_json("1", "start",
                   {{"variables", json::array({{{"name", "text"}, {"type", "string"}}})}}),
         node_json("2", "llm", {{"prompt", "p"}}),
         node_json("3", "end", {{"outputs", json::array()}})});
    json edges = json::array({json::array({"1", 0, "2"}), json::array({"2", 0, "3"}),
                              json::array({"2", 0, "9"}), json::array({"8", 0, "3"})});
    try {
        build(doc_from_json(nodes, edges), default_catalog());
        FAIL("expected DanglingEdge");
    } catch (const BuildError& e) {
        CHECK(e.error_class() == BuildErrorClass::DanglingEdge);
        CHECK(e.instances().size() == 2);
    }
}

TEST_CASE("build check order puts earlier classes first") {
    // duplicate ids win over the also-present unknown kind
    json nodes = json::array({node_json("1", "start", {{"variables", json::array()}}),
                              node_json("1", "webhook", json::object()),
                              node_json("2", "end", {{"outputs", json::array()}})});
    try {
        build(doc_from_json(nodes, json::array()), default_catalog());
        FAIL("expected DuplicateId");
    } catch (const BuildError& e) {
        CHECK(e.error_class() == BuildErrorClass::DuplicateId);
    }
}

TEST_CASE("start and end terminal rules are enforced") {
    json nodes = json::array(
        {node_json("1", "start",
                   {{"variables", json::array({{{"name", "text"}, {"type", "string"}}})}}),
         node_json("2", "llm", {{"prompt", "p"}}),
         node_json("3", "end",
                   {{"outputs", json::array({{{"name", "o"}, {"value", "{{#2.text#}}"}}})}})});
    json edges = json::array({json::array({"1", 0, "2"}), json::array({"2", 0, "3"}),
                              json::array({"2", 0, "1"})});
    try {
        build(doc_from_json(nodes, edges), default_catalog());
        FAIL("expected PortOutOfRange");
    } catch (const BuildError& e) {
        CHECK(e.error_class() == BuildErrorClass::PortOutOfRange);
    }
}

TEST_CASE("unreachable nodes are flagged") {
    json nodes = json::array(
        {node_json("1", "start",
                   {{"variables", json::array({{{"name", "text"}, {"type", "string"}}})}}),
         node_json("2", "llm", {{"prompt", "p"}}),
         node_json("3", "llm", {{"prompt", "q"}}),
         node_json("4", "end",
                   {{"outputs", json::array({{{"name", "o"}, {"value", "{{#2.text#}}"}}})}})});
    json edges = json::array({json::array({"1", 0, "2"}), json::array({"2", 0, "4"})});
    try {
        build(doc_from_json(nodes, edges), default_catalog());
        FAIL("expected Unreachable");
    } catch (const BuildError& e) {
        CHECK(e.error_class() == BuildErrorClass::Unreachable);
        REQUIRE(e.instances().size() == 1);
        CHECK(e.instances().front().subject == "3");
    }
}

TEST_CASE("resolve_vars flags the four violation families") {
    json nodes = json::array(
        {node_json("1", "start",
                   {{"variables", json::array({{{"name", "text"}, {"type", "string"}}})}}),
         node_json("2", "llm", {{"prompt", "uses {{#9.text#}} and {{#3.text#}}"}}),
         node_json("3", "llm", {{"prompt", "uses {{#1.missing#}}"}}),
         node_json("4", "end",
                   {{"outputs", json::array({{{"name", "o"}, {"value", "{{#3.text#}}"}}})}})});
    json edges = json::array({json::array({"1", 0, "2"}), json::array({"2", 0, "3"}),
                              json::array({"3", 0, "4"})});
    ValidatedGraph graph = build(doc_from_json(nodes, edges), default_catalog());
    auto violations = resolve_vars(graph, default_catalog());
    REQUIRE(violations.size() == 3);
    CHECK(violations[0].kind == RefViolationKind::UnknownRefNode);   // {{#9.text#}}
    CHECK(violations[1].kind == RefViolationKind::UseBeforeDef);     // {{#3.text#}} from node 2
    CHECK(violations[2].kind == RefViolationKind::UnknownRefVar);    // {{#1.missing#}}
}

TEST_CASE("iteration scoping rules") {
    auto make_doc = [](const std::string& body_template) {
        json nodes = json::array(
            {node_json("1", "start",
                       {{"variables", json::array({{{"name", "text"}, {"type", "string"}}})}}),
             node_json("2", "code",
                       {{"script", "items"},
                        {"outputs",
                         json::array({{{"name", "items"}, {"type", "array[string]"}}})}}),
             node_json("3", "llm", {{"prompt", "context"}}),
             node_json("4", "iteration",
                       {{"input", "{{#2.items#}}"}, {"output", "{{#6.output#}}"}}),
             node_json("5", "iteration-start", json::object(), "4"),
             node_json("6", "template-transform", {{"template", body_template}}, "4"),
             node_json("7", "end",
                       {{"outputs",
                         json::array({{{"name", "o"}, {"value", "{{#4.output#}}"}}})}})});
        json edges = json::array({json::array({"1", 0, "2"}), json::array({"2", 0, "3"}),
                                  json::array({"3", 0, "4"}), json::array({"5", 0, "6"}),
                                  json::array({"4", 0, "7"})});
        return doc_from_json(nodes, edges);
    };
    const Catalog& catalog = default_catalog();

    // item/index and the iteration's own input list are legal inside
    ValidatedGraph ok = build(make_doc("{{#4.item#}} {{#4.index#}} {{#2.items#}}"), catalog);
    CHECK(resolve_vars(ok, catalog).empty());
    CHECK(ok.output_type("4", "output") == VarType::array_of(ScalarType::String));

    // any other top-level value is out of scope for contained nodes
    ValidatedGraph cross = build(make_doc("{{#3.text#}}"), catalog);
    auto violations = resolve_vars(cross, catalog);
    REQUIRE(violations.size() == 1);
    CHECK(violations.front().kind == RefViolationKind::CrossScopeRef);

    // the per-item variable is invisible outside its iteration
    json nodes = json::array(
        {node_json("1", "start",
                   {{"variables", json::array({{{"name", "text"}, {"type", "string"}}})}}),
         node_json("2", "code",
                   {{"script", "items"},
                    {"outputs", json::array({{{"name", "items"}, {"type", "array[string]"}}})}}),
         node_json("4", "iteration", {{"input", "{{#2.items#}}"}, {"output", "{{#6.output#}}"}}),
         node_json("5", "iteration-start", json::object(), "4"),
         node_json("6", "template-transform", {{"template", "{{#4.item#}}"}}, "4"),
         node_json("7", "end",
                   {{"outputs", json::array({{{"name", "o"}, {"value", "{{#4.item#}}"}}})}})});
    json edges = json::array({json::array({"1", 0, "2"}), json::array({"2", 0, "4"}),
                              json::array({"5", 0, "6"}), json::array({"4", 0, "7"})});
    ValidatedGraph leak = build(doc_from_json(nodes, edges), catalog);
    auto leak_violations = resolve_vars(leak, catalog);
    REQUIRE_FALSE(leak_violations.empty());
    CHECK(leak_violations.front().kind == RefViolationKind::UnknownRefVar);
}

TEST_CASE("nested iterations are rejected") {
    json nodes = json::array(
        {node_json("1", "start",
                   {{"variables", json::array({{{"name", "text"}, {"type", "string"}}})}}),
         node_json("2", "iteration", {{"input", "{{#1.text#}}"}, {"output", "{{#4.output#}}"}}),
         node_json("3", "iteration-start", json::object(), "2"),
         node_json("4", "iteration", {{"input", "x"}, {"output", "y"}}, "2"),
         node_json("5", "end", {{"outputs", json::array()}})});
    try {
        build(doc_from_json(nodes, json::array({json::array({"1", 0, "2"})})),
              default_catalog());
        FAIL("expected ContainmentViolation");
    } catch (const BuildError& e) {
        CHECK(e.error_class() == BuildErrorClass::ContainmentViolation);
    }
}

TEST_CASE("two end nodes union their outputs") {
    json nodes = json::array(
        {node_json("1", "start",
                   {{"variables", json::array({{{"name", "x"}, {"type", "number"}}})}}),
         node_json("2", "if-else",
                   {{"conditions",
                     json::array({json{{"rules", json::array({json{{"left", "{{#1.x#}}"},
                                                                   {"op", ">"},
                                                                   {"right", 3}}})}}})}}),
         node_json("3", "end",
                   {{"outputs", json::array({{{"name", "a"}, {"value", "{{#1.x#}}"}}})}}),
         node_json("4", "end",
                   {{"outputs", json::array({{{"name", "b"}, {"value", "{{#1.x#}}"}}})}})});
    json edges = json::array({json::array({"1", 0, "2"}), json::array({"2", 0, "3"}),
                              json::array({"2", 1, "4"})});
    ValidatedGraph graph = build(doc_from_json(nodes, edges), default_catalog());
    auto outputs = io_signature(graph).outputs;
    REQUIRE(outputs.size() == 2);
    CHECK(outputs[0].name == "a");
    CHECK(outputs[1].name == "b");
}

TEST_CASE("replaying a validated graph through build is a fixpoint") {
    std::mt19937 rng(23);
    const Catalog& catalog = default_catalog();
    for (int i = 0; i < 30; ++i) {
        WorkflowDoc doc = random_valid_doc(rng);
        ValidatedGraph first = build(doc, catalog);
        WorkflowDoc canonical = first.to_doc();
        ValidatedGraph second = build(canonical, catalog);
        CHECK(second.to_doc() == canonical);
    }
}
