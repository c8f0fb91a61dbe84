#include <doctest.h>

#include <random>
#include <set>

#include "flowkit/yaml_emitter.hpp"
#include "support/builders.hpp"

using namespace flowkit;
using namespace flowkit::testing;
using nlohmann::json;

namespace {

ValidatedGraph resolved(const WorkflowDoc& doc) {
    ValidatedGraph graph = build(doc, default_catalog());
    REQUIRE(resolve_vars(graph, default_catalog()).empty());
    return graph;
}

}  // namespace

TEST_CASE("minimal document emits the platform skeleton") {
    json nodes = json::array(
        {node_json("1", "start",
                   {{"variables", json::array({{{"name", "text"}, {"type", "string"}}})}}),
         node_json("2", "end",
                   {{"outputs", json::array({{{"name", "o"}, {"value", "{{#1.text#}}"}}})}})});
    ValidatedGraph graph = resolved(doc_from_json(nodes, json::array({json::array({"1", 0, "2"})})));
    std::string yaml = emit(graph, AppMeta{"demo", "a demo"}, default_catalog());

    CHECK(yaml.find("mode: workflow") != std::string::npos);
    CHECK(yaml.find("kind: app") != std::string::npos);
    CHECK(yaml.find("name: demo") != std::string::npos);
    CHECK(yaml.find("positionAbsolute") != std::string::npos);
    CHECK(yaml.find("sourceHandle: source") != std::string::npos);

    // two positioned nodes, one edge
    ValidatedGraph back = import_check(yaml, default_catalog());
    CHECK(back.nodes().size() == 2);
    CHECK(back.edges().size() == 1);
}

TEST_CASE("emit is byte-deterministic") {
    std::mt19937 rng(5);
    WorkflowDoc doc = random_valid_doc(rng);
    ValidatedGraph graph = resolved(doc);
    std::string a = emit(graph, AppMeta{"x", "y"}, default_catalog());
    std::string b = emit(graph, AppMeta{"x", "y"}, default_catalog());
    CHECK(a == b);
}

TEST_CASE("layout positions are injective and layered") {
    json nodes = json::array(
        {node_json("1", "start",
                   {{"variables", json::array({{{"name", "text"}, {"type", "string"}}})}}),
         node_json("2", "llm", {{"prompt", "a {{#1.text#}}"}}),
         node_json("3", "llm", {{"prompt", "b {{#1.text#}}"}}),
         node_json("4", "end",
                   {{"outputs", json::array({{{"name", "o"}, {"value", "{{#2.text#}}"}}})}})});
    json edges = json::array({json::array({"1", 0, "2"}), json::array({"1", 0, "3"}),
                              json::array({"2", 0, "4"}), json::array({"3", 0, "4"})});
    ValidatedGraph graph = resolved(doc_from_json(nodes, edges));
    auto positions = layout(graph);

    // chain depth increases x; the diamond's middle layer gets two y slots
    CHECK(positions.at("1").x < positions.at("2").x);
    CHECK(positions.at("2").x == positions.at("3").x);
    CHECK(positions.at("2").y != positions.at("3").y);
    CHECK(positions.at("2").x < positions.at("4").x);

    std::mt19937 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        WorkflowDoc doc = random_valid_doc(rng, {4, 10});
        ValidatedGraph g = resolved(doc);
        auto pos = layout(g);
        std::set<std::pair<long long, long long>> seen;
        for (const auto& node : g.nodes()) {
            NodePosition p = pos.at(node.id);
            if (node.parent_id) {
                p.x += pos.at(*node.parent_id).x;
                p.y += pos.at(*node.parent_id).y;
            }
            CHECK(seen.insert({p.x, p.y}).second);
        }
    }
}

TEST_CASE("round trip over generated graphs spanning all kinds") {
    std::mt19937 rng(42);
    const Catalog& catalog = default_catalog();
    std::set<NodeKind> kinds_seen;
    int trials = 220;
    for (int i = 0; i < trials; ++i) {
        WorkflowDoc doc = random_valid_doc(rng);
        ValidatedGraph graph = resolved(doc);
        for (const auto& n : graph.nodes()) kinds_seen.insert(n.kind);

        std::string yaml = emit(graph, AppMeta{"roundtrip", ""}, catalog);
        ValidatedGraph back = import_check(yaml, catalog);
        std::string why;
        bool same = graphs_equivalent(graph, back, catalog, why);
        if (!same) {
            CAPTURE(i);
            CAPTURE(why);
            CAPTURE(doc.dump());
        }
        REQUIRE(same);
    }
    CHECK(kinds_seen.size() == static_cast<std::size_t>(kNodeKindCount));
}

TEST_CASE("import_check rejects broken platform documents") {
    CHECK_THROWS_AS(import_check("not: [valid", default_catalog()), ImportError);
    CHECK_THROWS_AS(import_check("kind: dataset", default_catalog()), ImportError);

    json nodes = json::array(
        {node_json("1", "start",
                   {{"variables", json::array({{{"name", "text"}, {"type", "string"}}})}}),
         node_json("2", "end",
                   {{"outputs", json::array({{{"name", "o"}, {"value", "{{#1.text#}}"}}})}})});
    ValidatedGraph graph = resolved(doc_from_json(nodes, json::array({json::array({"1", 0, "2"})})));
    std::string yaml = emit(graph, AppMeta{"demo", ""}, default_catalog());

    // unknown node payload type
    std::string bad = yaml;
    auto pos = bad.find("type: start");
    REQUIRE(pos != std::string::npos);
    bad.replace(pos, 11, "type: alien");
    try {
        import_check(bad, default_catalog());
        FAIL("expected ImportFailure");
    } catch (const ImportError& e) {
        CHECK(e.stage() == "lower");
    }
}

TEST_CASE("hand-written platform YAML lowers and builds") {
    // five-node workflow in the shape a real platform export takes
    std::string yaml = read_text_file(data_dir() + "/fixtures/platform_export.yaml");
    ValidatedGraph graph = import_check(yaml, default_catalog());
    CHECK(graph.nodes().size() == 5);
    CHECK(graph.node("br").kind == NodeKind::IfElse);
    CHECK(graph.outbound_ports("br") == 2);
    WorkflowDoc lowered = lower_platform_yaml(yaml, default_catalog());
    ValidatedGraph again = build(lowered, default_catalog());
    std::string why;
    CHECK(graphs_equivalent(graph, again, default_catalog(), why));
}

TEST_CASE("branch edges carry case handles") {
    json nodes = json::array(
        {node_json("1", "start",
                   {{"variables", json::array({{{"name", "x"}, {"type", "number"}}})}}),
         node_json("2", "if-else",
                   {{"conditions",
                     json::array({json{{"rules", json::array({json{{"left", "{{#1.x#}}"},
                                                                   {"op", ">"},
                                                                   {"right", 1}}})}}})}}),
         node_json("3", "end",
                   {{"outputs", json::array({{{"name", "a"}, {"value", "{{#1.x#}}"}}})}}),
         node_json("4", "end",
                   {{"outputs", json::array({{{"name", "b"}, {"value", "{{#1.x#}}"}}})}})});
    json edges = json::array({json::array({"1", 0, "2"}), json::array({"2", 0, "3"}),
                              json::array({"2", 1, "4"})});
    ValidatedGraph graph = resolved(doc_from_json(nodes, edges));
    std::string yaml = emit(graph, AppMeta{"branches", ""}, default_catalog());
    CHECK(yaml.find("sourceHandle: case_1") != std::string::npos);
    CHECK(yaml.find("sourceHandle: \"false\"") != std::string::npos);  // ELSE port

    ValidatedGraph back = import_check(yaml, default_catalog());
    std::string why;
    CHECK(graphs_equivalent(graph, back, default_catalog(), why));
}
