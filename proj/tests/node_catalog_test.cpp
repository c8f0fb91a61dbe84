#include <doctest.h>

#include <set>

#include "flowkit/node_catalog.hpp"

using namespace flowkit;
using nlohmann::json;

TEST_CASE("lookup finds canonical kinds case-insensitively") {
    const Catalog& catalog = default_catalog();

    const NodeSpec& llm = catalog.lookup("llm");
    CHECK(llm.kind == NodeKind::Llm);
    int required = 0;
    for (const auto& p : llm.primary_params)
        if (p.required) ++required;
    CHECK(required == 1);
    CHECK(llm.primary_params.front().name == "prompt");
    REQUIRE(llm.output_vars.size() == 1);
    CHECK(llm.output_vars.front().name == "text");
    CHECK(llm.output_vars.front().type == VarType::string());

    CHECK(catalog.lookup("LLM").kind == NodeKind::Llm);
    CHECK(catalog.lookup("Template").kind == NodeKind::TemplateTransform);
    CHECK(catalog.canonical_kind_id("Template") == "template-transform");
    CHECK_THROWS_AS(catalog.lookup("webhook"), UnknownKindError);
}

TEST_CASE("canonicalization is idempotent over all kinds") {
    const Catalog& catalog = default_catalog();
    CHECK(catalog.specs().size() == kNodeKindCount);
    for (const auto& spec : catalog.specs()) {
        const std::string& id = kind_id(spec.kind);
        CHECK(&catalog.lookup(catalog.canonical_kind_id(id)) == &catalog.lookup(id));
    }
}

TEST_CASE("exactly one container and one container entry") {
    const Catalog& catalog = default_catalog();
    int containers = 0, entries = 0;
    for (const auto& spec : catalog.specs()) {
        if (spec.container_rule == ContainerRule::Container) ++containers;
        if (spec.container_rule == ContainerRule::ContainerEntry) ++entries;
    }
    CHECK(containers == 1);
    CHECK(entries == 1);
    CHECK(catalog.spec(NodeKind::Iteration).container_rule == ContainerRule::Container);
    CHECK(catalog.spec(NodeKind::IterationStart).container_rule ==
          ContainerRule::ContainerEntry);
}

TEST_CASE("outbound port counts") {
    const Catalog& catalog = default_catalog();

    json two_conditions = {{"conditions", json::array({json{{"rules", json::array()}},
                                                       json{{"rules", json::array()}}})}};
    CHECK(catalog.outbound_port_count(catalog.spec(NodeKind::IfElse), two_conditions) == 3);
    CHECK(catalog.outbound_port_count(catalog.spec(NodeKind::Llm), json::object()) == 1);
    CHECK(catalog.outbound_port_count(
              catalog.spec(NodeKind::QuestionClassifier),
              json{{"classes", json::array({"tech", "other"})}}) == 2);
    CHECK(catalog.outbound_port_count(catalog.spec(NodeKind::End), json::object()) == 0);
    CHECK_THROWS_AS(
        catalog.outbound_port_count(catalog.spec(NodeKind::IfElse), json::object()),
        MissingBranchSpecError);

    // n conditions always expose n+1 ports, the last one being ELSE
    for (int n = 1; n <= 6; ++n) {
        json conditions = json::array();
        for (int i = 0; i < n; ++i) conditions.push_back(json{{"rules", json::array()}});
        CHECK(catalog.outbound_port_count(catalog.spec(NodeKind::IfElse),
                                          json{{"conditions", conditions}}) == n + 1);
    }
}

TEST_CASE("validate_params reports violations without throwing") {
    const Catalog& catalog = default_catalog();

    json start_params = {
        {"variables", json::array({{{"name", "instruction"}, {"type", "string"}}})}};
    CHECK(catalog.validate_params(catalog.spec(NodeKind::Start), start_params).empty());

    auto llm_missing = catalog.validate_params(catalog.spec(NodeKind::Llm), json::object());
    REQUIRE(llm_missing.size() == 1);
    CHECK(llm_missing.front().kind == ViolationKind::MissingRequired);
    CHECK(llm_missing.front().key == "prompt");

    json code_params = {{"script", "1 + 1"}, {"bogus_key", 1}};
    auto code_violations = catalog.validate_params(catalog.spec(NodeKind::Code), code_params);
    REQUIRE(code_violations.size() == 1);
    CHECK(code_violations.front().kind == ViolationKind::UnknownKey);
    CHECK(code_violations.front().key == "bogus_key");
}

TEST_CASE("validate_params is deterministic") {
    const Catalog& catalog = default_catalog();
    json params = {{"bogus", 1}, {"classes", json::array({"a", "a", ""})}};
    auto first = catalog.validate_params(catalog.spec(NodeKind::QuestionClassifier), params);
    auto second = catalog.validate_params(catalog.spec(NodeKind::QuestionClassifier), params);
    REQUIRE(first.size() == second.size());
    for (std::size_t i = 0; i < first.size(); ++i)
        CHECK(first[i].to_string() == second[i].to_string());
    CHECK(first.size() >= 3);  // missing query, unknown key, bad class labels
}

TEST_CASE("start variables are restricted to platform-encodable types") {
    const Catalog& catalog = default_catalog();
    json params = {{"variables", json::array({{{"name", "xs"}, {"type", "array[string]"}}})}};
    auto violations = catalog.validate_params(catalog.spec(NodeKind::Start), params);
    REQUIRE_FALSE(violations.empty());
    CHECK(violations.front().kind == ViolationKind::InvalidValue);
}

TEST_CASE("model bindings can be overridden by config") {
    CatalogConfig config;
    config.model_overrides["llm"] = "my-local-model";
    Catalog catalog(config);
    CHECK(catalog.spec(NodeKind::Llm).model_binding == "my-local-model");
    CHECK(catalog.spec(NodeKind::QuestionClassifier).model_binding == "qwen3-max");
}

TEST_CASE("var-ref token parsing") {
    auto ref = parse_var_ref("{{#12.text#}}");
    REQUIRE(ref.has_value());
    CHECK(ref->node_id == "12");
    CHECK(ref->var_name == "text");
    CHECK(ref->render() == "{{#12.text#}}");

    CHECK_FALSE(parse_var_ref("{{#12.text#}").has_value());
    CHECK_FALSE(parse_var_ref("{{#12text#}}").has_value());
    CHECK_FALSE(is_pure_var_ref("pre {{#1.x#}}"));

    auto refs = find_var_refs("a {{#1.x#}} b {{#2.y#}} c {{#broken");
    REQUIRE(refs.size() == 2);
    CHECK(refs[0].node_id == "1");
    CHECK(refs[1].var_name == "y");
}

TEST_CASE("catalog dump carries one record per kind") {
    json dump = default_catalog().to_json();
    REQUIRE(dump.is_array());
    CHECK(dump.size() == kNodeKindCount);
    std::set<std::string> ids;
    for (const auto& rec : dump) ids.insert(rec.at("kind").get<std::string>());
    CHECK(ids.size() == kNodeKindCount);
    CHECK(ids.count("iteration-start") == 1);
}

TEST_CASE("var type parse and render round trip") {
    for (const char* text : {"string", "number", "boolean", "object", "file", "array[string]",
                             "array[file]", "array[object]"}) {
        auto t = VarType::parse(text);
        REQUIRE(t.has_value());
        CHECK(t->to_string() == text);
    }
    CHECK_FALSE(VarType::parse("array[array[string]]").has_value());
    CHECK_FALSE(VarType::parse("blob").has_value());
}
