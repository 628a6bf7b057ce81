#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vulgnn/common.hpp"
#include "vulgnn/graph_ir.hpp"

#include "test_support.hpp"

using vulgnn::CodeGraph;
using vulgnn::DataError;
using vulgnn::EdgeRecord;
using vulgnn::NodeRecord;
using vulgnn::ParseStats;
using vulgnn::TypeRegistry;

TEST_CASE("builtin registry has the full schema and positional IDs") {
    const TypeRegistry reg = TypeRegistry::builtin();
    CHECK(reg.node_kinds().size() == 44);
    CHECK(reg.edge_relations().size() == 20);

    CHECK(vulgnn::resolve_type(reg.node_kinds().front(), reg) == 1);
    CHECK(vulgnn::resolve_type(reg.node_kinds().back(), reg) == 44);
    CHECK(reg.resolve_edge_relation(reg.edge_relations().front()) == 1);
    CHECK(reg.resolve_edge_relation(reg.edge_relations().back()) == 20);

    CHECK(reg.node_kind_name(reg.resolve_node_kind("METHOD")) == "METHOD");
    CHECK_THROWS_AS(vulgnn::resolve_type("NOT_A_KIND", reg), DataError);
    CHECK_THROWS_AS(reg.resolve_edge_relation("NOT_A_RELATION"), DataError);
}

TEST_CASE("registry construction enforces exact counts and uniqueness") {
    std::vector<std::string> kinds(44);
    std::vector<std::string> rels(20);
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        kinds[i] = "K" + std::to_string(i);
    }
    for (std::size_t i = 0; i < rels.size(); ++i) {
        rels[i] = "R" + std::to_string(i);
    }
    CHECK_NOTHROW(TypeRegistry(kinds, rels));

    std::vector<std::string> short_kinds(kinds.begin(), kinds.end() - 1);
    CHECK_THROWS_AS(TypeRegistry(short_kinds, rels), DataError);

    auto dup_kinds = kinds;
    dup_kinds[5] = dup_kinds[4];
    CHECK_THROWS_AS(TypeRegistry(dup_kinds, rels), DataError);

    auto long_rels = rels;
    long_rels.push_back("R_EXTRA");
    CHECK_THROWS_AS(TypeRegistry(kinds, long_rels), DataError);
}

TEST_CASE("registry round-trips through its JSON file format") {
    const TypeRegistry reg = TypeRegistry::builtin();
    nlohmann::json doc = {{"node_kinds", reg.node_kinds()},
                         {"edge_relations", reg.edge_relations()}};
    const TypeRegistry loaded = TypeRegistry::from_json_text(doc.dump());
    CHECK(loaded.node_kinds() == reg.node_kinds());
    CHECK(loaded.edge_relations() == reg.edge_relations());

    CHECK_THROWS_AS(TypeRegistry::from_json_text("{"), DataError);
    CHECK_THROWS_AS(TypeRegistry::from_json_text(R"({"node_kinds": []})"), DataError);
}

TEST_CASE("minimal single-node sample parses") {
    const TypeRegistry reg = TypeRegistry::builtin();
    const CodeGraph g = vulgnn::parse_cpg_export(
        R"({"id": "m", "label": 0, "project": "p", "nodes": [{"id": 3, "kind": "METHOD", "code": "f"}], "edges": []})",
        reg);
    CHECK(g.sample_id == "m");
    CHECK(g.project == "p");
    CHECK(g.label == 0);
    CHECK(g.nodes.size() == 1);
    CHECK(g.edges.empty());
    CHECK(g.nodes[0].id == 0); // remapped
    CHECK(g.nodes[0].kind == reg.resolve_node_kind("METHOD"));
    CHECK(g.nodes[0].code == "f");
}

TEST_CASE("if-statement fixture matches its hand-written expectation") {
    const TypeRegistry reg = TypeRegistry::builtin();
    std::istringstream in(testutil::read_file(testutil::fixture_path("graphs/if_sample.jsonl")));
    std::string line;
    REQUIRE(std::getline(in, line));
    const CodeGraph g = vulgnn::parse_cpg_export(line, reg);

    const nlohmann::json expected =
        nlohmann::json::parse(testutil::read_file(testutil::fixture_path("graphs/if_sample.expected.json")));
    CHECK(g.sample_id == expected["sample_id"].get<std::string>());
    CHECK(g.project == expected["project"].get<std::string>());
    CHECK(g.label == expected["label"].get<int>());

    const auto kinds = expected["node_kinds"].get<std::vector<int>>();
    REQUIRE(g.nodes.size() == kinds.size());
    const auto code = expected["node_code"].get<std::vector<std::string>>();
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        CHECK(g.nodes[i].id == i);
        CHECK(g.nodes[i].kind == kinds[i]);
        CHECK(g.nodes[i].code == code[i]);
    }

    const auto edges = expected["edges"].get<std::vector<std::vector<int>>>();
    REQUIRE(g.edges.size() == edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) {
        CHECK(g.edges[i].src == static_cast<std::uint64_t>(edges[i][0]));
        CHECK(g.edges[i].dst == static_cast<std::uint64_t>(edges[i][1]));
        CHECK(g.edges[i].relation == edges[i][2]);
    }
}

TEST_CASE("remapping preserves edge incidence by content") {
    const TypeRegistry reg = TypeRegistry::builtin();
    // Scrambled, non-contiguous ids; each node's code states its identity.
    const CodeGraph g = vulgnn::parse_cpg_export(
        R"({"id": "x", "label": 1, "project": "p", "nodes": [)"
        R"({"id": 900, "kind": "CALL", "code": "call_900"},)"
        R"({"id": 7, "kind": "IDENTIFIER", "code": "ident_7"},)"
        R"({"id": 31, "kind": "LITERAL", "code": "lit_31"}],)"
        R"("edges": [{"src": 31, "dst": 900, "relation": "ARGUMENT", "attr": ""},)"
        R"({"src": 900, "dst": 7, "relation": "REACHING_DEF", "attr": "v"}]})",
        reg);
    REQUIRE(g.nodes.size() == 3);
    REQUIRE(g.edges.size() == 2);
    CHECK(g.nodes[g.edges[0].src].code == "lit_31");
    CHECK(g.nodes[g.edges[0].dst].code == "call_900");
    CHECK(g.nodes[g.edges[1].src].code == "call_900");
    CHECK(g.nodes[g.edges[1].dst].code == "ident_7");
    CHECK(g.edges[1].attr == "v");
}

TEST_CASE("parse rejects malformed and invalid samples") {
    const TypeRegistry reg = TypeRegistry::builtin();
    const auto parse = [&reg](const std::string& text) {
        return vulgnn::parse_cpg_export(text, reg);
    };

    CHECK_THROWS_AS(parse("not json"), DataError);
    CHECK_THROWS_AS(parse(R"({"id": "a", "project": "p", "nodes": [], "edges": []})"),
                    DataError); // missing label
    CHECK_THROWS_AS(
        parse(
            R"({"id": "a", "label": 2, "project": "p", "nodes": [{"id": 0, "kind": "METHOD", "code": ""}], "edges": []})"),
        DataError); // label out of range
    CHECK_THROWS_AS(
        parse(R"({"id": "a", "label": 0, "project": "p", "nodes": [], "edges": []})"),
        DataError); // zero nodes
    CHECK_THROWS_AS(
        parse(
            R"({"id": "a", "label": 0, "project": "p", "nodes": [{"id": 0, "kind": "ZIG", "code": ""}], "edges": []})"),
        DataError); // unknown kind
    CHECK_THROWS_AS(
        parse(
            R"({"id": "a", "label": 0, "project": "p", "nodes": [{"id": 0, "kind": "METHOD", "code": ""}], "edges": [{"src": 0, "dst": 5, "relation": "AST", "attr": ""}]})"),
        DataError); // dangling endpoint
    CHECK_THROWS_AS(
        parse(
            R"({"id": "a", "label": 0, "project": "p", "nodes": [{"id": 0, "kind": "METHOD", "code": ""}], "edges": [{"src": 0, "dst": 0, "relation": "HYPERJUMP", "attr": ""}]})"),
        DataError); // unknown relation
    CHECK_THROWS_AS(
        parse(
            R"({"id": "a", "label": 0, "project": "p", "nodes": [{"id": 4, "kind": "METHOD", "code": ""}, {"id": 4, "kind": "BLOCK", "code": ""}], "edges": []})"),
        DataError); // duplicate node id
}

TEST_CASE("missing code and attr fields default to empty strings") {
    const TypeRegistry reg = TypeRegistry::builtin();
    const CodeGraph g = vulgnn::parse_cpg_export(
        R"({"id": "a", "label": 0, "project": "p", "nodes": [{"id": 0, "kind": "BLOCK"}, {"id": 1, "kind": "RETURN"}], "edges": [{"src": 0, "dst": 1, "relation": "AST"}]})",
        reg);
    CHECK(g.nodes[0].code.empty());
    CHECK(g.edges[0].attr.empty());
}

TEST_CASE("serialize then parse is a structural round trip") {
    const TypeRegistry reg = TypeRegistry::builtin();
    std::istringstream in(testutil::read_file(testutil::fixture_path("graphs/if_sample.jsonl")));
    std::string line;
    REQUIRE(std::getline(in, line));
    const CodeGraph g = vulgnn::parse_cpg_export(line, reg);

    const std::string serialized = vulgnn::serialize_graph(g, reg);
    CHECK(serialized.find('\n') == std::string::npos);
    const CodeGraph g2 = vulgnn::parse_cpg_export(serialized, reg);

    CHECK(g2.sample_id == g.sample_id);
    CHECK(g2.project == g.project);
    CHECK(g2.label == g.label);
    REQUIRE(g2.nodes.size() == g.nodes.size());
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        CHECK(g2.nodes[i].kind == g.nodes[i].kind);
        CHECK(g2.nodes[i].code == g.nodes[i].code);
    }
    REQUIRE(g2.edges.size() == g.edges.size());
    for (std::size_t i = 0; i < g.edges.size(); ++i) {
        CHECK(g2.edges[i].src == g.edges[i].src);
        CHECK(g2.edges[i].dst == g.edges[i].dst);
        CHECK(g2.edges[i].relation == g.edges[i].relation);
        CHECK(g2.edges[i].attr == g.edges[i].attr);
    }

    // Serializing the reparsed graph reproduces the same bytes.
    CHECK(vulgnn::serialize_graph(g2, reg) == serialized);
}

TEST_CASE("every accepted parse passes validate_graph") {
    const TypeRegistry reg = TypeRegistry::builtin();
    std::istringstream in(testutil::read_file(testutil::fixture_path("graphs/valid3.jsonl")));
    const auto graphs = vulgnn::parse_cpg_jsonl(in, reg);
    CHECK(graphs.size() == 3);
    for (const CodeGraph& g : graphs) {
        CHECK(vulgnn::validate_graph(g).empty());
    }
}

TEST_CASE("validate_graph reports violations without mutating") {
    CodeGraph g;
    g.sample_id = "v";
    g.label = 0;
    g.nodes = {NodeRecord{0, 27, "f"}, NodeRecord{1, 7, ""}};
    g.edges = {EdgeRecord{0, 1, 3, ""}};
    CHECK(vulgnn::validate_graph(g).empty());

    SUBCASE("kind above 44") {
        g.nodes[1].kind = 45;
        const auto violations = vulgnn::validate_graph(g);
        REQUIRE(violations.size() == 1);
        CHECK(violations[0].find("node 1") != std::string::npos);
    }

    SUBCASE("duplicate node id") {
        g.nodes[1].id = 0;
        g.edges[0].dst = 0; // keep endpoints resolvable; isolate the id clash
        const auto violations = vulgnn::validate_graph(g);
        REQUIRE(violations.size() == 1);
        CHECK(violations[0].find("node 1") != std::string::npos);
    }

    SUBCASE("dangling endpoint and bad relation accumulate") {
        g.edges[0].dst = 9;
        g.edges[0].relation = 0;
        const auto violations = vulgnn::validate_graph(g);
        CHECK(violations.size() == 2);
    }

    SUBCASE("bad label and empty graph") {
        g.label = 3;
        g.nodes.clear();
        g.edges.clear();
        const auto violations = vulgnn::validate_graph(g);
        CHECK(violations.size() == 2);
    }
}

TEST_CASE("jsonl stream parsing with and without skip_bad") {
    const TypeRegistry reg = TypeRegistry::builtin();
    const std::string mixed = testutil::read_file(testutil::fixture_path("graphs/mixed.jsonl"));

    {
        std::istringstream in(mixed);
        CHECK_THROWS_WITH_AS(vulgnn::parse_cpg_jsonl(in, reg), doctest::Contains("line 2"),
                             DataError);
    }
    {
        std::istringstream in(mixed);
        ParseStats stats;
        const auto graphs = vulgnn::parse_cpg_jsonl(in, reg, true, &stats);
        CHECK(graphs.size() == 1);
        CHECK(graphs[0].sample_id == "good");
        CHECK(stats.parsed == 1);
        CHECK(stats.skipped == 1);
    }
    {
        // Blank lines are ignored, not counted as failures.
        std::istringstream in("\n  \n" + mixed + "\n");
        ParseStats stats;
        (void)vulgnn::parse_cpg_jsonl(in, reg, true, &stats);
        CHECK(stats.parsed == 1);
        CHECK(stats.skipped == 1);
    }
}
