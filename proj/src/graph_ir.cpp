#include "vulgnn/graph_ir.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "vulgnn/common.hpp"

namespace vulgnn {

namespace {

using nlohmann::json;

const std::vector<std::string>& joern_node_kinds() {
    static const std::vector<std::string> kinds = {
        "ANNOTATION",
        "ANNOTATION_LITERAL",
        "ANNOTATION_PARAMETER",
        "ANNOTATION_PARAMETER_ASSIGN",
        "ARRAY_INITIALIZER",
        "BINDING",
        "BLOCK",
        "CALL",
        "CLOSURE_BINDING",
        "COMMENT",
        "CONFIG_FILE",
        "CONTROL_STRUCTURE",
        "DEPENDENCY",
        "FIELD_IDENTIFIER",
        "FILE",
        "FINDING",
        "IDENTIFIER",
        "IMPORT",
        "JUMP_LABEL",
        "JUMP_TARGET",
        "KEY_VALUE_PAIR",
        "LITERAL",
        "LOCAL",
        "LOCATION",
        "MEMBER",
        "META_DATA",
        "METHOD",
        "METHOD_PARAMETER_IN",
        "METHOD_PARAMETER_OUT",
        "METHOD_REF",
        "METHOD_RETURN",
        "MODIFIER",
        "NAMESPACE",
        "NAMESPACE_BLOCK",
        "RETURN",
        "TAG",
        "TAG_NODE_PAIR",
        "TEMPLATE_DOM",
        "TYPE",
        "TYPE_ARGUMENT",
        "TYPE_DECL",
        "TYPE_PARAMETER",
        "TYPE_REF",
        "UNKNOWN",
    };
    return kinds;
}

const std::vector<std::string>& joern_edge_relations() {
    static const std::vector<std::string> relations = {
        "ALIAS_OF",
        "ARGUMENT",
        "AST",
        "BINDS",
        "BINDS_TO",
        "CALL",
        "CAPTURE",
        "CAPTURED_BY",
        "CDG",
        "CFG",
        "CONDITION",
        "CONTAINS",
        "DOMINATE",
        "EVAL_TYPE",
        "INHERITS_FROM",
        "PARAMETER_LINK",
        "POST_DOMINATE",
        "REACHING_DEF",
        "RECEIVER",
        "REF",
    };
    return relations;
}

std::uint16_t lookup(const std::vector<std::string>& names, const std::string& name,
                     const char* what) {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) {
            return static_cast<std::uint16_t>(i + 1);
        }
    }
    throw DataError(std::string("unknown ") + what + " name: " + name);
}

const json& require_field(const json& obj, const char* key, const char* context) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw DataError(std::string(context) + ": missing field \"" + key + "\"");
    }
    return *it;
}

std::string string_field(const json& obj, const char* key, const char* context) {
    const json& v = require_field(obj, key, context);
    if (!v.is_string()) {
        throw DataError(std::string(context) + ": field \"" + key + "\" must be a string");
    }
    return v.get<std::string>();
}

std::uint64_t uint_field(const json& obj, const char* key, const char* context) {
    const json& v = require_field(obj, key, context);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw DataError(std::string(context) + ": field \"" + key +
                        "\" must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

std::string optional_text(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        return {};
    }
    if (!it->is_string()) {
        throw DataError(std::string("field \"") + key + "\" must be a string");
    }
    return it->get<std::string>();
}

} // namespace

TypeRegistry::TypeRegistry(std::vector<std::string> node_kinds,
                           std::vector<std::string> edge_relations)
    : node_kinds_(std::move(node_kinds)), edge_relations_(std::move(edge_relations)) {
    if (node_kinds_.size() != kNodeKindCount) {
        throw DataError("registry must list exactly " + std::to_string(kNodeKindCount) +
                        " node kinds, got " + std::to_string(node_kinds_.size()));
    }
    if (edge_relations_.size() != kEdgeRelationCount) {
        throw DataError("registry must list exactly " + std::to_string(kEdgeRelationCount) +
                        " edge relations, got " + std::to_string(edge_relations_.size()));
    }
    std::unordered_set<std::string> seen;
    for (const std::string& k : node_kinds_) {
        if (!seen.insert(k).second) {
            throw DataError("duplicate node kind in registry: " + k);
        }
    }
    seen.clear();
    for (const std::string& r : edge_relations_) {
        if (!seen.insert(r).second) {
            throw DataError("duplicate edge relation in registry: " + r);
        }
    }
}

TypeRegistry TypeRegistry::builtin() {
    return TypeRegistry(joern_node_kinds(), joern_edge_relations());
}

TypeRegistry TypeRegistry::from_json_text(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed registry JSON: ") + e.what());
    }
    const json& kinds = require_field(doc, "node_kinds", "registry");
    const json& relations = require_field(doc, "edge_relations", "registry");
    if (!kinds.is_array() || !relations.is_array()) {
        throw DataError("registry: node_kinds and edge_relations must be arrays");
    }
    std::vector<std::string> kind_names, relation_names;
    for (const json& k : kinds) {
        if (!k.is_string()) {
            throw DataError("registry: node kind entries must be strings");
        }
        kind_names.push_back(k.get<std::string>());
    }
    for (const json& r : relations) {
        if (!r.is_string()) {
            throw DataError("registry: edge relation entries must be strings");
        }
        relation_names.push_back(r.get<std::string>());
    }
    return TypeRegistry(std::move(kind_names), std::move(relation_names));
}

TypeRegistry TypeRegistry::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open registry file: " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

std::uint16_t TypeRegistry::resolve_node_kind(const std::string& name) const {
    return lookup(node_kinds_, name, "node kind");
}

std::uint16_t TypeRegistry::resolve_edge_relation(const std::string& name) const {
    return lookup(edge_relations_, name, "edge relation");
}

const std::string& TypeRegistry::node_kind_name(std::uint16_t id) const {
    if (id < 1 || id > node_kinds_.size()) {
        throw DataError("node kind ID out of range: " + std::to_string(id));
    }
    return node_kinds_[id - 1];
}

const std::string& TypeRegistry::edge_relation_name(std::uint16_t id) const {
    if (id < 1 || id > edge_relations_.size()) {
        throw DataError("edge relation ID out of range: " + std::to_string(id));
    }
    return edge_relations_[id - 1];
}

std::uint16_t resolve_type(const std::string& name, const TypeRegistry& registry) {
    return registry.resolve_node_kind(name);
}

CodeGraph parse_cpg_export(std::string_view json_line, const TypeRegistry& registry) {
    json doc;
    try {
        doc = json::parse(json_line);
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) {
        throw DataError("sample record must be a JSON object");
    }

    CodeGraph graph;
    graph.sample_id = string_field(doc, "id", "sample");
    graph.project = string_field(doc, "project", "sample");
    const json& label = require_field(doc, "label", "sample");
    if (!label.is_number_integer() || (label.get<int>() != 0 && label.get<int>() != 1)) {
        throw DataError("sample " + graph.sample_id + ": label must be 0 or 1");
    }
    graph.label = label.get<int>();

    const json& nodes = require_field(doc, "nodes", "sample");
    const json& edges = require_field(doc, "edges", "sample");
    if (!nodes.is_array() || !edges.is_array()) {
        throw DataError("sample " + graph.sample_id + ": nodes and edges must be arrays");
    }
    if (nodes.empty()) {
        throw DataError("sample " + graph.sample_id + ": graph has no nodes");
    }

    std::unordered_map<std::uint64_t, std::uint64_t> remap;
    remap.reserve(nodes.size());
    graph.nodes.reserve(nodes.size());
    for (const json& n : nodes) {
        NodeRecord rec;
        const std::uint64_t export_id = uint_field(n, "id", "node");
        rec.id = graph.nodes.size();
        rec.kind = registry.resolve_node_kind(string_field(n, "kind", "node"));
        rec.code = optional_text(n, "code");
        if (!remap.emplace(export_id, rec.id).second) {
            throw DataError("sample " + graph.sample_id + ": duplicate node id " +
                            std::to_string(export_id));
        }
        graph.nodes.push_back(std::move(rec));
    }

    graph.edges.reserve(edges.size());
    for (const json& e : edges) {
        EdgeRecord rec;
        const std::uint64_t src = uint_field(e, "src", "edge");
        const std::uint64_t dst = uint_field(e, "dst", "edge");
        auto si = remap.find(src);
        auto di = remap.find(dst);
        if (si == remap.end() || di == remap.end()) {
            throw DataError("sample " + graph.sample_id + ": edge endpoint " +
                            std::to_string(si == remap.end() ? src : dst) +
                            " does not name a node");
        }
        rec.src = si->second;
        rec.dst = di->second;
        rec.relation = registry.resolve_edge_relation(string_field(e, "relation", "edge"));
        rec.attr = optional_text(e, "attr");
        graph.edges.push_back(std::move(rec));
    }

    const std::vector<std::string> violations = validate_graph(graph);
    if (!violations.empty()) {
        throw DataError("sample " + graph.sample_id + ": " + violations.front());
    }
    return graph;
}

std::string serialize_graph(const CodeGraph& graph, const TypeRegistry& registry) {
    json doc;
    doc["id"] = graph.sample_id;
    doc["project"] = graph.project;
    doc["label"] = graph.label;
    json nodes = json::array();
    for (const NodeRecord& n : graph.nodes) {
        nodes.push_back({{"id", n.id}, {"kind", registry.node_kind_name(n.kind)}, {"code", n.code}});
    }
    json edges = json::array();
    for (const EdgeRecord& e : graph.edges) {
        edges.push_back({{"src", e.src},
                         {"dst", e.dst},
                         {"relation", registry.edge_relation_name(e.relation)},
                         {"attr", e.attr}});
    }
    doc["nodes"] = std::move(nodes);
    doc["edges"] = std::move(edges);
    return doc.dump();
}

std::vector<std::string> validate_graph(const CodeGraph& graph) {
    std::vector<std::string> violations;
    if (graph.nodes.empty()) {
        violations.push_back("graph has no nodes");
    }
    if (graph.label != 0 && graph.label != 1) {
        violations.push_back("label " + std::to_string(graph.label) + " not in {0,1}");
    }
    std::unordered_set<std::uint64_t> ids;
    for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
        const NodeRecord& n = graph.nodes[i];
        if (n.kind < 1 || n.kind > kNodeKindCount) {
            violations.push_back("node " + std::to_string(i) + ": kind " +
                                 std::to_string(n.kind) + " outside 1..=" +
                                 std::to_string(kNodeKindCount));
        }
        if (!ids.insert(n.id).second) {
            violations.push_back("node " + std::to_string(i) + ": duplicate id " +
                                 std::to_string(n.id));
        }
    }
    for (std::size_t i = 0; i < graph.edges.size(); ++i) {
        const EdgeRecord& e = graph.edges[i];
        if (e.relation < 1 || e.relation > kEdgeRelationCount) {
            violations.push_back("edge " + std::to_string(i) + ": relation " +
                                 std::to_string(e.relation) + " outside 1..=" +
                                 std::to_string(kEdgeRelationCount));
        }
        if (ids.find(e.src) == ids.end()) {
            violations.push_back("edge " + std::to_string(i) + ": src " +
                                 std::to_string(e.src) + " does not name a node");
        }
        if (ids.find(e.dst) == ids.end()) {
            violations.push_back("edge " + std::to_string(i) + ": dst " +
                                 std::to_string(e.dst) + " does not name a node");
        }
    }
    return violations;
}

std::vector<CodeGraph> parse_cpg_jsonl(std::istream& in, const TypeRegistry& registry,
                                       bool skip_bad, ParseStats* stats) {
    std::vector<CodeGraph> graphs;
    std::string line;
    std::size_t line_no = 0;
    std::size_t skipped = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            graphs.push_back(parse_cpg_export(line, registry));
        } catch (const DataError& e) {
            if (!skip_bad) {
                throw DataError("line " + std::to_string(line_no) + ": " + e.what());
            }
            ++skipped;
        }
    }
    if (stats != nullptr) {
        stats->parsed = graphs.size();
        stats->skipped = skipped;
    }
    return graphs;
}

} // namespace vulgnn
