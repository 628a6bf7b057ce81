#pragma once

#include <cstdint>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace vulgnn {

// One CPG node. After parse_cpg_export the id is the contiguous 0-based
// position within the graph; hand-built graphs may carry arbitrary ids.
struct NodeRecord {
    std::uint64_t id = 0;
    std::uint16_t kind = 0; // 1-based registry ID
    std::string code;
};

struct EdgeRecord {
    std::uint64_t src = 0;
    std::uint64_t dst = 0;
    std::uint16_t relation = 0; // 1-based registry ID
    std::string attr;
};

struct CodeGraph {
    std::string sample_id;
    std::string project;
    int label = 0;
    std::vector<NodeRecord> nodes;
    std::vector<EdgeRecord> edges;
};

// Maps CPG kind / relation names to positional 1-based IDs. The default
// schema follows Joern; alternative schemas load from a JSON file with
// the same list lengths.
class TypeRegistry {
public:
    static TypeRegistry builtin();
    static TypeRegistry from_json_text(std::string_view text);
    static TypeRegistry load(const std::string& path);

    TypeRegistry(std::vector<std::string> node_kinds, std::vector<std::string> edge_relations);

    std::uint16_t resolve_node_kind(const std::string& name) const;
    std::uint16_t resolve_edge_relation(const std::string& name) const;
    const std::string& node_kind_name(std::uint16_t id) const;
    const std::string& edge_relation_name(std::uint16_t id) const;

    const std::vector<std::string>& node_kinds() const { return node_kinds_; }
    const std::vector<std::string>& edge_relations() const { return edge_relations_; }

private:
    std::vector<std::string> node_kinds_;
    std::vector<std::string> edge_relations_;
};

// Node-kind name lookup matching the op-level naming used elsewhere.
std::uint16_t resolve_type(const std::string& name, const TypeRegistry& registry);

// Parses one JSONL record into a validated CodeGraph. Node ids are
// remapped to contiguous 0..N-1 in input order; edge endpoints follow.
// Throws DataError on malformed input, unknown names, dangling edges,
// or a missing/out-of-range label.
CodeGraph parse_cpg_export(std::string_view json_line, const TypeRegistry& registry);

// Emits the graph back in the single-line export format. Together with
// parse_cpg_export this round-trips structurally.
std::string serialize_graph(const CodeGraph& graph, const TypeRegistry& registry);

// Every invariant violation, one message per finding, referencing the
// offending node or edge index. Empty means valid.
std::vector<std::string> validate_graph(const CodeGraph& graph);

struct ParseStats {
    std::size_t parsed = 0;
    std::size_t skipped = 0;
};

// Reads a whole .jsonl stream. With skip_bad, records that fail to parse
// are counted and dropped instead of aborting the run.
std::vector<CodeGraph> parse_cpg_jsonl(std::istream& in, const TypeRegistry& registry,
                                       bool skip_bad = false, ParseStats* stats = nullptr);

} // namespace vulgnn
