#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "vulgnn/bpe.hpp"
#include "vulgnn/graph_ir.hpp"

namespace vulgnn {

// A CodeGraph after tokenization: everything the model consumes, with
// text replaced by fixed-length token windows.
struct FeatureGraph {
    std::string sample_id;
    std::string project;
    int label = 0;
    std::uint32_t l_node = 0;
    std::uint32_t l_edge = 0;
    std::vector<std::uint16_t> node_kinds;     // N
    std::vector<std::uint32_t> node_tokens;    // N * l_node
    std::vector<std::uint32_t> edge_src;       // E, node positions
    std::vector<std::uint32_t> edge_dst;       // E
    std::vector<std::uint16_t> edge_relations; // E
    std::vector<std::uint32_t> edge_tokens;    // E * l_edge

    std::size_t n_nodes() const { return node_kinds.size(); }
    std::size_t n_edges() const { return edge_src.size(); }
};

FeatureGraph featurize(const CodeGraph& graph, const BpeVocabulary& vocab,
                       std::uint32_t l_node, std::uint32_t l_edge);

// Several graphs packed into one disjoint union for a forward pass.
struct GraphBatch {
    std::size_t n_graphs = 0;
    std::uint32_t l_node = 0;
    std::uint32_t l_edge = 0;
    std::vector<std::uint16_t> node_kinds;
    std::vector<std::uint32_t> node_tokens;
    std::vector<std::size_t> edge_src; // batch-level node positions
    std::vector<std::size_t> edge_dst;
    std::vector<std::uint16_t> edge_relations;
    std::vector<std::uint32_t> edge_tokens;
    std::vector<std::size_t> graph_of_node; // N, owning graph per node
    std::vector<int> labels;                // per graph

    std::size_t n_nodes() const { return node_kinds.size(); }
    std::size_t n_edges() const { return edge_src.size(); }
};

GraphBatch make_batch(const std::vector<FeatureGraph>& graphs,
                      const std::vector<std::size_t>& indices);
GraphBatch make_batch(const std::vector<const FeatureGraph*>& graphs);

// Shard container: binary records plus a JSON index. Byte-identical
// output for identical input, so reruns are cheap to verify.
struct DatasetMeta {
    std::uint32_t l_node = 0;
    std::uint32_t l_edge = 0;
    std::uint32_t vocab_size = 0;
    std::uint32_t pad_id = 0;
};

struct SampleRef {
    std::string sample_id;
    std::string project;
    int label = 0;
    std::uint32_t shard = 0;
    std::uint64_t offset = 0;
};

class ShardWriter {
public:
    ShardWriter(std::string out_dir, DatasetMeta meta, std::size_t records_per_shard = 4096);
    void add(const FeatureGraph& graph);
    // Writes index.json; the writer must not be reused afterwards.
    void finish();

private:
    void open_next_shard();

    std::string out_dir_;
    DatasetMeta meta_;
    std::size_t records_per_shard_;
    std::size_t records_in_current_ = 0;
    std::uint32_t current_shard_ = 0;
    std::ofstream out_;
    std::vector<SampleRef> refs_;
    bool finished_ = false;
};

class ShardDataset {
public:
    static ShardDataset open(const std::string& dir);

    const DatasetMeta& meta() const { return meta_; }
    const std::vector<SampleRef>& refs() const { return refs_; }
    std::size_t size() const { return refs_.size(); }

    FeatureGraph load(std::size_t index) const;
    std::vector<FeatureGraph> load_all() const;

private:
    std::string dir_;
    DatasetMeta meta_;
    std::vector<SampleRef> refs_;
};

std::string shard_file_name(std::uint32_t shard);

} // namespace vulgnn
