#include "vulgnn/feature_graph.hpp"

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "vulgnn/common.hpp"

namespace vulgnn {

namespace {

constexpr char kShardMagic[4] = {'V', 'G', 'S', 'H'};
constexpr std::uint32_t kShardVersion = 1;

void write_record(std::ostream& os, const FeatureGraph& g) {
    std::ostringstream body;
    io::write_u32(body, static_cast<std::uint32_t>(g.sample_id.size()));
    io::write_bytes(body, g.sample_id);
    io::write_u32(body, static_cast<std::uint32_t>(g.project.size()));
    io::write_bytes(body, g.project);
    io::write_u8(body, static_cast<std::uint8_t>(g.label));
    io::write_u32(body, static_cast<std::uint32_t>(g.n_nodes()));
    for (std::uint16_t k : g.node_kinds) {
        io::write_u16(body, k);
    }
    for (std::uint32_t t : g.node_tokens) {
        io::write_u32(body, t);
    }
    io::write_u32(body, static_cast<std::uint32_t>(g.n_edges()));
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
        io::write_u32(body, g.edge_src[e]);
        io::write_u32(body, g.edge_dst[e]);
        io::write_u16(body, g.edge_relations[e]);
    }
    for (std::uint32_t t : g.edge_tokens) {
        io::write_u32(body, t);
    }
    const std::string bytes = body.str();
    io::write_u32(os, static_cast<std::uint32_t>(bytes.size()));
    io::write_bytes(os, bytes);
}

FeatureGraph read_record(std::istream& is, std::uint32_t l_node, std::uint32_t l_edge) {
    const std::uint32_t body_len = io::read_u32(is);
    (void)body_len;
    FeatureGraph g;
    g.l_node = l_node;
    g.l_edge = l_edge;
    const std::uint32_t id_len = io::read_u32(is);
    g.sample_id = io::read_bytes(is, id_len);
    const std::uint32_t project_len = io::read_u32(is);
    g.project = io::read_bytes(is, project_len);
    g.label = io::read_u8(is);
    const std::uint32_t n_nodes = io::read_u32(is);
    g.node_kinds.resize(n_nodes);
    for (std::uint32_t i = 0; i < n_nodes; ++i) {
        g.node_kinds[i] = io::read_u16(is);
    }
    g.node_tokens.resize(static_cast<std::size_t>(n_nodes) * l_node);
    for (auto& t : g.node_tokens) {
        t = io::read_u32(is);
    }
    const std::uint32_t n_edges = io::read_u32(is);
    g.edge_src.resize(n_edges);
    g.edge_dst.resize(n_edges);
    g.edge_relations.resize(n_edges);
    for (std::uint32_t e = 0; e < n_edges; ++e) {
        g.edge_src[e] = io::read_u32(is);
        g.edge_dst[e] = io::read_u32(is);
        g.edge_relations[e] = io::read_u16(is);
    }
    g.edge_tokens.resize(static_cast<std::size_t>(n_edges) * l_edge);
    for (auto& t : g.edge_tokens) {
        t = io::read_u32(is);
    }
    return g;
}

} // namespace

FeatureGraph featurize(const CodeGraph& graph, const BpeVocabulary& vocab,
                       std::uint32_t l_node, std::uint32_t l_edge) {
    FeatureGraph out;
    out.sample_id = graph.sample_id;
    out.project = graph.project;
    out.label = graph.label;
    out.l_node = l_node;
    out.l_edge = l_edge;
    out.node_kinds.reserve(graph.nodes.size());
    out.node_tokens.reserve(graph.nodes.size() * l_node);
    for (const NodeRecord& n : graph.nodes) {
        out.node_kinds.push_back(n.kind);
        const TokenWindow w = fit_window(encode(n.code, vocab), l_node, vocab.pad_id);
        out.node_tokens.insert(out.node_tokens.end(), w.ids.begin(), w.ids.end());
    }
    out.edge_src.reserve(graph.edges.size());
    out.edge_dst.reserve(graph.edges.size());
    out.edge_relations.reserve(graph.edges.size());
    out.edge_tokens.reserve(graph.edges.size() * l_edge);
    for (const EdgeRecord& e : graph.edges) {
        out.edge_src.push_back(static_cast<std::uint32_t>(e.src));
        out.edge_dst.push_back(static_cast<std::uint32_t>(e.dst));
        out.edge_relations.push_back(e.relation);
        const TokenWindow w = fit_window(encode(e.attr, vocab), l_edge, vocab.pad_id);
        out.edge_tokens.insert(out.edge_tokens.end(), w.ids.begin(), w.ids.end());
    }
    return out;
}

GraphBatch make_batch(const std::vector<const FeatureGraph*>& graphs) {
    if (graphs.empty()) {
        throw DataError("cannot batch zero graphs");
    }
    GraphBatch batch;
    batch.n_graphs = graphs.size();
    batch.l_node = graphs.front()->l_node;
    batch.l_edge = graphs.front()->l_edge;
    std::size_t node_base = 0;
    for (std::size_t g = 0; g < graphs.size(); ++g) {
        const FeatureGraph& fg = *graphs[g];
        if (fg.l_node != batch.l_node || fg.l_edge != batch.l_edge) {
            throw DataError("cannot batch graphs with differing window lengths");
        }
        batch.node_kinds.insert(batch.node_kinds.end(), fg.node_kinds.begin(),
                                fg.node_kinds.end());
        batch.node_tokens.insert(batch.node_tokens.end(), fg.node_tokens.begin(),
                                 fg.node_tokens.end());
        for (std::size_t e = 0; e < fg.n_edges(); ++e) {
            batch.edge_src.push_back(node_base + fg.edge_src[e]);
            batch.edge_dst.push_back(node_base + fg.edge_dst[e]);
        }
        batch.edge_relations.insert(batch.edge_relations.end(), fg.edge_relations.begin(),
                                    fg.edge_relations.end());
        batch.edge_tokens.insert(batch.edge_tokens.end(), fg.edge_tokens.begin(),
                                 fg.edge_tokens.end());
        batch.graph_of_node.insert(batch.graph_of_node.end(), fg.n_nodes(), g);
        batch.labels.push_back(fg.label);
        node_base += fg.n_nodes();
    }
    return batch;
}

GraphBatch make_batch(const std::vector<FeatureGraph>& graphs,
                      const std::vector<std::size_t>& indices) {
    std::vector<const FeatureGraph*> view;
    view.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= graphs.size()) {
            throw DataError("batch index out of range");
        }
        view.push_back(&graphs[i]);
    }
    return make_batch(view);
}

std::string shard_file_name(std::uint32_t shard) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "shard-%04u.bin", shard);
    return buf;
}

ShardWriter::ShardWriter(std::string out_dir, DatasetMeta meta, std::size_t records_per_shard)
    : out_dir_(std::move(out_dir)), meta_(meta), records_per_shard_(records_per_shard) {
    if (records_per_shard_ < 1) {
        throw ConfigError("records_per_shard must be at least 1");
    }
    std::filesystem::create_directories(out_dir_);
}

void ShardWriter::open_next_shard() {
    if (out_.is_open()) {
        out_.close();
        ++current_shard_;
    }
    const std::string path =
        (std::filesystem::path(out_dir_) / shard_file_name(current_shard_)).string();
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) {
        throw DataError("cannot open shard file for writing: " + path);
    }
    io::write_bytes(out_, std::string_view(kShardMagic, 4));
    io::write_u32(out_, kShardVersion);
    io::write_u32(out_, meta_.l_node);
    io::write_u32(out_, meta_.l_edge);
    records_in_current_ = 0;
}

void ShardWriter::add(const FeatureGraph& graph) {
    if (finished_) {
        throw DataError("ShardWriter already finished");
    }
    if (!out_.is_open() || records_in_current_ == records_per_shard_) {
        open_next_shard();
    }
    SampleRef ref;
    ref.sample_id = graph.sample_id;
    ref.project = graph.project;
    ref.label = graph.label;
    ref.shard = current_shard_;
    ref.offset = static_cast<std::uint64_t>(out_.tellp());
    write_record(out_, graph);
    ++records_in_current_;
    refs_.push_back(std::move(ref));
}

void ShardWriter::finish() {
    if (finished_) {
        return;
    }
    finished_ = true;
    if (out_.is_open()) {
        out_.close();
    }
    nlohmann::json index;
    index["format_version"] = kShardVersion;
    index["l_node"] = meta_.l_node;
    index["l_edge"] = meta_.l_edge;
    index["vocab_size"] = meta_.vocab_size;
    index["pad_id"] = meta_.pad_id;
    nlohmann::json samples = nlohmann::json::array();
    for (const SampleRef& r : refs_) {
        samples.push_back({{"id", r.sample_id},
                           {"project", r.project},
                           {"label", r.label},
                           {"shard", r.shard},
                           {"offset", r.offset}});
    }
    index["samples"] = std::move(samples);
    const std::string path = (std::filesystem::path(out_dir_) / "index.json").string();
    std::ofstream idx(path, std::ios::binary | std::ios::trunc);
    if (!idx) {
        throw DataError("cannot write dataset index: " + path);
    }
    idx << index.dump(2) << "\n";
}

ShardDataset ShardDataset::open(const std::string& dir) {
    const std::string path = (std::filesystem::path(dir) / "index.json").string();
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open dataset index: " + path);
    }
    nlohmann::json index;
    try {
        index = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed dataset index: ") + e.what());
    }
    ShardDataset ds;
    ds.dir_ = dir;
    try {
        ds.meta_.l_node = index.at("l_node").get<std::uint32_t>();
        ds.meta_.l_edge = index.at("l_edge").get<std::uint32_t>();
        ds.meta_.vocab_size = index.at("vocab_size").get<std::uint32_t>();
        ds.meta_.pad_id = index.at("pad_id").get<std::uint32_t>();
        for (const nlohmann::json& s : index.at("samples")) {
            SampleRef ref;
            ref.sample_id = s.at("id").get<std::string>();
            ref.project = s.at("project").get<std::string>();
            ref.label = s.at("label").get<int>();
            ref.shard = s.at("shard").get<std::uint32_t>();
            ref.offset = s.at("offset").get<std::uint64_t>();
            ds.refs_.push_back(std::move(ref));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("dataset index missing fields: ") + e.what());
    }
    return ds;
}

FeatureGraph ShardDataset::load(std::size_t index) const {
    if (index >= refs_.size()) {
        throw DataError("sample index out of range");
    }
    const SampleRef& ref = refs_[index];
    const std::string path =
        (std::filesystem::path(dir_) / shard_file_name(ref.shard)).string();
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open shard file: " + path);
    }
    const std::string magic = io::read_bytes(in, 4);
    if (magic != std::string(kShardMagic, 4)) {
        throw DataError("bad shard magic in " + path);
    }
    const std::uint32_t version = io::read_u32(in);
    if (version != kShardVersion) {
        throw DataError("unsupported shard version " + std::to_string(version));
    }
    in.seekg(static_cast<std::streamoff>(ref.offset));
    if (!in) {
        throw DataError("cannot seek to record in " + path);
    }
    return read_record(in, meta_.l_node, meta_.l_edge);
}

std::vector<FeatureGraph> ShardDataset::load_all() const {
    std::vector<FeatureGraph> out;
    out.reserve(refs_.size());
    for (std::size_t i = 0; i < refs_.size(); ++i) {
        out.push_back(load(i));
    }
    return out;
}

} // namespace vulgnn
