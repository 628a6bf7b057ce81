#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "vulgnn/bpe.hpp"
#include "vulgnn/feature_graph.hpp"
#include "vulgnn/graph_ir.hpp"
#include "vulgnn/model.hpp"
#include "vulgnn/rng.hpp"
#include "vulgnn/train.hpp"

#include "test_support.hpp"

using vulgnn::ConfigError;
using vulgnn::DataError;
using vulgnn::EdgeRepr;
using vulgnn::FeatureGraph;
using vulgnn::GraphBatch;
using vulgnn::HeadMode;
using vulgnn::ModelConfig;
using vulgnn::ModelParameters;
using vulgnn::NodeRepr;
using vulgnn::Rng;
using vulgnn::Tensor;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.vocab_size = 64;
    c.token_dim = 4;
    c.l_node = 3;
    c.l_edge = 4;
    c.hidden_dim = 8;
    c.n_layers = 2;
    c.dropout_p = 0.0;
    c.d_edge_type = 4;
    c.seed = 7;
    return c;
}

FeatureGraph make_feature_graph(Rng& rng, const ModelConfig& c, std::size_t n_nodes,
                                std::vector<std::pair<std::uint32_t, std::uint32_t>> edges,
                                int label) {
    FeatureGraph g;
    g.sample_id = "synthetic";
    g.project = "test";
    g.label = label;
    g.l_node = c.l_node;
    g.l_edge = c.l_edge;
    for (std::size_t i = 0; i < n_nodes; ++i) {
        g.node_kinds.push_back(static_cast<std::uint16_t>(1 + rng.below(44)));
        for (std::uint32_t t = 0; t < c.l_node; ++t) {
            g.node_tokens.push_back(static_cast<std::uint32_t>(rng.below(c.vocab_size)));
        }
    }
    for (const auto& [s, d] : edges) {
        g.edge_src.push_back(s);
        g.edge_dst.push_back(d);
        g.edge_relations.push_back(static_cast<std::uint16_t>(1 + rng.below(20)));
        for (std::uint32_t t = 0; t < c.l_edge; ++t) {
            g.edge_tokens.push_back(static_cast<std::uint32_t>(rng.below(c.vocab_size)));
        }
    }
    return g;
}

std::vector<ModelConfig> all_variation_configs(const ModelConfig& base) {
    std::vector<ModelConfig> out;
    for (NodeRepr nr : {NodeRepr::tokens, NodeRepr::types}) {
        for (EdgeRepr er : {EdgeRepr::none, EdgeRepr::type_embed, EdgeRepr::tokens}) {
            for (HeadMode hm : {HeadMode::two_layer, HeadMode::single_linear}) {
                ModelConfig c = base;
                c.variations = {nr, er, hm};
                out.push_back(c);
            }
        }
    }
    return out;
}

// Independent parameter inventory: name and element count derived from
// the architecture description alone, never from build().
std::vector<std::pair<std::string, std::size_t>> expected_inventory(const ModelConfig& c) {
    std::vector<std::pair<std::string, std::size_t>> out;
    const std::size_t d = c.hidden_dim;
    const bool wants_tokens =
        c.variations.node_repr == NodeRepr::tokens || c.variations.edge_repr == EdgeRepr::tokens;
    if (wants_tokens) {
        out.emplace_back("embedding", std::size_t{c.vocab_size} * c.token_dim);
    }
    if (c.variations.node_repr == NodeRepr::types) {
        out.emplace_back("node_type_embedding", std::size_t{44} * c.token_dim);
    }
    if (c.variations.edge_repr == EdgeRepr::type_embed) {
        out.emplace_back("edge_type_embedding", std::size_t{20} * c.d_edge_type);
    }
    std::size_t edge_dim = 0;
    if (c.variations.edge_repr == EdgeRepr::type_embed) {
        edge_dim = c.d_edge_type;
    } else if (c.variations.edge_repr == EdgeRepr::tokens) {
        edge_dim = std::size_t{c.l_edge} * c.token_dim;
    }
    for (std::uint32_t layer = 0; layer < c.n_layers; ++layer) {
        const std::size_t in_dim =
            layer == 0 ? (c.variations.node_repr == NodeRepr::tokens
                              ? std::size_t{c.l_node} * c.token_dim
                              : c.token_dim)
                       : d;
        const std::string p = "conv" + std::to_string(layer) + ".";
        out.emplace_back(p + "w_query", in_dim * d);
        out.emplace_back(p + "w_message", in_dim * d);
        out.emplace_back(p + "w_self", in_dim * d);
        out.emplace_back(p + "bias", d);
        if (edge_dim > 0) {
            out.emplace_back(p + "w_edge", edge_dim * d);
        }
        out.emplace_back(p + "prelu_slope", 1);
        out.emplace_back(p + "norm_gamma", d);
        out.emplace_back(p + "norm_beta", d);
        out.emplace_back(p + "norm_alpha", d);
    }
    if (c.variations.head_mode == HeadMode::two_layer) {
        out.emplace_back("head.w1", d * d);
        out.emplace_back("head.b1", d);
    }
    out.emplace_back("head.w2", d * 2);
    out.emplace_back("head.b2", 2);
    return out;
}

} // namespace

TEST_CASE("default configuration parameter budget") {
    const ModelConfig config; // defaults
    const ModelParameters<float> params = vulgnn::build<float>(config);

    CHECK(params.at("embedding").size() == 786432); // 49152 * 16
    CHECK(params.at("embedding").shape == std::vector<std::size_t>{49152, 16});

    const std::size_t total = vulgnn::param_count(params);
    CHECK(total == 1101192);
    CHECK(total >= 1000000);
    CHECK(total <= 1210000);

    // Per-layer budget: 3 dense maps + bias + PReLU + three norm vectors.
    std::size_t layer0 = 0;
    for (const auto& [name, t] : params.arrays) {
        if (name.rfind("conv0.", 0) == 0) {
            layer0 += t.size();
        }
    }
    CHECK(layer0 == 3u * 128 * 128 + 128 + 1 + 3u * 128);
    CHECK(params.at("conv0.w_query").shape == std::vector<std::size_t>{128, 128});
    CHECK(params.at("head.w2").shape == std::vector<std::size_t>{128, 2});
}

TEST_CASE("parameter inventories match the independent shape walker") {
    for (const ModelConfig& c : all_variation_configs(small_config())) {
        const auto params = vulgnn::build<float>(c);
        const auto expected = expected_inventory(c);
        REQUIRE(params.arrays.size() == expected.size());
        std::size_t expected_total = 0;
        for (std::size_t i = 0; i < expected.size(); ++i) {
            CHECK(params.arrays[i].first == expected[i].first);
            CHECK(params.arrays[i].second.size() == expected[i].second);
            expected_total += expected[i].second;
        }
        CHECK(vulgnn::param_count(params) == expected_total);
    }

    // And once at full size for the ablation that embeds edge tokens.
    ModelConfig c;
    c.variations.edge_repr = EdgeRepr::tokens;
    const auto params = vulgnn::build<float>(c);
    std::size_t expected_total = 0;
    for (const auto& [name, count] : expected_inventory(c)) {
        expected_total += count;
    }
    CHECK(vulgnn::param_count(params) == expected_total);
    CHECK(params.at("conv0.w_edge").shape == std::vector<std::size_t>{256, 128});
}

TEST_CASE("first conv width follows the node representation") {
    ModelConfig c;
    CHECK(c.first_input_dim() == 128);
    const auto tok = vulgnn::build<float>(c);
    CHECK(tok.at("conv0.w_query").shape[0] == 128);
    CHECK(tok.at("conv1.w_query").shape[0] == 128);

    c.variations.node_repr = NodeRepr::types;
    CHECK(c.first_input_dim() == 16);
    const auto typ = vulgnn::build<float>(c);
    CHECK(typ.at("conv0.w_query").shape[0] == 16);
    CHECK(typ.at("conv1.w_query").shape[0] == 128);
}

TEST_CASE("initialization is seeded and distribution-correct") {
    ModelConfig c = small_config();
    const auto a = vulgnn::build<double>(c);
    const auto b = vulgnn::build<double>(c);
    c.seed = 8;
    const auto other = vulgnn::build<double>(c);

    bool all_equal = true;
    bool any_differ = false;
    for (std::size_t i = 0; i < a.arrays.size(); ++i) {
        all_equal = all_equal && a.arrays[i].second.data == b.arrays[i].second.data;
        any_differ = any_differ || a.arrays[i].second.data != other.arrays[i].second.data;
    }
    CHECK(all_equal);
    CHECK(any_differ);

    for (double v : a.at("conv0.bias").data) {
        CHECK(v == 0.0);
    }
    for (double v : a.at("conv1.norm_gamma").data) {
        CHECK(v == 1.0);
    }
    for (double v : a.at("conv1.norm_beta").data) {
        CHECK(v == 0.0);
    }
    for (double v : a.at("conv1.norm_alpha").data) {
        CHECK(v == 1.0);
    }
    CHECK(a.at("conv0.prelu_slope")[0] == 0.25);
    CHECK(a.at("head.b2")[0] == 0.0);

    // Dense maps stay inside the fan-in bound.
    const Tensor<double>& w = a.at("conv0.w_query");
    const double bound = std::sqrt(1.0 / static_cast<double>(w.shape[0]));
    for (double v : w.data) {
        CHECK(std::abs(v) <= bound);
    }

    // Embedding: Gaussian with sigma 0.02 (full-size table for a stable
    // sample; mean near 0, standard deviation near 0.02).
    const auto big = vulgnn::build<double>(ModelConfig{});
    const Tensor<double>& emb = big.at("embedding");
    double mean = 0.0;
    for (double v : emb.data) {
        mean += v;
    }
    mean /= static_cast<double>(emb.size());
    double var = 0.0;
    for (double v : emb.data) {
        var += (v - mean) * (v - mean);
    }
    var /= static_cast<double>(emb.size());
    CHECK(std::abs(mean) < 1e-3);
    CHECK(std::sqrt(var) == doctest::Approx(0.02).epsilon(0.05));
}

TEST_CASE("forward yields finite two-column logits for every variation") {
    Rng rng(91);
    const ModelConfig base = small_config();
    const FeatureGraph g1 = make_feature_graph(rng, base, 4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}}, 1);
    const FeatureGraph g2 = make_feature_graph(rng, base, 3, {{0, 1}, {2, 1}}, 0);
    const std::vector<FeatureGraph> graphs = {g1, g2};

    for (const ModelConfig& c : all_variation_configs(base)) {
        const auto params = vulgnn::build<double>(c);
        const GraphBatch batch = vulgnn::make_batch(graphs, {0, 1});
        const Tensor<double> logits = vulgnn::forward(params, c, batch);
        REQUIRE(logits.shape == std::vector<std::size_t>{2, 2});
        CHECK(logits.all_finite());
        // Eval-mode forward is deterministic.
        const Tensor<double> again = vulgnn::forward(params, c, batch);
        CHECK(logits.data == again.data);
    }
}

TEST_CASE("graphs in a batch do not influence each other") {
    Rng rng(92);
    const ModelConfig c = small_config();
    const auto params = vulgnn::build<double>(c);
    const FeatureGraph g1 = make_feature_graph(rng, c, 5, {{0, 1}, {1, 2}, {3, 4}, {4, 0}}, 1);
    const FeatureGraph g2 = make_feature_graph(rng, c, 2, {{0, 1}}, 0);
    const FeatureGraph g3 = make_feature_graph(rng, c, 3, {{0, 2}, {1, 2}}, 1);
    const std::vector<FeatureGraph> graphs = {g1, g2, g3};

    const Tensor<double> together = vulgnn::forward(params, c, vulgnn::make_batch(graphs, {0, 1, 2}));
    for (std::size_t i = 0; i < 3; ++i) {
        const Tensor<double> alone = vulgnn::forward(params, c, vulgnn::make_batch(graphs, {i}));
        CHECK(std::abs(together.at(i, 0) - alone.at(0, 0)) <= 1e-6);
        CHECK(std::abs(together.at(i, 1) - alone.at(0, 1)) <= 1e-6);
    }
}

TEST_CASE("ablation variations change the function being computed") {
    Rng rng(93);
    const ModelConfig base = small_config();
    const FeatureGraph g = make_feature_graph(rng, base, 4, {{0, 1}, {1, 2}, {2, 3}}, 1);
    const GraphBatch batch = vulgnn::make_batch({g}, {0});

    ModelConfig with_edges = base;
    with_edges.variations.edge_repr = EdgeRepr::type_embed;
    // Same seed so shared parameter tables coincide; the extra edge path
    // must still move the output.
    const Tensor<double> plain = vulgnn::forward(vulgnn::build<double>(base), base, batch);
    const Tensor<double> edged =
        vulgnn::forward(vulgnn::build<double>(with_edges), with_edges, batch);
    CHECK(plain.data != edged.data);

    ModelConfig linear_head = base;
    linear_head.variations.head_mode = HeadMode::single_linear;
    const Tensor<double> lin =
        vulgnn::forward(vulgnn::build<double>(linear_head), linear_head, batch);
    CHECK(plain.data != lin.data);
}

TEST_CASE("model config JSON round trip") {
    ModelConfig c = small_config();
    c.variations = {NodeRepr::types, EdgeRepr::type_embed, HeadMode::single_linear};
    c.seed = 12345;
    const ModelConfig back = vulgnn::model_config_from_json(vulgnn::model_config_to_json(c));
    CHECK(back.vocab_size == c.vocab_size);
    CHECK(back.token_dim == c.token_dim);
    CHECK(back.l_node == c.l_node);
    CHECK(back.l_edge == c.l_edge);
    CHECK(back.hidden_dim == c.hidden_dim);
    CHECK(back.n_layers == c.n_layers);
    CHECK(back.dropout_p == c.dropout_p);
    CHECK(back.d_edge_type == c.d_edge_type);
    CHECK(back.seed == c.seed);
    CHECK(back.variations.node_repr == NodeRepr::types);
    CHECK(back.variations.edge_repr == EdgeRepr::type_embed);
    CHECK(back.variations.head_mode == HeadMode::single_linear);

    CHECK_THROWS_AS(vulgnn::model_config_from_json("{"), ConfigError);
    CHECK_THROWS_AS(vulgnn::model_config_from_json(R"({"node_repr":"graph"})"), ConfigError);
    CHECK_THROWS_AS(vulgnn::node_repr_from_string("nope"), ConfigError);
    CHECK_THROWS_AS(vulgnn::edge_repr_from_string("nope"), ConfigError);
    CHECK_THROWS_AS(vulgnn::head_mode_from_string("nope"), ConfigError);

    ModelConfig bad = small_config();
    bad.dropout_p = 1.5;
    CHECK_THROWS_AS(vulgnn::validate_config(bad), ConfigError);
    bad = small_config();
    bad.vocab_size = 0;
    CHECK_THROWS_AS(vulgnn::validate_config(bad), ConfigError);
}

TEST_CASE("checkpoint round trip is bitwise") {
    const std::string path = "test_model_ckpt.vgnn";
    ModelConfig c = small_config();
    c.variations = {NodeRepr::tokens, EdgeRepr::tokens, HeadMode::two_layer};
    const auto params = vulgnn::build<float>(c);
    vulgnn::save_checkpoint(params, c, path);

    const auto [loaded, loaded_config] = vulgnn::load_checkpoint<float>(path);
    CHECK(loaded_config.vocab_size == c.vocab_size);
    CHECK(loaded_config.variations.edge_repr == EdgeRepr::tokens);
    REQUIRE(loaded.arrays.size() == params.arrays.size());
    for (std::size_t i = 0; i < params.arrays.size(); ++i) {
        CHECK(loaded.arrays[i].first == params.arrays[i].first);
        CHECK(loaded.arrays[i].second.shape == params.arrays[i].second.shape);
        CHECK(loaded.arrays[i].second.data == params.arrays[i].second.data);
    }

    // Saving twice produces identical bytes.
    const std::string path2 = "test_model_ckpt2.vgnn";
    vulgnn::save_checkpoint(params, c, path2);
    CHECK(testutil::read_file(path) == testutil::read_file(path2));
    std::remove(path2.c_str());
    std::remove(path.c_str());
}

TEST_CASE("checkpoint loading rejects damage") {
    const std::string path = "test_model_damage.vgnn";
    const ModelConfig c = small_config();
    const auto params = vulgnn::build<float>(c);
    vulgnn::save_checkpoint(params, c, path);
    const std::string good = testutil::read_file(path);

    SUBCASE("missing file") {
        CHECK_THROWS_AS(vulgnn::load_checkpoint<float>("no_such_checkpoint.vgnn"), DataError);
    }
    SUBCASE("bad magic") {
        std::string bytes = good;
        bytes[0] = 'X';
        std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
        CHECK_THROWS_WITH_AS(vulgnn::load_checkpoint<float>(path),
                             doctest::Contains("bad magic"), DataError);
    }
    SUBCASE("unsupported version") {
        std::string bytes = good;
        bytes[4] = 2; // little-endian version field
        std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
        CHECK_THROWS_WITH_AS(vulgnn::load_checkpoint<float>(path),
                             doctest::Contains("version"), DataError);
    }
    SUBCASE("truncated payload") {
        std::ofstream(path, std::ios::binary | std::ios::trunc)
            << good.substr(0, good.size() * 3 / 5);
        CHECK_THROWS_AS(vulgnn::load_checkpoint<float>(path), DataError);
    }
    SUBCASE("dtype mismatch") {
        CHECK_THROWS_WITH_AS(vulgnn::load_checkpoint<double>(path),
                             doctest::Contains("dtype"), DataError);
    }
    std::remove(path.c_str());
}

TEST_CASE("featurize converts text fields to fixed windows") {
    const auto vocab = vulgnn::load_vocabulary_files(
        testutil::fixture_path("tokenizer/vocab.json"),
        testutil::fixture_path("tokenizer/merges.txt"), true);
    REQUIRE(vocab.pad_id == 0);

    const std::string line = testutil::read_file(testutil::fixture_path("graphs/if_sample.jsonl"));
    const vulgnn::CodeGraph graph =
        vulgnn::parse_cpg_export(line, vulgnn::TypeRegistry::builtin());
    const FeatureGraph f = vulgnn::featurize(graph, vocab, 8, 16);

    CHECK(f.sample_id == graph.sample_id);
    CHECK(f.project == graph.project);
    CHECK(f.label == 1);
    CHECK(f.l_node == 8);
    CHECK(f.l_edge == 16);
    REQUIRE(f.node_tokens.size() == graph.nodes.size() * 8);
    REQUIRE(f.edge_tokens.size() == graph.edges.size() * 16);
    CHECK(f.node_kinds.size() == graph.nodes.size());
    CHECK(f.edge_relations.size() == graph.edges.size());

    // Each node window equals encode + fit_window of its code string.
    for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
        const auto window =
            vulgnn::fit_window(vulgnn::encode(graph.nodes[i].code, vocab), 8, vocab.pad_id);
        for (std::size_t t = 0; t < 8; ++t) {
            CHECK(f.node_tokens[i * 8 + t] == window.ids[t]);
        }
        if (graph.nodes[i].code.empty()) {
            for (std::size_t t = 0; t < 8; ++t) {
                CHECK(f.node_tokens[i * 8 + t] == vocab.pad_id);
            }
        }
    }

    // The lone CFG edge carries "x > 0"; AST edges have no attr and pad out.
    bool saw_nonpad_edge_window = false;
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
        const auto window =
            vulgnn::fit_window(vulgnn::encode(graph.edges[e].attr, vocab), 16, vocab.pad_id);
        bool nonpad = false;
        for (std::size_t t = 0; t < 16; ++t) {
            CHECK(f.edge_tokens[e * 16 + t] == window.ids[t]);
            nonpad = nonpad || window.ids[t] != vocab.pad_id;
        }
        CHECK(nonpad == !graph.edges[e].attr.empty());
        saw_nonpad_edge_window = saw_nonpad_edge_window || nonpad;
    }
    CHECK(saw_nonpad_edge_window);
}

TEST_CASE("make_batch concatenates graphs with node offsets") {
    Rng rng(94);
    const ModelConfig c = small_config();
    FeatureGraph g1 = make_feature_graph(rng, c, 2, {{0, 1}}, 1);
    FeatureGraph g2 = make_feature_graph(rng, c, 3, {{0, 1}, {2, 1}}, 0);
    const std::vector<FeatureGraph> graphs = {g1, g2};

    const GraphBatch batch = vulgnn::make_batch(graphs, {0, 1});
    CHECK(batch.n_graphs == 2);
    CHECK(batch.n_nodes() == 5);
    CHECK(batch.n_edges() == 3);
    CHECK(batch.graph_of_node == std::vector<std::size_t>{0, 0, 1, 1, 1});
    CHECK(batch.labels == std::vector<int>{1, 0});
    CHECK(batch.edge_src == std::vector<std::size_t>{0, 2, 4});
    CHECK(batch.edge_dst == std::vector<std::size_t>{1, 3, 3});
    CHECK(batch.node_tokens.size() == 5u * c.l_node);
    CHECK(batch.edge_tokens.size() == 3u * c.l_edge);

    // Selection controls both membership and order.
    const GraphBatch swapped = vulgnn::make_batch(graphs, {1, 0});
    CHECK(swapped.labels == std::vector<int>{0, 1});
    CHECK(swapped.graph_of_node == std::vector<std::size_t>{0, 0, 0, 1, 1});

    // Window lengths must agree across the batch.
    FeatureGraph other = g1;
    other.l_node = c.l_node + 1;
    other.node_tokens.resize(2 * (c.l_node + 1), 0);
    CHECK_THROWS_AS(vulgnn::make_batch({g1, other}, {0, 1}), DataError);
}

TEST_CASE("prediction rule is argmax with ties to the negative class") {
    CHECK(vulgnn::prediction_rule(0.3, 0.3) == 0);
    CHECK(vulgnn::prediction_rule(0.2, 0.5) == 1);
    CHECK(vulgnn::prediction_rule(1.0, -1.0) == 0);
    CHECK(vulgnn::prediction_rule(-5.0, -4.0) == 1);
}
