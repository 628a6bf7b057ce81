#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vulgnn/common.hpp"
#include "vulgnn/tape.hpp"

namespace vulgnn {

inline constexpr double kGraphNormEps = 1e-5;

// Sinusoidal positional encoding table, one row per window position:
// PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(same angle).
template <typename T>
Tensor<T> positional_encoding(std::size_t length, std::size_t dim) {
    Tensor<T> pe({length, dim});
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (std::size_t j = 0; j < dim; ++j) {
            const double exponent = static_cast<double>(2 * (j / 2)) / static_cast<double>(dim);
            const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
            pe.at(pos, j) = static_cast<T>((j % 2 == 0) ? std::sin(angle) : std::cos(angle));
        }
    }
    return pe;
}

// Embeds a flat [n_rows * L] token ID block, adds positional encodings,
// and flattens each window row-major to one length-L*d row.
template <typename T>
ValueId encode_tokens(Tape<T>& tape, ValueId embedding, const std::vector<std::uint32_t>& ids,
                      std::size_t n_rows, std::size_t window_len) {
    const std::size_t d = tape.value(embedding).cols();
    const std::size_t vocab = tape.value(embedding).rows();
    if (ids.size() != n_rows * window_len) {
        throw DataError("encode_tokens: id count does not match rows * window length");
    }
    std::vector<std::size_t> indices(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= vocab) {
            throw DataError("token ID " + std::to_string(ids[i]) + " outside vocabulary of " +
                            std::to_string(vocab));
        }
        indices[i] = ids[i];
    }
    const ValueId gathered = tape.gather_rows(embedding, std::move(indices));
    const Tensor<T> pe = positional_encoding<T>(window_len, d);
    Tensor<T> tiled({n_rows * window_len, d});
    for (std::size_t r = 0; r < n_rows * window_len; ++r) {
        const std::size_t pos = r % window_len;
        for (std::size_t j = 0; j < d; ++j) {
            tiled.at(r, j) = pe.at(pos, j);
        }
    }
    const ValueId with_pe = tape.add(gathered, tape.constant(std::move(tiled)));
    return tape.reshape(with_pe, {n_rows, window_len * d});
}

// Looks up one row per node from the 44-row node-type table.
template <typename T>
ValueId encode_node_types(Tape<T>& tape, ValueId type_table,
                          const std::vector<std::uint16_t>& kinds) {
    const std::size_t n_rows = tape.value(type_table).rows();
    std::vector<std::size_t> indices(kinds.size());
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        if (kinds[i] < 1 || kinds[i] > n_rows) {
            throw DataError("node kind " + std::to_string(kinds[i]) + " outside 1.." +
                            std::to_string(n_rows));
        }
        indices[i] = static_cast<std::size_t>(kinds[i] - 1);
    }
    return tape.gather_rows(type_table, std::move(indices));
}

// Looks up one row per edge from the 20-row edge-type table.
template <typename T>
ValueId encode_edge_types(Tape<T>& tape, ValueId type_table,
                          const std::vector<std::uint16_t>& relations) {
    const std::size_t n_rows = tape.value(type_table).rows();
    std::vector<std::size_t> indices(relations.size());
    for (std::size_t i = 0; i < relations.size(); ++i) {
        if (relations[i] < 1 || relations[i] > n_rows) {
            throw DataError("edge relation " + std::to_string(relations[i]) + " outside 1.." +
                            std::to_string(n_rows));
        }
        indices[i] = static_cast<std::size_t>(relations[i] - 1);
    }
    return tape.gather_rows(type_table, std::move(indices));
}

template <typename T>
struct ConvIds {
    ValueId w_query = 0;
    ValueId w_message = 0;
    ValueId w_self = 0;
    ValueId bias = 0;
    std::optional<ValueId> w_edge;
};

// Attention message passing: query = W_q h_dst, key = message = W_msg h_src
// (+ W_edge e when edges carry features), scores scaled by 1/sqrt(D) and
// softmax-normalized over each destination's incoming edges, mean
// aggregation, plus a biased self term. Isolated nodes keep only the
// self term. Optionally exposes the attention weights for inspection.
template <typename T>
ValueId general_conv(Tape<T>& tape, ValueId h, const std::vector<std::size_t>& edge_src,
                     const std::vector<std::size_t>& edge_dst,
                     std::optional<ValueId> edge_feats, const ConvIds<T>& params,
                     ValueId* attention_out = nullptr) {
    const std::size_t n_nodes = tape.value(h).rows();
    const std::size_t out_dim = tape.value(params.w_query).cols();
    const ValueId self_term = tape.add_bias(tape.matmul(h, params.w_self), params.bias);

    const ValueId q_all = tape.matmul(h, params.w_query);
    const ValueId m_all = tape.matmul(h, params.w_message);
    ValueId keys = tape.gather_rows(m_all, edge_src);
    if (edge_feats.has_value()) {
        if (!params.w_edge.has_value()) {
            throw DataError("edge features supplied but the layer has no edge map");
        }
        keys = tape.add(keys, tape.matmul(*edge_feats, *params.w_edge));
    }
    const ValueId queries = tape.gather_rows(q_all, edge_dst);
    const ValueId scores =
        tape.scale(tape.sum_axis(tape.mul(queries, keys), 1),
                   static_cast<T>(1.0 / std::sqrt(static_cast<double>(out_dim))));
    const ValueId attention = tape.segment_softmax(scores, edge_dst, n_nodes);
    if (attention_out != nullptr) {
        *attention_out = attention;
    }
    const ValueId weighted = tape.scale_rows(keys, attention);
    const ValueId aggregated = tape.segment_mean(weighted, edge_dst, n_nodes);
    return tape.add(self_term, aggregated);
}

template <typename T>
struct GraphNormIds {
    ValueId gamma = 0;
    ValueId beta = 0;
    ValueId alpha = 0;
};

// Per-graph, per-feature normalization with a learnable mean scale:
// gamma * (h - alpha*mu) / sqrt(mean((h - alpha*mu)^2) + eps) + beta.
// Statistics never cross graph boundaries.
template <typename T>
ValueId graph_norm(Tape<T>& tape, ValueId h, const std::vector<std::size_t>& graph_of,
                   std::size_t n_graphs, const GraphNormIds<T>& params) {
    const ValueId mu = tape.segment_mean(h, graph_of, n_graphs);
    const ValueId alpha_mu = tape.gather_rows(tape.scale_features(mu, params.alpha), graph_of);
    const ValueId centered = tape.sub(h, alpha_mu);
    const ValueId var = tape.segment_mean(tape.mul(centered, centered), graph_of, n_graphs);
    const ValueId inv_std =
        tape.gather_rows(tape.rsqrt(tape.add_scalar(var, static_cast<T>(kGraphNormEps))),
                         graph_of);
    const ValueId normalized = tape.mul(centered, inv_std);
    return tape.add_bias(tape.scale_features(normalized, params.gamma), params.beta);
}

template <typename T>
struct ConvGroupIds {
    ConvIds<T> conv;
    ValueId prelu_slope = 0;
    GraphNormIds<T> norm;
};

// One full layer: Dropout(GraphNorm(PReLU(Conv(h)))).
template <typename T>
ValueId conv_group(Tape<T>& tape, ValueId h, const std::vector<std::size_t>& edge_src,
                   const std::vector<std::size_t>& edge_dst, std::optional<ValueId> edge_feats,
                   const std::vector<std::size_t>& graph_of, std::size_t n_graphs,
                   const ConvGroupIds<T>& params, double dropout_p, Rng& rng, bool training,
                   ValueId* attention_out = nullptr) {
    const ValueId conv =
        general_conv(tape, h, edge_src, edge_dst, edge_feats, params.conv, attention_out);
    const ValueId activated = tape.prelu(conv, params.prelu_slope);
    const ValueId normalized = graph_norm(tape, activated, graph_of, n_graphs, params.norm);
    return tape.dropout(normalized, dropout_p, rng, training);
}

template <typename T>
struct HeadIds {
    std::optional<ValueId> w1;
    std::optional<ValueId> b1;
    ValueId w2 = 0;
    ValueId b2 = 0;
};

// Global mean pooling per graph, then the classification head. Two-layer
// mode: W2 sigmoid(W1 pooled + b1) + b2; single-linear: W2 pooled + b2.
template <typename T>
ValueId readout_and_classify(Tape<T>& tape, ValueId h, const std::vector<std::size_t>& graph_of,
                             std::size_t n_graphs, const HeadIds<T>& head) {
    ValueId pooled = tape.segment_mean(h, graph_of, n_graphs);
    if (head.w1.has_value()) {
        pooled = tape.sigmoid(tape.add_bias(tape.matmul(pooled, *head.w1), *head.b1));
    }
    return tape.add_bias(tape.matmul(pooled, head.w2), head.b2);
}

} // namespace vulgnn
