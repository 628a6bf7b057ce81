#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vulgnn/common.hpp"
#include "vulgnn/feature_graph.hpp"
#include "vulgnn/layers.hpp"
#include "vulgnn/rng.hpp"
#include "vulgnn/tape.hpp"

namespace vulgnn {

enum class NodeRepr { tokens, types };
enum class EdgeRepr { none, type_embed, tokens };
enum class HeadMode { two_layer, single_linear };

struct ModelVariations {
    NodeRepr node_repr = NodeRepr::tokens;
    EdgeRepr edge_repr = EdgeRepr::none;
    HeadMode head_mode = HeadMode::two_layer;
};

struct ModelConfig {
    std::uint32_t vocab_size = 49152;
    std::uint32_t token_dim = 16;
    std::uint32_t l_node = 8;
    std::uint32_t l_edge = 16;
    std::uint32_t hidden_dim = 128;
    std::uint32_t n_layers = 6;
    double dropout_p = 0.08;
    std::uint32_t d_edge_type = 4;
    ModelVariations variations;
    std::uint64_t seed = 0;

    // Input width of the first conv layer.
    std::uint32_t first_input_dim() const {
        return variations.node_repr == NodeRepr::tokens ? l_node * token_dim : token_dim;
    }
    // The token embedding is only allocated when some input actually
    // consumes it (parameter honesty across ablations).
    bool uses_token_embedding() const {
        return variations.node_repr == NodeRepr::tokens ||
               variations.edge_repr == EdgeRepr::tokens;
    }
    std::uint32_t edge_feature_dim() const {
        switch (variations.edge_repr) {
            case EdgeRepr::type_embed: return d_edge_type;
            case EdgeRepr::tokens: return l_edge * token_dim;
            default: return 0;
        }
    }
};

void validate_config(const ModelConfig& config); // throws ConfigError

std::string to_string(NodeRepr v);
std::string to_string(EdgeRepr v);
std::string to_string(HeadMode v);
NodeRepr node_repr_from_string(const std::string& s);
EdgeRepr edge_repr_from_string(const std::string& s);
HeadMode head_mode_from_string(const std::string& s);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

// Named parameter arrays in a fixed canonical order (embedding tables,
// then per-layer conv/norm groups, then the head).
template <typename T>
struct ModelParameters {
    std::vector<std::pair<std::string, Tensor<T>>> arrays;

    bool has(const std::string& name) const {
        for (const auto& [n, t] : arrays) {
            if (n == name) {
                return true;
            }
        }
        return false;
    }

    Tensor<T>& at(const std::string& name) {
        for (auto& [n, t] : arrays) {
            if (n == name) {
                return t;
            }
        }
        throw DataError("unknown parameter array: " + name);
    }

    const Tensor<T>& at(const std::string& name) const {
        for (const auto& [n, t] : arrays) {
            if (n == name) {
                return t;
            }
        }
        throw DataError("unknown parameter array: " + name);
    }
};

template <typename T>
std::size_t param_count(const ModelParameters<T>& params) {
    std::size_t total = 0;
    for (const auto& [name, tensor] : params.arrays) {
        total += tensor.size();
    }
    return total;
}

namespace detail {

inline std::string layer_name(std::uint32_t layer, const char* field) {
    return "conv" + std::to_string(layer) + "." + field;
}

} // namespace detail

// Allocates and initializes every parameter from the config seed.
// Linear maps draw uniform +-sqrt(1/fan_in), embedding tables Gaussian
// sigma 0.02, PReLU slope 0.25, GraphNorm gamma 1 / beta 0 / alpha 1.
template <typename T>
ModelParameters<T> build(const ModelConfig& config) {
    validate_config(config);
    Rng rng = Rng(config.seed).split(1);
    ModelParameters<T> params;

    auto gaussian_table = [&](const std::string& name, std::size_t rows, std::size_t cols) {
        Tensor<T> t({rows, cols});
        for (auto& v : t.data) {
            v = static_cast<T>(0.02 * rng.gaussian());
        }
        params.arrays.emplace_back(name, std::move(t));
    };
    auto uniform_map = [&](const std::string& name, std::size_t rows, std::size_t cols) {
        const double bound = std::sqrt(1.0 / static_cast<double>(rows));
        Tensor<T> t({rows, cols});
        for (auto& v : t.data) {
            v = static_cast<T>(rng.uniform(-bound, bound));
        }
        params.arrays.emplace_back(name, std::move(t));
    };
    auto fixed_vector = [&](const std::string& name, std::size_t n, T value) {
        params.arrays.emplace_back(name, Tensor<T>::full({n}, value));
    };

    if (config.uses_token_embedding()) {
        gaussian_table("embedding", config.vocab_size, config.token_dim);
    }
    if (config.variations.node_repr == NodeRepr::types) {
        gaussian_table("node_type_embedding", kNodeKindCount, config.token_dim);
    }
    if (config.variations.edge_repr == EdgeRepr::type_embed) {
        gaussian_table("edge_type_embedding", kEdgeRelationCount, config.d_edge_type);
    }

    const std::uint32_t hidden = config.hidden_dim;
    for (std::uint32_t layer = 0; layer < config.n_layers; ++layer) {
        const std::uint32_t in_dim = (layer == 0) ? config.first_input_dim() : hidden;
        uniform_map(detail::layer_name(layer, "w_query"), in_dim, hidden);
        uniform_map(detail::layer_name(layer, "w_message"), in_dim, hidden);
        uniform_map(detail::layer_name(layer, "w_self"), in_dim, hidden);
        fixed_vector(detail::layer_name(layer, "bias"), hidden, T(0));
        if (config.variations.edge_repr != EdgeRepr::none) {
            uniform_map(detail::layer_name(layer, "w_edge"), config.edge_feature_dim(), hidden);
        }
        fixed_vector(detail::layer_name(layer, "prelu_slope"), 1, T(0.25));
        fixed_vector(detail::layer_name(layer, "norm_gamma"), hidden, T(1));
        fixed_vector(detail::layer_name(layer, "norm_beta"), hidden, T(0));
        fixed_vector(detail::layer_name(layer, "norm_alpha"), hidden, T(1));
    }

    if (config.variations.head_mode == HeadMode::two_layer) {
        uniform_map("head.w1", hidden, hidden);
        fixed_vector("head.b1", hidden, T(0));
    }
    uniform_map("head.w2", hidden, 2);
    fixed_vector("head.b2", 2, T(0));
    return params;
}

// Registers every parameter on a tape; name -> ValueId.
template <typename T>
std::unordered_map<std::string, ValueId> bind_parameters(Tape<T>& tape,
                                                         const ModelParameters<T>& params,
                                                         bool requires_grad) {
    std::unordered_map<std::string, ValueId> ids;
    for (const auto& [name, tensor] : params.arrays) {
        ids.emplace(name, tape.leaf(tensor, requires_grad));
    }
    return ids;
}

// Full forward pass over a batch already bound to a tape. Returns the
// [B, 2] logits node. attention_per_layer, when given, receives one
// ValueId per layer for the edge attention weights.
template <typename T>
ValueId model_forward(Tape<T>& tape, const std::unordered_map<std::string, ValueId>& ids,
                      const ModelConfig& config, const GraphBatch& batch, bool training,
                      Rng& dropout_rng, std::vector<ValueId>* attention_per_layer = nullptr) {
    if (batch.n_graphs == 0) {
        throw DataError("forward pass over an empty batch");
    }
    if (batch.l_node != config.l_node || batch.l_edge != config.l_edge) {
        throw DataError("batch window lengths do not match the model config");
    }
    auto id_of = [&](const std::string& name) {
        auto it = ids.find(name);
        if (it == ids.end()) {
            throw DataError("parameter not bound: " + name);
        }
        return it->second;
    };

    ValueId h = 0;
    if (config.variations.node_repr == NodeRepr::tokens) {
        h = encode_tokens(tape, id_of("embedding"), batch.node_tokens, batch.n_nodes(),
                          config.l_node);
    } else {
        h = encode_node_types(tape, id_of("node_type_embedding"), batch.node_kinds);
    }

    std::optional<ValueId> edge_feats;
    if (config.variations.edge_repr == EdgeRepr::type_embed) {
        edge_feats = encode_edge_types(tape, id_of("edge_type_embedding"), batch.edge_relations);
    } else if (config.variations.edge_repr == EdgeRepr::tokens) {
        edge_feats = encode_tokens(tape, id_of("embedding"), batch.edge_tokens, batch.n_edges(),
                                   config.l_edge);
    }

    for (std::uint32_t layer = 0; layer < config.n_layers; ++layer) {
        ConvGroupIds<T> group;
        group.conv.w_query = id_of(detail::layer_name(layer, "w_query"));
        group.conv.w_message = id_of(detail::layer_name(layer, "w_message"));
        group.conv.w_self = id_of(detail::layer_name(layer, "w_self"));
        group.conv.bias = id_of(detail::layer_name(layer, "bias"));
        if (config.variations.edge_repr != EdgeRepr::none) {
            group.conv.w_edge = id_of(detail::layer_name(layer, "w_edge"));
        }
        group.prelu_slope = id_of(detail::layer_name(layer, "prelu_slope"));
        group.norm.gamma = id_of(detail::layer_name(layer, "norm_gamma"));
        group.norm.beta = id_of(detail::layer_name(layer, "norm_beta"));
        group.norm.alpha = id_of(detail::layer_name(layer, "norm_alpha"));
        ValueId attention = 0;
        h = conv_group(tape, h, batch.edge_src, batch.edge_dst, edge_feats, batch.graph_of_node,
                       batch.n_graphs, group, config.dropout_p, dropout_rng, training,
                       attention_per_layer != nullptr ? &attention : nullptr);
        if (attention_per_layer != nullptr) {
            attention_per_layer->push_back(attention);
        }
    }

    HeadIds<T> head;
    if (config.variations.head_mode == HeadMode::two_layer) {
        head.w1 = id_of("head.w1");
        head.b1 = id_of("head.b1");
    }
    head.w2 = id_of("head.w2");
    head.b2 = id_of("head.b2");
    const ValueId logits = readout_and_classify(tape, h, batch.graph_of_node, batch.n_graphs, head);
    if (!tape.value(logits).all_finite()) {
        throw NumericalError("non-finite logits in forward pass");
    }
    return logits;
}

// Convenience eval-mode forward: fresh tape, no gradients, deterministic.
template <typename T>
Tensor<T> forward(const ModelParameters<T>& params, const ModelConfig& config,
                  const GraphBatch& batch) {
    Tape<T> tape;
    const auto ids = bind_parameters(tape, params, false);
    Rng unused(0);
    const ValueId logits = model_forward(tape, ids, config, batch, false, unused);
    return tape.value(logits);
}

// ---- checkpoint persistence ----

namespace detail {

inline constexpr char kCheckpointMagic[4] = {'V', 'G', 'N', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
constexpr std::uint8_t dtype_tag() {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8, "only float and double checkpoints");
    return sizeof(T) == 4 ? 0 : 1;
}

template <typename T>
void write_array(std::ostream& os, const std::string& name, const Tensor<T>& tensor) {
    io::write_u32(os, static_cast<std::uint32_t>(name.size()));
    io::write_bytes(os, name);
    io::write_u8(os, dtype_tag<T>());
    io::write_u8(os, static_cast<std::uint8_t>(tensor.rank()));
    for (std::size_t dim : tensor.shape) {
        io::write_u64(os, dim);
    }
    for (const T& v : tensor.data) {
        if constexpr (sizeof(T) == 4) {
            io::write_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        } else {
            io::write_u64(os, std::bit_cast<std::uint64_t>(static_cast<double>(v)));
        }
    }
}

} // namespace detail

template <typename T>
void save_checkpoint(const ModelParameters<T>& params, const ModelConfig& config,
                     const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw DataError("cannot open checkpoint for writing: " + path);
    }
    io::write_bytes(os, std::string_view(detail::kCheckpointMagic, 4));
    io::write_u32(os, detail::kCheckpointVersion);
    const std::string header = model_config_to_json(config);
    io::write_u64(os, header.size());
    io::write_bytes(os, header);
    io::write_u32(os, static_cast<std::uint32_t>(params.arrays.size()));
    for (const auto& [name, tensor] : params.arrays) {
        detail::write_array(os, name, tensor);
    }
    if (!os) {
        throw DataError("failed writing checkpoint: " + path);
    }
}

template <typename T>
std::pair<ModelParameters<T>, ModelConfig> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("cannot open checkpoint: " + path);
    }
    const std::string magic = io::read_bytes(is, 4);
    if (magic != std::string(detail::kCheckpointMagic, 4)) {
        throw DataError("not a checkpoint file (bad magic): " + path);
    }
    const std::uint32_t version = io::read_u32(is);
    if (version != detail::kCheckpointVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint64_t header_len = io::read_u64(is);
    const ModelConfig config = model_config_from_json(io::read_bytes(is, header_len));

    // Build for the stored config, then overwrite; any divergence in
    // names or shapes is a config/checkpoint mismatch.
    ModelParameters<T> params = build<T>(config);
    const std::uint32_t n_arrays = io::read_u32(is);
    if (n_arrays != params.arrays.size()) {
        throw DataError("checkpoint array count " + std::to_string(n_arrays) +
                        " does not match config (" + std::to_string(params.arrays.size()) + ")");
    }
    for (std::uint32_t a = 0; a < n_arrays; ++a) {
        const std::uint32_t name_len = io::read_u32(is);
        const std::string name = io::read_bytes(is, name_len);
        const std::uint8_t dtype = io::read_u8(is);
        if (dtype != detail::dtype_tag<T>()) {
            throw DataError("checkpoint dtype mismatch for array " + name);
        }
        const std::uint8_t rank = io::read_u8(is);
        std::vector<std::size_t> shape(rank);
        for (auto& dim : shape) {
            dim = static_cast<std::size_t>(io::read_u64(is));
        }
        if (name != params.arrays[a].first || shape != params.arrays[a].second.shape) {
            throw DataError("checkpoint array " + name + " does not match the config shapes");
        }
        Tensor<T>& tensor = params.arrays[a].second;
        for (auto& v : tensor.data) {
            if constexpr (sizeof(T) == 4) {
                v = std::bit_cast<float>(io::read_u32(is));
            } else {
                v = std::bit_cast<double>(io::read_u64(is));
            }
        }
    }
    return {std::move(params), config};
}

} // namespace vulgnn
