#include "vulgnn/model.hpp"

#include <json.hpp>

namespace vulgnn {

void validate_config(const ModelConfig& config) {
    if (config.vocab_size < 1 || config.token_dim < 1 || config.l_node < 1 ||
        config.l_edge < 1 || config.hidden_dim < 1 || config.n_layers < 1 ||
        config.d_edge_type < 1) {
        throw ConfigError("all model dimensions must be at least 1");
    }
    if (!(config.dropout_p >= 0.0 && config.dropout_p < 1.0)) {
        throw ConfigError("dropout_p must lie in [0,1)");
    }
}

std::string to_string(NodeRepr v) {
    return v == NodeRepr::tokens ? "tokens" : "types";
}

std::string to_string(EdgeRepr v) {
    switch (v) {
        case EdgeRepr::none: return "none";
        case EdgeRepr::type_embed: return "type_embed";
        default: return "tokens";
    }
}

std::string to_string(HeadMode v) {
    return v == HeadMode::two_layer ? "two_layer" : "single_linear";
}

NodeRepr node_repr_from_string(const std::string& s) {
    if (s == "tokens") {
        return NodeRepr::tokens;
    }
    if (s == "types") {
        return NodeRepr::types;
    }
    throw ConfigError("node_repr must be \"tokens\" or \"types\", got \"" + s + "\"");
}

EdgeRepr edge_repr_from_string(const std::string& s) {
    if (s == "none") {
        return EdgeRepr::none;
    }
    if (s == "type_embed") {
        return EdgeRepr::type_embed;
    }
    if (s == "tokens") {
        return EdgeRepr::tokens;
    }
    throw ConfigError("edge_repr must be \"none\", \"type_embed\" or \"tokens\", got \"" + s +
                      "\"");
}

HeadMode head_mode_from_string(const std::string& s) {
    if (s == "two_layer") {
        return HeadMode::two_layer;
    }
    if (s == "single_linear") {
        return HeadMode::single_linear;
    }
    throw ConfigError("head_mode must be \"two_layer\" or \"single_linear\", got \"" + s + "\"");
}

std::string model_config_to_json(const ModelConfig& config) {
    nlohmann::json doc;
    doc["vocab_size"] = config.vocab_size;
    doc["token_dim"] = config.token_dim;
    doc["l_node"] = config.l_node;
    doc["l_edge"] = config.l_edge;
    doc["hidden_dim"] = config.hidden_dim;
    doc["n_layers"] = config.n_layers;
    doc["dropout_p"] = config.dropout_p;
    doc["d_edge_type"] = config.d_edge_type;
    doc["node_repr"] = to_string(config.variations.node_repr);
    doc["edge_repr"] = to_string(config.variations.edge_repr);
    doc["head_mode"] = to_string(config.variations.head_mode);
    doc["seed"] = config.seed;
    return doc.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed model config JSON: ") + e.what());
    }
    ModelConfig config;
    try {
        // Every field is optional and falls back to the builtin defaults.
        config.vocab_size = doc.value("vocab_size", config.vocab_size);
        config.token_dim = doc.value("token_dim", config.token_dim);
        config.l_node = doc.value("l_node", config.l_node);
        config.l_edge = doc.value("l_edge", config.l_edge);
        config.hidden_dim = doc.value("hidden_dim", config.hidden_dim);
        config.n_layers = doc.value("n_layers", config.n_layers);
        config.dropout_p = doc.value("dropout_p", config.dropout_p);
        config.d_edge_type = doc.value("d_edge_type", config.d_edge_type);
        if (doc.contains("node_repr")) {
            config.variations.node_repr = node_repr_from_string(doc["node_repr"].get<std::string>());
        }
        if (doc.contains("edge_repr")) {
            config.variations.edge_repr = edge_repr_from_string(doc["edge_repr"].get<std::string>());
        }
        if (doc.contains("head_mode")) {
            config.variations.head_mode = head_mode_from_string(doc["head_mode"].get<std::string>());
        }
        config.seed = doc.value("seed", config.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid model config field: ") + e.what());
    }
    validate_config(config);
    return config;
}

} // namespace vulgnn
