#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vulgnn/common.hpp"
#include "vulgnn/feature_graph.hpp"
#include "vulgnn/model.hpp"
#include "vulgnn/tape.hpp"

namespace vulgnn {

// Seed-stream tags. Every source of randomness in a run derives from one
// master seed through these, so runs can be named and replayed.
inline constexpr std::uint64_t kInitStream = 1;    // used inside build()
inline constexpr std::uint64_t kShuffleStream = 2; // epoch batch order
inline constexpr std::uint64_t kDropoutStream = 3; // dropout masks
inline constexpr std::uint64_t kSplitStream = 10;  // dataset splitting
inline constexpr std::uint64_t kRunStreamBase = 1000; // + run index

struct ClassWeights {
    double w0 = 1.0;
    double w1 = 1.0;
};

// w_k = N_samples / (2 * N_k); both classes must be present.
ClassWeights class_weights(const std::vector<int>& labels);

// Stable scalar form of -[pw*y*log(sigmoid(x)) + (1-y)*log(1-sigmoid(x))].
inline double weighted_bce_with_logits(double x, double y, double pos_weight) {
    if (!(pos_weight > 0.0)) {
        throw ConfigError("pos_weight must be positive");
    }
    return detail::stable_bce_with_logits(x, y, pos_weight);
}

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint32_t batch_size = 400;
    std::uint32_t epochs = 25;
    std::uint32_t runs = 3;
    std::uint64_t seed = 0;
    // Class weights are recomputed for each (possibly rebalanced)
    // training set; set this to keep weights from the original set.
    bool freeze_class_weights = false;
};

void validate_train_config(const TrainConfig& config); // throws ConfigError

struct MetricsReport {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double fpr = 0.0;
    // Ratios with a zero denominator are reported as 0 with the flag off.
    bool precision_defined = true;
    bool recall_defined = true;
    bool f1_defined = true;
    bool fpr_defined = true;
};

MetricsReport compute_metrics(const std::vector<int>& predictions,
                              const std::vector<int>& labels);

// Argmax over the two logits; ties go to class 0.
inline int prediction_rule(double logit0, double logit1) {
    return logit1 > logit0 ? 1 : 0;
}

struct SplitResult {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

// Seeded shuffle, then cuts at the 80th and 90th percentile indices.
SplitResult split_random(std::size_t n, std::uint64_t seed);

// 95 randomly chosen projects form the test set; the remaining samples
// are split 90/10 into train/val. No project crosses the boundary.
SplitResult split_unseen_projects(const std::vector<std::string>& projects, std::uint64_t seed,
                                  std::size_t n_unseen = 95);

// Entire synthetic set plus floor(fraction * |real|) sampled real items.
std::vector<std::size_t> mix_synthetic_real(const std::vector<std::size_t>& synthetic,
                                            const std::vector<std::size_t>& real,
                                            double fraction, std::uint64_t seed);

// Keeps every vulnerable sample; non-vulnerable samples are reduced to
// min(ratio * n_vul, available). An infinite ratio keeps everything.
std::vector<std::size_t> downsample_ratio(const std::vector<std::size_t>& train,
                                          const std::vector<int>& labels, double ratio,
                                          std::uint64_t seed);

// Index of the highest value; ties resolve to the earliest epoch.
std::size_t select_best_epoch(const std::vector<double>& val_f1);

// ---- loss over a batch ----

// One-hot targets over the two outputs; output k uses pos_weight w_k;
// mean over all B*2 terms.
template <typename T>
ValueId batch_loss(Tape<T>& tape, ValueId logits, const std::vector<int>& labels,
                   const ClassWeights& weights) {
    const Tensor<T>& lv = tape.value(logits);
    if (lv.rank() != 2 || lv.cols() != 2 || lv.rows() != labels.size()) {
        throw DataError("batch_loss: logits must be [B,2] matching the labels");
    }
    Tensor<T> targets({labels.size(), 2});
    Tensor<T> pos_weights({labels.size(), 2});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            throw DataError("label outside {0,1}: " + std::to_string(labels[i]));
        }
        targets.at(i, static_cast<std::size_t>(labels[i])) = T(1);
        pos_weights.at(i, 0) = static_cast<T>(weights.w0);
        pos_weights.at(i, 1) = static_cast<T>(weights.w1);
    }
    return tape.mean_all(tape.bce_with_logits(logits, std::move(targets), std::move(pos_weights)));
}

// ---- optimizer ----

template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
    std::uint64_t t = 0;

    static AdamState like(const ModelParameters<T>& params) {
        AdamState state;
        state.m.reserve(params.arrays.size());
        state.v.reserve(params.arrays.size());
        for (const auto& [name, tensor] : params.arrays) {
            state.m.emplace_back(tensor.shape);
            state.v.emplace_back(tensor.shape);
        }
        return state;
    }
};

// Standard bias-corrected Adam update, in place.
template <typename T>
void adam_step(ModelParameters<T>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state, const TrainConfig& cfg) {
    if (grads.size() != params.arrays.size() || state.m.size() != params.arrays.size()) {
        throw DataError("adam_step: gradient/state layout does not match parameters");
    }
    ++state.t;
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    const T lr = static_cast<T>(cfg.lr);
    const T eps = static_cast<T>(cfg.adam_eps);
    const T bc1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(state.t)));
    const T bc2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(state.t)));
    for (std::size_t a = 0; a < params.arrays.size(); ++a) {
        Tensor<T>& p = params.arrays[a].second;
        const Tensor<T>& g = grads[a];
        if (!p.same_shape(g)) {
            throw DataError("adam_step: gradient shape mismatch for " + params.arrays[a].first);
        }
        Tensor<T>& m = state.m[a];
        Tensor<T>& v = state.v[a];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            const T m_hat = m[i] / bc1;
            const T v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

// ---- evaluation ----

template <typename T>
std::vector<int> predict(const ModelParameters<T>& params, const ModelConfig& config,
                         const std::vector<FeatureGraph>& data,
                         const std::vector<std::size_t>& indices, std::size_t batch_size,
                         std::vector<std::pair<double, double>>* logits_out = nullptr) {
    std::vector<int> predictions;
    predictions.reserve(indices.size());
    for (std::size_t start = 0; start < indices.size(); start += batch_size) {
        const std::size_t end = std::min(indices.size(), start + batch_size);
        const std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                             indices.begin() + static_cast<std::ptrdiff_t>(end));
        const GraphBatch batch = make_batch(data, chunk);
        const Tensor<T> logits = forward(params, config, batch);
        for (std::size_t i = 0; i < batch.n_graphs; ++i) {
            const double l0 = static_cast<double>(logits.at(i, 0));
            const double l1 = static_cast<double>(logits.at(i, 1));
            predictions.push_back(prediction_rule(l0, l1));
            if (logits_out != nullptr) {
                logits_out->emplace_back(l0, l1);
            }
        }
    }
    return predictions;
}

template <typename T>
MetricsReport evaluate(const ModelParameters<T>& params, const ModelConfig& config,
                       const std::vector<FeatureGraph>& data,
                       const std::vector<std::size_t>& indices, std::size_t batch_size) {
    if (indices.empty()) {
        throw DataError("evaluation over an empty split");
    }
    const std::vector<int> predictions = predict(params, config, data, indices, batch_size);
    std::vector<int> labels;
    labels.reserve(indices.size());
    for (std::size_t i : indices) {
        labels.push_back(data[i].label);
    }
    return compute_metrics(predictions, labels);
}

// ---- training loop ----

struct EpochLog {
    std::uint32_t epoch = 0; // 1-based
    double train_loss = 0.0;
    MetricsReport val;
};

template <typename T>
struct RunResult {
    ModelParameters<T> best_params;
    ModelConfig config; // seed rewritten to this run's derived seed
    std::uint32_t best_epoch = 0;
    MetricsReport best_val;
    std::vector<EpochLog> log;
};

// One training run with a fully derived seed. Batch order reshuffles
// every epoch; the checkpoint with the highest validation F1 is kept,
// earlier epoch winning ties.
template <typename T>
RunResult<T> train_single_run(ModelConfig model_cfg, const TrainConfig& train_cfg,
                              const std::vector<FeatureGraph>& data,
                              const std::vector<std::size_t>& train_idx,
                              const std::vector<std::size_t>& val_idx, std::uint64_t run_seed) {
    validate_train_config(train_cfg);
    if (train_idx.empty() || val_idx.empty()) {
        throw DataError("training requires non-empty train and validation splits");
    }
    model_cfg.seed = run_seed;
    ModelParameters<T> params = build<T>(model_cfg);
    AdamState<T> adam = AdamState<T>::like(params);
    Rng shuffle_rng = Rng(run_seed).split(kShuffleStream);
    Rng dropout_rng = Rng(run_seed).split(kDropoutStream);

    std::vector<int> train_labels;
    train_labels.reserve(train_idx.size());
    for (std::size_t i : train_idx) {
        train_labels.push_back(data[i].label);
    }
    const ClassWeights weights = class_weights(train_labels);

    RunResult<T> result;
    result.config = model_cfg;
    double best_f1 = -1.0;

    std::vector<std::size_t> order = train_idx;
    for (std::uint32_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t sample_count = 0;
        for (std::size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + train_cfg.batch_size);
            const std::vector<std::size_t> chunk(
                order.begin() + static_cast<std::ptrdiff_t>(start),
                order.begin() + static_cast<std::ptrdiff_t>(end));
            const std::size_t batch_index = start / train_cfg.batch_size;
            try {
                const GraphBatch batch = make_batch(data, chunk);
                Tape<T> tape;
                const auto ids = bind_parameters(tape, params, true);
                const ValueId logits =
                    model_forward(tape, ids, model_cfg, batch, true, dropout_rng);
                const ValueId loss = batch_loss(tape, logits, batch.labels, weights);
                const double loss_value = static_cast<double>(tape.value(loss).item());
                if (!std::isfinite(loss_value)) {
                    throw NumericalError("non-finite training loss");
                }
                tape.backward(loss);
                std::vector<Tensor<T>> grads;
                grads.reserve(params.arrays.size());
                for (const auto& [name, tensor] : params.arrays) {
                    grads.push_back(tape.grad(ids.at(name)));
                }
                adam_step(params, grads, adam, train_cfg);
                loss_sum += loss_value * static_cast<double>(chunk.size());
                sample_count += chunk.size();
            } catch (const NumericalError& e) {
                throw NumericalError("epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batch_index) + ": " + e.what());
            }
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.train_loss = loss_sum / static_cast<double>(sample_count);
        entry.val = evaluate(params, model_cfg, data, val_idx, train_cfg.batch_size);
        result.log.push_back(entry);
        if (entry.val.f1 > best_f1) {
            best_f1 = entry.val.f1;
            result.best_epoch = epoch;
            result.best_val = entry.val;
            result.best_params = params;
        }
    }
    return result;
}

// Repeats training cfg.runs times with derived seeds.
template <typename T>
std::vector<RunResult<T>> train_loop(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                     const std::vector<FeatureGraph>& data,
                                     const std::vector<std::size_t>& train_idx,
                                     const std::vector<std::size_t>& val_idx) {
    std::vector<RunResult<T>> results;
    const Rng master(train_cfg.seed);
    for (std::uint32_t r = 0; r < train_cfg.runs; ++r) {
        const std::uint64_t run_seed = master.split(kRunStreamBase + r).seed();
        results.push_back(
            train_single_run<T>(model_cfg, train_cfg, data, train_idx, val_idx, run_seed));
    }
    return results;
}

} // namespace vulgnn
