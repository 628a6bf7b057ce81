#include "vulgnn/train.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "vulgnn/rng.hpp"

namespace vulgnn {

ClassWeights class_weights(const std::vector<int>& labels) {
    std::size_t n0 = 0, n1 = 0;
    for (int label : labels) {
        if (label == 0) {
            ++n0;
        } else if (label == 1) {
            ++n1;
        } else {
            throw DataError("label outside {0,1}: " + std::to_string(label));
        }
    }
    if (n0 == 0 || n1 == 0) {
        throw DataError("class weights need both classes present (counts " +
                        std::to_string(n0) + "/" + std::to_string(n1) + ")");
    }
    const double n = static_cast<double>(labels.size());
    return ClassWeights{n / (2.0 * static_cast<double>(n0)),
                        n / (2.0 * static_cast<double>(n1))};
}

void validate_train_config(const TrainConfig& config) {
    if (!(config.lr > 0.0)) {
        throw ConfigError("learning rate must be positive");
    }
    if (!(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
        !(config.beta2 >= 0.0 && config.beta2 < 1.0)) {
        throw ConfigError("Adam decay rates must lie in [0,1)");
    }
    if (config.batch_size < 1) {
        throw ConfigError("batch_size must be at least 1");
    }
    if (config.epochs < 1) {
        throw ConfigError("epochs must be at least 1");
    }
    if (config.runs < 1) {
        throw ConfigError("runs must be at least 1");
    }
}

MetricsReport compute_metrics(const std::vector<int>& predictions,
                              const std::vector<int>& labels) {
    if (predictions.size() != labels.size()) {
        throw DataError("predictions and labels differ in length");
    }
    if (predictions.empty()) {
        throw DataError("cannot compute metrics over zero samples");
    }
    MetricsReport report;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const int p = predictions[i];
        const int y = labels[i];
        if ((p != 0 && p != 1) || (y != 0 && y != 1)) {
            throw DataError("predictions and labels must be 0 or 1");
        }
        if (p == 1 && y == 1) {
            ++report.tp;
        } else if (p == 1 && y == 0) {
            ++report.fp;
        } else if (p == 0 && y == 0) {
            ++report.tn;
        } else {
            ++report.fn;
        }
    }
    const double total = static_cast<double>(predictions.size());
    report.accuracy = static_cast<double>(report.tp + report.tn) / total;
    if (report.tp + report.fp > 0) {
        report.precision =
            static_cast<double>(report.tp) / static_cast<double>(report.tp + report.fp);
    } else {
        report.precision_defined = false;
    }
    if (report.tp + report.fn > 0) {
        report.recall =
            static_cast<double>(report.tp) / static_cast<double>(report.tp + report.fn);
    } else {
        report.recall_defined = false;
    }
    if (report.precision + report.recall > 0.0) {
        report.f1 =
            2.0 * report.precision * report.recall / (report.precision + report.recall);
    } else {
        report.f1_defined = false;
    }
    if (report.fp + report.tn > 0) {
        report.fpr = static_cast<double>(report.fp) / static_cast<double>(report.fp + report.tn);
    } else {
        report.fpr_defined = false;
    }
    return report;
}

SplitResult split_random(std::size_t n, std::uint64_t seed) {
    if (n == 0) {
        throw DataError("cannot split an empty dataset");
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    Rng rng = Rng(seed).split(kSplitStream);
    rng.shuffle(order);
    const std::size_t cut80 = (8 * n) / 10;
    const std::size_t cut90 = (9 * n) / 10;
    SplitResult split;
    split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut80));
    split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(cut80),
                     order.begin() + static_cast<std::ptrdiff_t>(cut90));
    split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(cut90), order.end());
    return split;
}

SplitResult split_unseen_projects(const std::vector<std::string>& projects, std::uint64_t seed,
                                  std::size_t n_unseen) {
    std::set<std::string> distinct(projects.begin(), projects.end());
    if (distinct.size() < n_unseen + 1) {
        throw DataError("unseen-project split needs more than " + std::to_string(n_unseen) +
                        " distinct projects, got " + std::to_string(distinct.size()));
    }
    const std::vector<std::string> sorted(distinct.begin(), distinct.end());
    Rng rng = Rng(seed).split(kSplitStream);
    const std::vector<std::size_t> chosen =
        rng.sample_without_replacement(sorted.size(), n_unseen);
    std::set<std::string> test_projects;
    for (std::size_t c : chosen) {
        test_projects.insert(sorted[c]);
    }

    SplitResult split;
    std::vector<std::size_t> remaining;
    for (std::size_t i = 0; i < projects.size(); ++i) {
        if (test_projects.count(projects[i]) > 0) {
            split.test.push_back(i);
        } else {
            remaining.push_back(i);
        }
    }
    rng.shuffle(remaining);
    const std::size_t cut90 = (9 * remaining.size()) / 10;
    split.train.assign(remaining.begin(), remaining.begin() + static_cast<std::ptrdiff_t>(cut90));
    split.val.assign(remaining.begin() + static_cast<std::ptrdiff_t>(cut90), remaining.end());
    return split;
}

std::vector<std::size_t> mix_synthetic_real(const std::vector<std::size_t>& synthetic,
                                            const std::vector<std::size_t>& real,
                                            double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw ConfigError("real-data fraction must lie in [0,1]");
    }
    std::vector<std::size_t> combined = synthetic;
    const std::size_t k =
        static_cast<std::size_t>(fraction * static_cast<double>(real.size()));
    Rng rng = Rng(seed).split(kSplitStream);
    for (std::size_t s : rng.sample_without_replacement(real.size(), k)) {
        combined.push_back(real[s]);
    }
    return combined;
}

std::vector<std::size_t> downsample_ratio(const std::vector<std::size_t>& train,
                                          const std::vector<int>& labels, double ratio,
                                          std::uint64_t seed) {
    if (std::isinf(ratio)) {
        return train;
    }
    if (!(ratio > 0.0)) {
        throw ConfigError("downsampling ratio must be positive or infinite");
    }
    std::vector<std::size_t> vulnerable;
    std::vector<std::size_t> benign;
    for (std::size_t i : train) {
        if (i >= labels.size()) {
            throw DataError("training index out of range of the label list");
        }
        (labels[i] == 1 ? vulnerable : benign).push_back(i);
    }
    const std::size_t target = std::min(
        benign.size(),
        static_cast<std::size_t>(std::llround(ratio * static_cast<double>(vulnerable.size()))));
    Rng rng = Rng(seed).split(kSplitStream);
    std::vector<std::size_t> result = vulnerable;
    for (std::size_t s : rng.sample_without_replacement(benign.size(), target)) {
        result.push_back(benign[s]);
    }
    return result;
}

std::size_t select_best_epoch(const std::vector<double>& val_f1) {
    if (val_f1.empty()) {
        throw DataError("no epochs to select from");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < val_f1.size(); ++i) {
        if (val_f1[i] > val_f1[best]) {
            best = i;
        }
    }
    return best;
}

} // namespace vulgnn
