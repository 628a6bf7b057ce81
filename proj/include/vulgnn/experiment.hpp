#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "vulgnn/feature_graph.hpp"
#include "vulgnn/model.hpp"
#include "vulgnn/train.hpp"

namespace vulgnn {

enum class ExperimentKind { test1, test2, test3, test4 };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& s);

struct SplitSpec {
    enum class Mode { random_80_10_10, unseen_projects, external_file };
    Mode mode = Mode::random_80_10_10;
    std::size_t n_unseen_projects = 95;
    std::string train_file; // external_file mode: one sample ID per line
    std::string val_file;
    std::string test_file;
};

// A full experiment description: which protocol, on which shards, with
// which model/training settings. Test III sweeps real-data fractions
// over a synthetic base; Test IV sweeps class-rebalance ratios.
struct ExperimentPlan {
    ModelConfig model;
    TrainConfig train;
    SplitSpec split;
    ExperimentKind kind = ExperimentKind::test1;
    std::string data_dir;
    std::string synthetic_dir;     // test3 only
    std::vector<double> fractions; // test3; values in [0,1]
    std::vector<double> ratios;    // test4; positive or infinity ("all")
};

ExperimentPlan parse_plan(const std::string& json_text);
ExperimentPlan load_plan(const std::string& path);

// Parsers for the "train" / "split" sections, shared with the CLI's
// train command which accepts the same config layout as a plan.
TrainConfig train_config_from_json(const std::string& json_text);
SplitSpec split_spec_from_json(const std::string& json_text);

struct ExperimentRow {
    std::string key; // "test1", "fraction=0.1", "ratio=all", ...
    double fraction = -1.0;
    double ratio = -1.0; // infinity encodes "all"
    std::size_t n_train = 0;
    std::size_t train_vul = 0;
    std::size_t train_nonvul = 0;
    std::size_t n_val = 0;
    std::size_t n_test = 0;
    MetricsReport mean; // mean over runs, evaluated on the test split
    std::vector<MetricsReport> per_run;
};

struct ExperimentResult {
    ExperimentKind kind = ExperimentKind::test1;
    std::vector<ExperimentRow> rows;
};

// Runs the plan end to end. Writes results.csv / results.json, per-run
// epoch logs, and one checkpoint per row into out_dir when non-empty.
// progress, when given, receives one line per completed row.
ExperimentResult run_experiment(const ExperimentPlan& plan, const std::string& out_dir,
                                std::ostream* progress = nullptr);

std::string metrics_to_json_string(const MetricsReport& report);
std::string result_to_csv(const ExperimentResult& result);
std::string result_to_json(const ExperimentResult& result);

// Resolves the plan's split spec against loaded data.
SplitResult resolve_split(const SplitSpec& spec, const std::vector<FeatureGraph>& data,
                          std::uint64_t seed);

// Loads every sample from a shard directory, rejecting shards whose
// window lengths or vocabulary size disagree with the model config.
std::vector<FeatureGraph> load_compatible_shards(const std::string& dir,
                                                 const ModelConfig& model);

} // namespace vulgnn
