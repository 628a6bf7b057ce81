#include "vulgnn/experiment.hpp"

#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "vulgnn/common.hpp"
#include "vulgnn/rng.hpp"

namespace vulgnn {

namespace {

using nlohmann::json;

TrainConfig train_config_from_doc(const json& doc) {
    TrainConfig cfg;
    cfg.lr = doc.value("lr", cfg.lr);
    cfg.beta1 = doc.value("beta1", cfg.beta1);
    cfg.beta2 = doc.value("beta2", cfg.beta2);
    cfg.adam_eps = doc.value("adam_eps", cfg.adam_eps);
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    cfg.epochs = doc.value("epochs", cfg.epochs);
    cfg.runs = doc.value("runs", cfg.runs);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.freeze_class_weights = doc.value("freeze_class_weights", cfg.freeze_class_weights);
    validate_train_config(cfg);
    return cfg;
}

SplitSpec split_spec_from_doc(const json& doc) {
    SplitSpec spec;
    const std::string mode = doc.value("mode", std::string("random_80_10_10"));
    if (mode == "random_80_10_10") {
        spec.mode = SplitSpec::Mode::random_80_10_10;
    } else if (mode == "unseen_projects") {
        spec.mode = SplitSpec::Mode::unseen_projects;
    } else if (mode == "external_file") {
        spec.mode = SplitSpec::Mode::external_file;
    } else {
        throw ConfigError("unknown split mode: " + mode);
    }
    spec.n_unseen_projects = doc.value("n_unseen_projects", spec.n_unseen_projects);
    spec.train_file = doc.value("train_file", std::string());
    spec.val_file = doc.value("val_file", std::string());
    spec.test_file = doc.value("test_file", std::string());
    if (spec.mode == SplitSpec::Mode::external_file &&
        (spec.train_file.empty() || spec.val_file.empty() || spec.test_file.empty())) {
        throw ConfigError("external_file split requires train_file, val_file and test_file");
    }
    return spec;
}

double ratio_from_json(const json& v) {
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s == "all" || s == "inf") {
            return std::numeric_limits<double>::infinity();
        }
        throw ConfigError("ratio must be a number, \"all\" or \"inf\", got \"" + s + "\"");
    }
    if (!v.is_number()) {
        throw ConfigError("ratio must be a number, \"all\" or \"inf\"");
    }
    return v.get<double>();
}

std::vector<std::size_t> read_id_file(const std::string& path,
                                      const std::unordered_map<std::string, std::size_t>& by_id) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open split file: " + path);
    }
    std::vector<std::size_t> indices;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        auto it = by_id.find(line);
        if (it == by_id.end()) {
            throw DataError(path + " line " + std::to_string(line_no) +
                            ": sample ID not in dataset: " + line);
        }
        indices.push_back(it->second);
    }
    return indices;
}

std::string sanitize_key(const std::string& key) {
    std::string out;
    for (char c : key) {
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    }
    return out;
}

json metrics_json(const MetricsReport& m) {
    return {{"tp", m.tp},
            {"fp", m.fp},
            {"tn", m.tn},
            {"fn", m.fn},
            {"accuracy", m.accuracy},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1},
            {"fpr", m.fpr},
            {"precision_defined", m.precision_defined},
            {"recall_defined", m.recall_defined},
            {"f1_defined", m.f1_defined},
            {"fpr_defined", m.fpr_defined}};
}

MetricsReport mean_metrics(const std::vector<MetricsReport>& runs) {
    MetricsReport mean;
    if (runs.empty()) {
        return mean;
    }
    const double n = static_cast<double>(runs.size());
    for (const MetricsReport& r : runs) {
        mean.accuracy += r.accuracy / n;
        mean.precision += r.precision / n;
        mean.recall += r.recall / n;
        mean.f1 += r.f1 / n;
        mean.fpr += r.fpr / n;
        mean.precision_defined = mean.precision_defined && r.precision_defined;
        mean.recall_defined = mean.recall_defined && r.recall_defined;
        mean.f1_defined = mean.f1_defined && r.f1_defined;
        mean.fpr_defined = mean.fpr_defined && r.fpr_defined;
    }
    return mean;
}

void write_epoch_log(const std::string& path, const std::vector<EpochLog>& log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write epoch log: " + path);
    }
    for (const EpochLog& e : log) {
        json line = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val", metrics_json(e.val)}};
        out << line.dump() << "\n";
    }
}

std::string format_ratio(double ratio) {
    if (std::isinf(ratio)) {
        return "all";
    }
    std::ostringstream os;
    os << ratio;
    return os.str();
}

} // namespace

std::string to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::test1: return "test1";
        case ExperimentKind::test2: return "test2";
        case ExperimentKind::test3: return "test3";
        default: return "test4";
    }
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
    if (s == "test1") {
        return ExperimentKind::test1;
    }
    if (s == "test2") {
        return ExperimentKind::test2;
    }
    if (s == "test3") {
        return ExperimentKind::test3;
    }
    if (s == "test4") {
        return ExperimentKind::test4;
    }
    throw ConfigError("unknown experiment kind: " + s);
}

ExperimentPlan parse_plan(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed experiment plan: ") + e.what());
    }
    ExperimentPlan plan;
    plan.model = model_config_from_json(doc.value("model", json::object()).dump());
    plan.train = train_config_from_doc(doc.value("train", json::object()));
    plan.split = split_spec_from_doc(doc.value("split", json::object()));
    plan.kind = experiment_kind_from_string(doc.value("kind", std::string("test1")));
    plan.data_dir = doc.value("data", std::string());
    plan.synthetic_dir = doc.value("synthetic_data", std::string());
    if (plan.data_dir.empty()) {
        throw ConfigError("experiment plan must name a \"data\" shard directory");
    }
    for (const json& f : doc.value("fractions", json::array())) {
        plan.fractions.push_back(f.get<double>());
    }
    for (const json& r : doc.value("ratios", json::array())) {
        plan.ratios.push_back(ratio_from_json(r));
    }
    if (plan.kind == ExperimentKind::test2 &&
        plan.split.mode == SplitSpec::Mode::random_80_10_10) {
        plan.split.mode = SplitSpec::Mode::unseen_projects;
    }
    if (plan.kind == ExperimentKind::test3) {
        if (plan.synthetic_dir.empty()) {
            throw ConfigError("test3 requires a \"synthetic_data\" shard directory");
        }
        if (plan.fractions.empty()) {
            throw ConfigError("test3 requires a non-empty \"fractions\" list");
        }
        for (double f : plan.fractions) {
            if (!(f >= 0.0 && f <= 1.0)) {
                throw ConfigError("test3 fractions must lie in [0,1]");
            }
        }
    }
    if (plan.kind == ExperimentKind::test4) {
        if (plan.ratios.empty()) {
            throw ConfigError("test4 requires a non-empty \"ratios\" list");
        }
        for (double r : plan.ratios) {
            if (!(r > 0.0)) {
                throw ConfigError("test4 ratios must be positive or \"all\"");
            }
        }
    }
    return plan;
}

ExperimentPlan load_plan(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open experiment plan: " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_plan(buf.str());
}

TrainConfig train_config_from_json(const std::string& json_text) {
    try {
        return train_config_from_doc(json::parse(json_text));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed training config: ") + e.what());
    }
}

SplitSpec split_spec_from_json(const std::string& json_text) {
    try {
        return split_spec_from_doc(json::parse(json_text));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed split spec: ") + e.what());
    }
}

SplitResult resolve_split(const SplitSpec& spec, const std::vector<FeatureGraph>& data,
                          std::uint64_t seed) {
    switch (spec.mode) {
        case SplitSpec::Mode::random_80_10_10:
            return split_random(data.size(), seed);
        case SplitSpec::Mode::unseen_projects: {
            std::vector<std::string> projects;
            projects.reserve(data.size());
            for (const FeatureGraph& g : data) {
                projects.push_back(g.project);
            }
            return split_unseen_projects(projects, seed, spec.n_unseen_projects);
        }
        case SplitSpec::Mode::external_file:
        default: {
            std::unordered_map<std::string, std::size_t> by_id;
            for (std::size_t i = 0; i < data.size(); ++i) {
                by_id.emplace(data[i].sample_id, i);
            }
            SplitResult split;
            split.train = read_id_file(spec.train_file, by_id);
            split.val = read_id_file(spec.val_file, by_id);
            split.test = read_id_file(spec.test_file, by_id);
            return split;
        }
    }
}

std::string metrics_to_json_string(const MetricsReport& report) {
    return metrics_json(report).dump();
}

std::string result_to_csv(const ExperimentResult& result) {
    std::ostringstream os;
    os << "key,fraction,ratio,n_train,train_vul,train_nonvul,n_val,n_test,"
          "accuracy,precision,recall,f1,fpr\n";
    for (const ExperimentRow& row : result.rows) {
        os << row.key << ",";
        if (row.fraction >= 0.0) {
            os << row.fraction;
        }
        os << ",";
        if (row.ratio > 0.0) {
            os << format_ratio(row.ratio);
        }
        os << "," << row.n_train << "," << row.train_vul << "," << row.train_nonvul << ","
           << row.n_val << "," << row.n_test << "," << row.mean.accuracy << ","
           << row.mean.precision << "," << row.mean.recall << "," << row.mean.f1 << ","
           << row.mean.fpr << "\n";
    }
    return os.str();
}

std::string result_to_json(const ExperimentResult& result) {
    json rows = json::array();
    for (const ExperimentRow& row : result.rows) {
        json runs = json::array();
        for (const MetricsReport& r : row.per_run) {
            runs.push_back(metrics_json(r));
        }
        json mean = {{"accuracy", row.mean.accuracy},
                     {"precision", row.mean.precision},
                     {"recall", row.mean.recall},
                     {"f1", row.mean.f1},
                     {"fpr", row.mean.fpr}};
        json entry = {{"key", row.key},
                      {"n_train", row.n_train},
                      {"train_vul", row.train_vul},
                      {"train_nonvul", row.train_nonvul},
                      {"n_val", row.n_val},
                      {"n_test", row.n_test},
                      {"mean", mean},
                      {"runs", runs}};
        if (row.fraction >= 0.0) {
            entry["fraction"] = row.fraction;
        }
        if (row.ratio > 0.0) {
            entry["ratio"] = std::isinf(row.ratio) ? json("all") : json(row.ratio);
        }
        rows.push_back(std::move(entry));
    }
    json doc = {{"kind", to_string(result.kind)}, {"rows", rows}};
    return doc.dump(2);
}

std::vector<FeatureGraph> load_compatible_shards(const std::string& dir,
                                                 const ModelConfig& model) {
    const ShardDataset ds = ShardDataset::open(dir);
    if (ds.meta().l_node != model.l_node || ds.meta().l_edge != model.l_edge) {
        throw DataError("shards in " + dir + " were built with window lengths " +
                        std::to_string(ds.meta().l_node) + "/" +
                        std::to_string(ds.meta().l_edge) + ", model expects " +
                        std::to_string(model.l_node) + "/" + std::to_string(model.l_edge));
    }
    if (ds.meta().vocab_size != model.vocab_size) {
        throw DataError("shards in " + dir + " use vocabulary size " +
                        std::to_string(ds.meta().vocab_size) + ", model expects " +
                        std::to_string(model.vocab_size));
    }
    return ds.load_all();
}

ExperimentResult run_experiment(const ExperimentPlan& plan, const std::string& out_dir,
                                std::ostream* progress) {
    std::vector<FeatureGraph> data = load_compatible_shards(plan.data_dir, plan.model);
    const std::size_t n_real = data.size();
    std::vector<std::size_t> synthetic_idx;
    if (plan.kind == ExperimentKind::test3) {
        std::vector<FeatureGraph> synthetic = load_compatible_shards(plan.synthetic_dir, plan.model);
        synthetic_idx.resize(synthetic.size());
        for (std::size_t i = 0; i < synthetic.size(); ++i) {
            synthetic_idx[i] = n_real + i;
        }
        data.insert(data.end(), std::make_move_iterator(synthetic.begin()),
                    std::make_move_iterator(synthetic.end()));
    }

    std::vector<FeatureGraph> real_view(data.begin(),
                                        data.begin() + static_cast<std::ptrdiff_t>(n_real));
    const SplitResult base = resolve_split(plan.split, real_view, plan.train.seed);

    std::vector<int> labels;
    labels.reserve(data.size());
    for (const FeatureGraph& g : data) {
        labels.push_back(g.label);
    }

    struct RowSpec {
        std::string key;
        double fraction = -1.0;
        double ratio = -1.0;
        std::vector<std::size_t> train;
    };
    std::vector<RowSpec> row_specs;
    const Rng master(plan.train.seed);
    switch (plan.kind) {
        case ExperimentKind::test1:
        case ExperimentKind::test2:
            row_specs.push_back({to_string(plan.kind), -1.0, -1.0, base.train});
            break;
        case ExperimentKind::test3:
            for (std::size_t i = 0; i < plan.fractions.size(); ++i) {
                const double f = plan.fractions[i];
                std::ostringstream key;
                key << "fraction=" << f;
                row_specs.push_back(
                    {key.str(), f, -1.0,
                     mix_synthetic_real(synthetic_idx, base.train, f,
                                        master.split(100 + i).seed())});
            }
            break;
        case ExperimentKind::test4:
            for (std::size_t i = 0; i < plan.ratios.size(); ++i) {
                const double r = plan.ratios[i];
                row_specs.push_back(
                    {"ratio=" + format_ratio(r), -1.0, r,
                     downsample_ratio(base.train, labels, r, master.split(100 + i).seed())});
            }
            break;
    }

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
    }

    ExperimentResult result;
    result.kind = plan.kind;
    for (const RowSpec& spec : row_specs) {
        ExperimentRow row;
        row.key = spec.key;
        row.fraction = spec.fraction;
        row.ratio = spec.ratio;
        row.n_train = spec.train.size();
        for (std::size_t i : spec.train) {
            (labels[i] == 1 ? row.train_vul : row.train_nonvul) += 1;
        }
        row.n_val = base.val.size();
        row.n_test = base.test.size();

        const std::vector<RunResult<float>> runs =
            train_loop<float>(plan.model, plan.train, data, spec.train, base.val);
        for (std::size_t j = 0; j < runs.size(); ++j) {
            row.per_run.push_back(evaluate(runs[j].best_params, runs[j].config, data, base.test,
                                           plan.train.batch_size));
            if (!out_dir.empty()) {
                const std::string stem = sanitize_key(spec.key) + "_run" + std::to_string(j);
                write_epoch_log(
                    (std::filesystem::path(out_dir) / (stem + ".log.jsonl")).string(),
                    runs[j].log);
                if (j == 0) {
                    save_checkpoint(runs[j].best_params, runs[j].config,
                                    (std::filesystem::path(out_dir) / (stem + ".vgnn")).string());
                }
            }
        }
        row.mean = mean_metrics(row.per_run);
        result.rows.push_back(std::move(row));
        if (progress != nullptr) {
            const ExperimentRow& done = result.rows.back();
            *progress << done.key << ": mean test F1 " << done.mean.f1 << ", accuracy "
                      << done.mean.accuracy << "\n";
        }
    }

    if (!out_dir.empty()) {
        std::ofstream csv((std::filesystem::path(out_dir) / "results.csv").string(),
                          std::ios::trunc);
        csv << result_to_csv(result);
        std::ofstream js((std::filesystem::path(out_dir) / "results.json").string(),
                         std::ios::trunc);
        js << result_to_json(result) << "\n";
    }
    return result;
}

} // namespace vulgnn
