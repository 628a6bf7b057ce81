#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "vulgnn/bpe.hpp"
#include "vulgnn/common.hpp"
#include "vulgnn/experiment.hpp"
#include "vulgnn/feature_graph.hpp"
#include "vulgnn/graph_ir.hpp"
#include "vulgnn/manifest.hpp"
#include "vulgnn/model.hpp"
#include "vulgnn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vulgnn;

namespace {

bool blank_line(const std::string& line) {
    return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

std::string read_text_file(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError(std::string("cannot open ") + what + ": " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// --vocab/--merges fall back to $VULGNN_VOCAB_DIR/{vocab.json,merges.txt}.
std::pair<std::string, std::string> resolve_vocab_paths(const std::string& vocab,
                                                        const std::string& merges) {
    std::string v = vocab;
    std::string m = merges;
    const char* dir = std::getenv("VULGNN_VOCAB_DIR");
    if (v.empty() && dir != nullptr) {
        v = (fs::path(dir) / "vocab.json").string();
    }
    if (m.empty() && dir != nullptr) {
        m = (fs::path(dir) / "merges.txt").string();
    }
    if (v.empty() || m.empty()) {
        throw ConfigError(
            "no vocabulary given: pass --vocab and --merges, or set VULGNN_VOCAB_DIR");
    }
    return {v, m};
}

TypeRegistry load_registry(const std::string& path) {
    return path.empty() ? TypeRegistry::builtin() : TypeRegistry::load(path);
}

json metrics_doc(const MetricsReport& m) {
    return json::parse(metrics_to_json_string(m));
}

struct PreprocessArgs {
    std::string input;
    std::string vocab;
    std::string merges;
    std::string registry;
    std::string out;
    unsigned workers = 1;
    std::size_t l_node = 8;
    std::size_t l_edge = 16;
    bool skip_bad = false;
    bool allow_vocab_mismatch = false;
};

int cmd_preprocess(const PreprocessArgs& args) {
    std::vector<fs::path> files;
    if (fs::is_directory(args.input)) {
        for (const auto& entry : fs::directory_iterator(args.input)) {
            if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) {
            throw DataError("no .jsonl files in " + args.input);
        }
    } else if (fs::is_regular_file(args.input)) {
        files.emplace_back(args.input);
    } else {
        throw DataError("input does not exist: " + args.input);
    }

    const TypeRegistry registry = load_registry(args.registry);
    const auto [vocab_path, merges_path] = resolve_vocab_paths(args.vocab, args.merges);
    const BpeVocabulary vocab =
        load_vocabulary_files(vocab_path, merges_path, args.allow_vocab_mismatch);

    struct Job {
        std::string text;
        std::string origin;
    };
    std::vector<Job> jobs;
    for (const fs::path& file : files) {
        std::ifstream in(file);
        if (!in) {
            throw DataError("cannot open input: " + file.string());
        }
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (blank_line(line)) {
                continue;
            }
            jobs.push_back({std::move(line), file.string() + ":" + std::to_string(line_no)});
            line.clear();
        }
    }

    std::vector<FeatureGraph> parsed(jobs.size());
    std::vector<std::string> errors(jobs.size());
    const unsigned n_workers =
        std::max(1u, std::min(args.workers, static_cast<unsigned>(jobs.size())));
    auto work = [&](unsigned w) {
        for (std::size_t i = w; i < jobs.size(); i += n_workers) {
            try {
                parsed[i] = featurize(parse_cpg_export(jobs[i].text, registry), vocab,
                                      args.l_node, args.l_edge);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    if (n_workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (unsigned w = 0; w < n_workers; ++w) {
            pool.emplace_back(work, w);
        }
        for (std::thread& t : pool) {
            t.join();
        }
    }

    std::size_t n_failed = 0;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (!errors[i].empty()) {
            ++n_failed;
            std::cerr << "error: " << jobs[i].origin << ": " << errors[i] << "\n";
        }
    }
    if (n_failed > 0 && !args.skip_bad) {
        throw DataError(std::to_string(n_failed) +
                        " samples failed; fix them or rerun with --skip-bad");
    }

    ShardWriter writer(args.out,
                       DatasetMeta{static_cast<std::uint32_t>(args.l_node),
                                   static_cast<std::uint32_t>(args.l_edge), vocab.vocab_size,
                                   vocab.pad_id});
    std::size_t n_written = 0;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (errors[i].empty()) {
            writer.add(parsed[i]);
            ++n_written;
        }
    }
    writer.finish();
    std::cout << "wrote " << n_written << " samples to " << args.out << "\n";
    if (n_failed > 0) {
        std::cerr << "warning: skipped " << n_failed << " bad samples\n";
    }
    return 0;
}

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
};

int cmd_train(const TrainArgs& args) {
    json doc;
    try {
        doc = json::parse(read_text_file(args.config, "training config"));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed training config: ") + e.what());
    }
    const ModelConfig model = model_config_from_json(doc.value("model", json::object()).dump());
    const TrainConfig train = train_config_from_json(doc.value("train", json::object()).dump());
    const SplitSpec split = split_spec_from_json(doc.value("split", json::object()).dump());

    fs::create_directories(args.out);
    const std::string log_path = (fs::path(args.out) / "train_log.jsonl").string();
    const std::string ckpt_path = (fs::path(args.out) / "best.vgnn").string();
    const std::string report_path = (fs::path(args.out) / "report.json").string();

    const json train_doc = {{"lr", train.lr},
                            {"beta1", train.beta1},
                            {"beta2", train.beta2},
                            {"adam_eps", train.adam_eps},
                            {"batch_size", train.batch_size},
                            {"epochs", train.epochs},
                            {"runs", train.runs},
                            {"seed", train.seed},
                            {"freeze_class_weights", train.freeze_class_weights}};

    RunManifest manifest;
    manifest.created = current_timestamp_utc();
    manifest.seed = train.seed;
    manifest.config_digest = to_hex(fnv1a64(model_config_to_json(model) + "\n" + train_doc.dump()));
    manifest.inputs.push_back(digest_path(args.config));
    manifest.inputs.push_back(digest_path(args.data));
    manifest.outputs = {log_path, ckpt_path, report_path};
    write_manifest(manifest, (fs::path(args.out) / "manifest.json").string());

    const std::vector<FeatureGraph> data = load_compatible_shards(args.data, model);
    const SplitResult sets = resolve_split(split, data, train.seed);
    const std::vector<RunResult<float>> runs =
        train_loop<float>(model, train, data, sets.train, sets.val);

    std::ofstream log(log_path, std::ios::trunc);
    for (std::size_t r = 0; r < runs.size(); ++r) {
        for (const EpochLog& e : runs[r].log) {
            const json line = {{"run", r},
                               {"epoch", e.epoch},
                               {"train_loss", e.train_loss},
                               {"val", metrics_doc(e.val)}};
            log << line.dump() << "\n";
        }
    }

    std::size_t best_run = 0;
    for (std::size_t r = 1; r < runs.size(); ++r) {
        if (runs[r].best_val.f1 > runs[best_run].best_val.f1) {
            best_run = r;
        }
    }
    save_checkpoint(runs[best_run].best_params, runs[best_run].config, ckpt_path);

    json run_docs = json::array();
    for (std::size_t r = 0; r < runs.size(); ++r) {
        run_docs.push_back({{"run", r},
                            {"seed", runs[r].config.seed},
                            {"best_epoch", runs[r].best_epoch},
                            {"best_val", metrics_doc(runs[r].best_val)}});
    }
    const json report = {{"model", json::parse(model_config_to_json(model))},
                         {"train", train_doc},
                         {"n_train", sets.train.size()},
                         {"n_val", sets.val.size()},
                         {"n_test", sets.test.size()},
                         {"best_run", best_run},
                         {"runs", run_docs}};
    std::ofstream report_out(report_path, std::ios::trunc);
    report_out << report.dump(2) << "\n";

    std::cout << "best run " << best_run << ": epoch " << runs[best_run].best_epoch
              << ", val F1 " << runs[best_run].best_val.f1 << "\n";
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string split = "test";
    std::string split_mode = "random";
    std::string out;
    std::size_t n_unseen = 95;
    std::size_t batch_size = 400;
    std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& args) {
    auto [params, config] = load_checkpoint<float>(args.checkpoint);
    const std::vector<FeatureGraph> data = load_compatible_shards(args.data, config);

    std::vector<std::size_t> indices;
    if (args.split == "all") {
        indices.resize(data.size());
        std::iota(indices.begin(), indices.end(), 0);
    } else {
        SplitSpec spec;
        if (args.split_mode == "random") {
            spec.mode = SplitSpec::Mode::random_80_10_10;
        } else if (args.split_mode == "unseen") {
            spec.mode = SplitSpec::Mode::unseen_projects;
        } else {
            throw ConfigError("unknown --split-mode: " + args.split_mode);
        }
        spec.n_unseen_projects = args.n_unseen;
        const SplitResult sets = resolve_split(spec, data, args.seed);
        if (args.split == "train") {
            indices = sets.train;
        } else if (args.split == "val") {
            indices = sets.val;
        } else if (args.split == "test") {
            indices = sets.test;
        } else {
            throw ConfigError("unknown --split: " + args.split);
        }
    }

    const MetricsReport metrics = evaluate(params, config, data, indices, args.batch_size);
    const std::string text = metrics_doc(metrics).dump(2);
    std::cout << text << "\n";
    if (!args.out.empty()) {
        std::ofstream out(args.out, std::ios::trunc);
        if (!out) {
            throw DataError("cannot write metrics: " + args.out);
        }
        out << text << "\n";
    }
    return 0;
}

struct PredictArgs {
    std::string checkpoint;
    std::string sample;
    std::string vocab;
    std::string merges;
    std::string registry;
    bool allow_vocab_mismatch = false;
};

int cmd_predict(const PredictArgs& args) {
    const auto [params, config] = load_checkpoint<float>(args.checkpoint);
    const TypeRegistry registry = load_registry(args.registry);
    const auto [vocab_path, merges_path] = resolve_vocab_paths(args.vocab, args.merges);
    const BpeVocabulary vocab =
        load_vocabulary_files(vocab_path, merges_path, args.allow_vocab_mismatch);
    if (vocab.vocab_size != config.vocab_size) {
        throw DataError("vocabulary size " + std::to_string(vocab.vocab_size) +
                        " does not match checkpoint vocab_size " +
                        std::to_string(config.vocab_size));
    }

    std::ifstream in(args.sample);
    if (!in) {
        throw DataError("cannot open sample file: " + args.sample);
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank_line(line)) {
            continue;
        }
        json out;
        try {
            const CodeGraph graph = parse_cpg_export(line, registry);
            const FeatureGraph feats = featurize(graph, vocab, config.l_node, config.l_edge);
            const GraphBatch batch =
                make_batch(std::vector<const FeatureGraph*>{&feats});
            const Tensor<float> logits = forward(params, config, batch);
            out = {{"id", graph.sample_id},
                   {"label", prediction_rule(logits.at(0, 0), logits.at(0, 1))},
                   {"logits", {logits.at(0, 0), logits.at(0, 1)}}};
        } catch (const std::exception& e) {
            out = {{"line", line_no}, {"error", e.what()}};
        }
        std::cout << out.dump() << "\n";
    }
    return 0;
}

struct ExperimentArgs {
    std::string plan;
    std::string out;
};

int cmd_experiment(const ExperimentArgs& args) {
    const ExperimentPlan plan = load_plan(args.plan);
    const ExperimentResult result = run_experiment(plan, args.out, &std::cout);
    std::cout << result_to_csv(result);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"CPG vulnerability detection toolkit"};
    app.require_subcommand(1);

    PreprocessArgs pre;
    CLI::App* pre_cmd =
        app.add_subcommand("preprocess", "Tokenize CPG exports into training shards");
    pre_cmd->add_option("--input", pre.input, "JSONL file or directory of .jsonl files")
        ->required();
    pre_cmd->add_option("--vocab", pre.vocab, "vocab.json path");
    pre_cmd->add_option("--merges", pre.merges, "merges.txt path");
    pre_cmd->add_option("--registry", pre.registry, "node-kind/edge-relation registry JSON");
    pre_cmd->add_option("--out", pre.out, "output shard directory")->required();
    pre_cmd->add_option("--workers", pre.workers, "worker threads");
    pre_cmd->add_option("--l-node", pre.l_node, "node token window length");
    pre_cmd->add_option("--l-edge", pre.l_edge, "edge token window length");
    pre_cmd->add_flag("--skip-bad", pre.skip_bad, "drop unparsable samples instead of failing");
    pre_cmd->add_flag("--allow-vocab-size-mismatch", pre.allow_vocab_mismatch,
                      "accept vocabularies smaller than the standard 49152");

    TrainArgs tr;
    CLI::App* train_cmd = app.add_subcommand("train", "Train a model on preprocessed shards");
    train_cmd->add_option("--config", tr.config, "JSON config with model/train/split sections")
        ->required();
    train_cmd->add_option("--data", tr.data, "shard directory")->required();
    train_cmd->add_option("--out", tr.out, "output directory for run artifacts")->required();

    EvalArgs ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a data split");
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--data", ev.data, "shard directory")->required();
    eval_cmd->add_option("--split", ev.split, "train|val|test|all");
    eval_cmd->add_option("--split-mode", ev.split_mode, "random|unseen");
    eval_cmd->add_option("--n-unseen", ev.n_unseen, "held-out project count for unseen mode");
    eval_cmd->add_option("--seed", ev.seed, "seed the split was derived from");
    eval_cmd->add_option("--batch-size", ev.batch_size, "evaluation batch size");
    eval_cmd->add_option("--out", ev.out, "also write metrics JSON to this file");

    PredictArgs pr;
    CLI::App* predict_cmd = app.add_subcommand("predict", "Score raw CPG samples");
    predict_cmd->add_option("--checkpoint", pr.checkpoint, "checkpoint file")->required();
    predict_cmd->add_option("--sample", pr.sample, "JSONL file of CPG samples")->required();
    predict_cmd->add_option("--vocab", pr.vocab, "vocab.json path");
    predict_cmd->add_option("--merges", pr.merges, "merges.txt path");
    predict_cmd->add_option("--registry", pr.registry, "registry JSON");
    predict_cmd->add_flag("--allow-vocab-size-mismatch", pr.allow_vocab_mismatch,
                          "accept vocabularies smaller than the standard 49152");

    ExperimentArgs ex;
    CLI::App* exp_cmd = app.add_subcommand("experiment", "Run a full evaluation protocol");
    exp_cmd->add_option("--plan", ex.plan, "experiment plan JSON")->required();
    exp_cmd->add_option("--out", ex.out, "output directory for tables and logs")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (pre_cmd->parsed()) {
            return cmd_preprocess(pre);
        }
        if (train_cmd->parsed()) {
            return cmd_train(tr);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(ev);
        }
        if (predict_cmd->parsed()) {
            return cmd_predict(pr);
        }
        if (exp_cmd->parsed()) {
            return cmd_experiment(ex);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
