#include "oos/cli.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "oos/baselines.hpp"
#include "oos/classifier.hpp"
#include "oos/data.hpp"
#include "oos/encoder.hpp"
#include "oos/errors.hpp"
#include "oos/evaluation.hpp"
#include "oos/synthetic.hpp"
#include "oos/trainer.hpp"
#include "oos/util.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace oos::cli {

namespace {

std::vector<std::string> split_on(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : text) {
        if (c == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    return parts;
}

uint64_t parse_u64(const std::string& text, const std::string& what) {
    try {
        size_t pos = 0;
        const unsigned long long v = std::stoull(text, &pos);
        if (pos != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw UsageError("cannot parse " + what + ": `" + text + "`");
    }
}

}  // namespace

std::vector<uint64_t> parse_seed_list(const std::string& text) {
    std::vector<uint64_t> seeds;
    const auto range_pos = text.find("..");
    if (range_pos != std::string::npos) {
        const uint64_t lo = parse_u64(text.substr(0, range_pos), "seed range start");
        const uint64_t hi = parse_u64(text.substr(range_pos + 2), "seed range end");
        if (hi < lo) throw UsageError("seed range end below start: " + text);
        if (hi - lo > 10000) throw UsageError("seed range too large: " + text);
        for (uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
        return seeds;
    }
    for (const auto& part : split_on(text, ',')) {
        if (part.empty()) throw UsageError("empty entry in seed list: " + text);
        seeds.push_back(parse_u64(part, "seed"));
    }
    if (seeds.empty()) throw UsageError("empty seed list");
    return seeds;
}

BatchRatio parse_ratio(const std::string& text) {
    const auto parts = split_on(text, ':');
    if (parts.size() != 3) throw UsageError("ratio must look like ni:no:ns, got `" + text + "`");
    BatchRatio ratio;
    ratio.inliers = parse_u64(parts[0], "ratio inliers");
    ratio.open = parse_u64(parts[1], "ratio open");
    ratio.synthetic = parse_u64(parts[2], "ratio synthetic");
    if (ratio.inliers < 1) throw UsageError("ratio inlier count must be >= 1");
    return ratio;
}

std::vector<size_t> parse_hidden(const std::string& text) {
    std::vector<size_t> hidden;
    if (text.empty() || text == "none") return hidden;
    for (const auto& part : split_on(text, ',')) {
        hidden.push_back(parse_u64(part, "hidden size"));
    }
    return hidden;
}

size_t thread_cap() {
    const char* env = std::getenv("OOS_THREADS");
    if (!env) return 1;
    try {
        const long v = std::stol(env);
        return v < 1 ? 1 : static_cast<size_t>(v);
    } catch (const std::exception&) {
        return 1;
    }
}

namespace {

// ---------------------------------------------------------------------
// shared option bundle for train/sweep
// ---------------------------------------------------------------------

struct TrainOptions {
    std::string split_dir;
    std::string pool_path;
    std::string method = "ours";
    std::string encoder = "identity";
    size_t dim = 0;
    size_t hash_buckets = 4096;
    bool freeze_encoder = false;
    std::string manifest;
    std::string ratio = "100:100:400";
    double tau = 0.1;
    double lr = 1e-4;
    double encoder_lr = 1e-3;
    size_t patience = 5;
    size_t max_epochs = 50;
    std::string hidden = "1024,1024";
    std::string seeds = "0";
    std::string out_dir;
    std::string config_path;
    std::string synth_trace;
    bool synth_from_whole_set = false;
    bool quiet = false;
};

void add_train_flags(CLI::App* cmd, TrainOptions& opt) {
    cmd->add_option("--split", opt.split_dir, "split artifact directory")->required();
    cmd->add_option("--open-pool", opt.pool_path, "open-domain pool file");
    cmd->add_option("--encoder", opt.encoder, "identity|hashed|precomputed");
    cmd->add_option("--dim", opt.dim, "feature dimension (identity: inferred when 0)");
    cmd->add_option("--hash-buckets", opt.hash_buckets, "hashed encoder bucket count");
    cmd->add_flag("--freeze-encoder", opt.freeze_encoder, "do not train the hashed table");
    cmd->add_option("--manifest", opt.manifest, "precomputed embedding file");
    cmd->add_option("--ratio", opt.ratio, "per-batch inlier:open:synthetic counts");
    cmd->add_option("--tau", opt.tau, "softmax temperature");
    cmd->add_option("--lr", opt.lr, "head learning rate");
    cmd->add_option("--encoder-lr", opt.encoder_lr, "hashed table learning rate");
    cmd->add_option("--patience", opt.patience, "epochs without improvement before stopping");
    cmd->add_option("--max-epochs", opt.max_epochs, "epoch cap");
    cmd->add_option("--hidden", opt.hidden, "hidden sizes, e.g. 1024,1024");
    cmd->add_option("--seed,--seeds", opt.seeds, "seed, list (1,2,3) or range (1..10)");
    cmd->add_option("--out", opt.out_dir, "output directory")->required();
    cmd->add_option("--config", opt.config_path, "json config file (flags win conflicts)");
    cmd->add_flag("--synth-from-whole-set", opt.synth_from_whole_set,
                  "draw mix parents from the whole train set");
    cmd->add_option("--synth-trace", opt.synth_trace, "jsonl audit log of mix parents and theta");
    cmd->add_flag("--quiet", opt.quiet, "suppress per-epoch logging");
}

// json config file: keys mirror the long flag names without dashes.
// Explicit command-line flags win.
void apply_config_file(const CLI::App* cmd, TrainOptions& opt) {
    if (opt.config_path.empty()) return;
    json cfg;
    try {
        cfg = json::parse(read_text_file(opt.config_path));
    } catch (const json::parse_error& e) {
        throw UsageError(opt.config_path + ": bad json: " + e.what());
    }
    auto overridden = [&](const std::string& flag) { return cmd->count(flag) > 0; };
    auto set_str = [&](const char* key, const std::string& flag, std::string& target) {
        if (cfg.contains(key) && !overridden(flag)) target = cfg.at(key).get<std::string>();
    };
    auto set_num = [&](const char* key, const std::string& flag, auto& target) {
        using T = std::decay_t<decltype(target)>;
        if (cfg.contains(key) && !overridden(flag)) target = cfg.at(key).get<T>();
    };
    set_str("encoder", "--encoder", opt.encoder);
    set_num("dim", "--dim", opt.dim);
    set_num("hash_buckets", "--hash-buckets", opt.hash_buckets);
    set_str("manifest", "--manifest", opt.manifest);
    set_str("ratio", "--ratio", opt.ratio);
    set_num("tau", "--tau", opt.tau);
    set_num("lr", "--lr", opt.lr);
    set_num("encoder_lr", "--encoder-lr", opt.encoder_lr);
    set_num("patience", "--patience", opt.patience);
    set_num("max_epochs", "--max-epochs", opt.max_epochs);
    set_str("hidden", "--hidden", opt.hidden);
    set_str("seeds", "--seed", opt.seeds);
    if (cfg.contains("freeze_encoder") && !overridden("--freeze-encoder")) {
        opt.freeze_encoder = cfg.at("freeze_encoder").get<bool>();
    }
    if (cfg.contains("synth_from_whole_set") && !overridden("--synth-from-whole-set")) {
        opt.synth_from_whole_set = cfg.at("synth_from_whole_set").get<bool>();
    }
}

EncoderSpec encoder_spec_from(const TrainOptions& opt, const SplitResult& split) {
    EncoderSpec spec;
    spec.kind = encoder_kind_from_name(opt.encoder);
    spec.dim = opt.dim;
    spec.hash_buckets = opt.hash_buckets;
    spec.trainable = !opt.freeze_encoder;
    spec.manifest_path = opt.manifest;
    if (spec.kind == EncoderKind::hashed_mean && spec.dim == 0) spec.dim = 768;
    if (spec.kind == EncoderKind::identity && spec.dim == 0) {
        for (const auto& ex : split.train.examples) {
            if (ex.utterance.has_numeric()) {
                spec.dim = ex.utterance.numeric->size();
                break;
            }
        }
        if (spec.dim == 0) throw UsageError("cannot infer --dim: training set has no numeric vectors");
    }
    return spec;
}

TrainConfig train_config_from(const TrainOptions& opt, uint64_t seed) {
    TrainConfig config;
    config.ratio = parse_ratio(opt.ratio);
    config.head_lr = opt.lr;
    config.encoder_lr = opt.encoder_lr;
    config.patience = opt.patience;
    config.max_epochs = opt.max_epochs;
    config.tau = opt.tau;
    config.hidden = parse_hidden(opt.hidden);
    config.seed = seed;
    config.synth_from_whole_set = opt.synth_from_whole_set;
    config.synth_trace_path = opt.synth_trace;
    validate_config(config);
    return config;
}

json config_snapshot(const TrainOptions& opt) {
    json j;
    j["split"] = opt.split_dir;
    j["open_pool"] = opt.pool_path;
    j["method"] = opt.method;
    j["encoder"] = opt.encoder;
    j["dim"] = opt.dim;
    j["hash_buckets"] = opt.hash_buckets;
    j["freeze_encoder"] = opt.freeze_encoder;
    j["manifest"] = opt.manifest;
    j["ratio"] = opt.ratio;
    j["tau"] = opt.tau;
    j["lr"] = opt.lr;
    j["encoder_lr"] = opt.encoder_lr;
    j["patience"] = opt.patience;
    j["max_epochs"] = opt.max_epochs;
    j["hidden"] = opt.hidden;
    j["synth_from_whole_set"] = opt.synth_from_whole_set;
    return j;
}

struct SeedRunResult {
    uint64_t seed = 0;
    MetricsReport metrics;
    std::string checkpoint_name;
    std::string history_name;
    std::string metrics_name;
};

MetricsReport evaluate_to_file(const MlpClassifier& model, const Encoder& encoder,
                               std::optional<double> threshold, const SplitResult& split,
                               const fs::path& out_path) {
    PredictFn predictor;
    if (threshold) {
        const double t = *threshold;
        const int oos = split.label_space.oos_index;
        predictor = [&model, t, oos](const std::vector<FeatureVector>& f) {
            return msp_predict(model, t, f, oos);
        };
    } else {
        predictor = [&model](const std::vector<FeatureVector>& f) { return predict(model, f); };
    }
    const EvalResult result = evaluate(predictor, encoder, split.test, split.label_space.oos_index);
    if (!out_path.empty()) {
        write_text_file(out_path, report_to_json(result.metrics, result.cm).dump(2) + "\n");
    }
    return result.metrics;
}

SeedRunResult run_one_seed(const TrainOptions& opt, const SplitResult& split,
                           const std::vector<Utterance>& pool, const EncoderSpec& encoder_spec,
                           uint64_t seed, bool log_epochs, const BatchRatio* ratio_override = nullptr) {
    TrainConfig config = train_config_from(opt, seed);
    if (ratio_override) config.ratio = *ratio_override;
    if (!config.synth_trace_path.empty()) {
        config.synth_trace_path += ".seed" + std::to_string(seed);
    }

    TrainHooks hooks;
    if (log_epochs) {
        hooks.on_epoch = [seed](const EpochRecord& rec) {
            std::cerr << "seed " << seed << " epoch " << rec.epoch << ": loss " << rec.train_loss
                      << ", val " << rec.val_score << "\n";
        };
    }

    SeedRunResult out;
    out.seed = seed;
    const std::string tag = "seed" + std::to_string(seed);
    out.checkpoint_name = "ckpt_" + tag + ".oosm";
    out.history_name = "history_" + tag + ".jsonl";
    out.metrics_name = "metrics_" + tag + ".json";
    const fs::path dir(opt.out_dir);

    if (opt.method == "msp") {
        if (pool.empty()) throw UsageError("--method msp needs --open-pool for threshold calibration");
        MspModel msp = train_msp(config, split, encoder_spec, hooks);
        msp.threshold = calibrate_threshold(msp.classifier, *msp.encoder, split.validation,
                                            split.label_space, pool, config.seed);
        save_model(dir / out.checkpoint_name, msp.classifier, *msp.encoder, "msp", msp.threshold);
        write_text_file(dir / out.history_name, history_to_jsonl(msp.history));
        out.metrics = evaluate_to_file(msp.classifier, *msp.encoder, msp.threshold, split,
                                       dir / out.metrics_name);
    } else {
        TrainResult result = train(config, split, pool, encoder_spec, hooks);
        save_model(dir / out.checkpoint_name, result.model, *result.encoder, "ours");
        write_text_file(dir / out.history_name, history_to_jsonl(result.history));
        out.metrics = evaluate_to_file(result.model, *result.encoder, std::nullopt, split,
                                       dir / out.metrics_name);
    }
    return out;
}

// Runs fn(i) for i in [0, n) on up to thread_cap() workers.
void parallel_for(size_t n, size_t threads, const std::function<void(size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> workers;
    const size_t n_workers = std::min(threads, n);
    workers.reserve(n_workers);
    for (size_t t = 0; t < n_workers; ++t) workers.emplace_back(worker);
    for (auto& w : workers) w.join();
    if (first_error) std::rethrow_exception(first_error);
}

json metrics_to_json(const MetricsReport& m) {
    json j;
    j["accuracy"] = m.accuracy;
    j["macro_f1_all"] = m.macro_f1_all;
    j["macro_f1_known"] = m.macro_f1_known;
    j["f1_unknown"] = m.f1_unknown;
    return j;
}

json aggregate_metrics(const std::vector<SeedRunResult>& runs) {
    auto agg = [&](auto getter) {
        std::vector<double> values;
        for (const auto& r : runs) values.push_back(getter(r.metrics));
        json j;
        j["mean"] = mean_of(values);
        j["stddev"] = stddev_of(values);
        return j;
    };
    json j;
    j["accuracy"] = agg([](const MetricsReport& m) { return m.accuracy; });
    j["macro_f1_all"] = agg([](const MetricsReport& m) { return m.macro_f1_all; });
    j["macro_f1_known"] = agg([](const MetricsReport& m) { return m.macro_f1_known; });
    j["f1_unknown"] = agg([](const MetricsReport& m) { return m.f1_unknown; });
    return j;
}

json split_fingerprints(const std::string& split_dir, const std::string& pool_path) {
    json j;
    for (const char* name : {"train.jsonl", "validation.jsonl", "test.jsonl", "label_space.json"}) {
        j[name] = hex64(fnv1a64_file(fs::path(split_dir) / name));
    }
    if (!pool_path.empty()) j["open_pool"] = hex64(fnv1a64_file(pool_path));
    return j;
}

// ---------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------

int cmd_split(const std::string& data_path, const std::string& format_name, double known_ratio,
              uint64_t seed, double val_fraction, double test_fraction, const std::string& out_dir) {
    const DatasetFormat format = format_name.empty()
                                     ? sniff_format(data_path)
                                     : (format_name == "csv" ? DatasetFormat::csv : DatasetFormat::jsonl);
    const Dataset dataset = load_dataset(data_path, format);
    const SplitResult split = split_known_unknown(dataset, {known_ratio, seed}, val_fraction, test_fraction);
    save_split(split, out_dir);

    size_t oos_test = 0;
    for (const auto& ex : split.test) {
        if (ex.label == split.label_space.oos_index) ++oos_test;
    }
    std::cout << "classes: " << dataset.class_names.size() << " total, " << split.label_space.k()
              << " known\n"
              << "train: " << split.train.examples.size() << "  validation: "
              << split.validation.examples.size() << "  test: " << split.test.size() << " (" << oos_test
              << " out-of-scope)\n"
              << "wrote " << out_dir << "/{train,validation,test}.jsonl and label_space.json\n";
    return kExitOk;
}

int cmd_train(const CLI::App* cmd, TrainOptions& opt) {
    apply_config_file(cmd, opt);
    if (opt.method != "ours" && opt.method != "msp") {
        throw UsageError("--method must be ours or msp, got `" + opt.method + "`");
    }
    const SplitResult split = load_split(opt.split_dir);
    std::vector<Utterance> pool;
    if (!opt.pool_path.empty()) pool = load_open_pool(opt.pool_path);
    const BatchRatio ratio = parse_ratio(opt.ratio);
    if (opt.method == "ours" && ratio.open > 0 && pool.empty()) {
        throw UsageError("--open-pool is required when the open outlier quota is positive");
    }
    const EncoderSpec encoder_spec = encoder_spec_from(opt, split);
    const std::vector<uint64_t> seeds = parse_seed_list(opt.seeds);
    fs::create_directories(opt.out_dir);

    const size_t threads = thread_cap();
    const bool log_epochs = !opt.quiet && threads <= 1;
    std::vector<SeedRunResult> runs(seeds.size());
    parallel_for(seeds.size(), threads, [&](size_t i) {
        runs[i] = run_one_seed(opt, split, pool, encoder_spec, seeds[i], log_epochs);
    });

    json manifest;
    manifest["command"] = "train";
    manifest["config"] = config_snapshot(opt);
    manifest["data_fingerprints"] = split_fingerprints(opt.split_dir, opt.pool_path);
    manifest["seeds"] = seeds;
    json run_entries = json::array();
    for (const auto& r : runs) {
        json e;
        e["seed"] = r.seed;
        e["checkpoint"] = r.checkpoint_name;
        e["history"] = r.history_name;
        e["metrics"] = metrics_to_json(r.metrics);
        run_entries.push_back(e);
    }
    manifest["runs"] = run_entries;
    manifest["aggregate"] = aggregate_metrics(runs);
    write_text_file(fs::path(opt.out_dir) / "run_manifest.json", manifest.dump(2) + "\n");

    const json agg = manifest["aggregate"];
    std::cout << opt.method << " over " << seeds.size() << " seed(s): accuracy "
              << agg["accuracy"]["mean"].get<double>() << ", macro-F1 "
              << agg["macro_f1_all"]["mean"].get<double>() << ", unknown F1 "
              << agg["f1_unknown"]["mean"].get<double>() << "\n";
    return kExitOk;
}

void check_model_matches_split(const LoadedModel& loaded, const SplitResult& split,
                               const std::string& path) {
    const size_t k = static_cast<size_t>(split.label_space.k());
    const size_t expect = loaded.kind == "msp" ? k : k + 1;
    if (loaded.model.n_outputs() != expect) {
        throw DataError(path + ": checkpoint has " + std::to_string(loaded.model.n_outputs()) +
                        " outputs but the split needs " + std::to_string(expect) + " (K=" +
                        std::to_string(k) + ", kind " + loaded.kind + ")");
    }
}

json eval_one(const std::string& model_path, const SplitResult& split) {
    LoadedModel loaded = load_model(model_path);
    check_model_matches_split(loaded, split, model_path);
    PredictFn predictor;
    if (loaded.kind == "msp") {
        if (!loaded.threshold) throw DataError(model_path + ": msp checkpoint lacks a threshold");
        const double t = *loaded.threshold;
        const int oos = split.label_space.oos_index;
        const MlpClassifier& m = loaded.model;
        predictor = [&m, t, oos](const std::vector<FeatureVector>& f) { return msp_predict(m, t, f, oos); };
    } else {
        const MlpClassifier& m = loaded.model;
        predictor = [&m](const std::vector<FeatureVector>& f) { return predict(m, f); };
    }
    const EvalResult result = evaluate(predictor, *loaded.encoder, split.test, split.label_space.oos_index);
    return report_to_json(result.metrics, result.cm);
}

int cmd_eval(const std::string& model_path, const std::vector<std::string>& compare,
             const std::string& split_dir, const std::string& out_path, bool print_confusion) {
    const SplitResult split = load_split(split_dir);

    if (!compare.empty()) {
        if (compare.size() != 2) throw UsageError("--compare takes exactly two checkpoints");
        const json a = eval_one(compare[0], split);
        const json b = eval_one(compare[1], split);
        std::cout << "metric            " << compare[0] << "  vs  " << compare[1] << "\n";
        for (const char* key : {"accuracy", "macro_f1_all", "macro_f1_known", "f1_unknown"}) {
            const double va = a[key].get<double>();
            const double vb = b[key].get<double>();
            std::cout << key << ": " << format_fixed(va, 4) << "  " << format_fixed(vb, 4)
                      << "  delta " << format_fixed(va - vb, 4) << "\n";
        }
        return kExitOk;
    }

    if (model_path.empty()) throw UsageError("eval needs --model or --compare");
    const json report = eval_one(model_path, split);
    const std::string text = report.dump(2) + "\n";
    if (!out_path.empty()) write_text_file(out_path, text);
    std::cout << text;
    if (print_confusion) {
        ConfusionMatrix cm(report["per_class_f1"].size());
        const auto& rows = report["confusion"];
        for (size_t g = 0; g < rows.size(); ++g) {
            for (size_t p = 0; p < rows[g].size(); ++p) {
                for (uint64_t c = 0; c < rows[g][p].get<uint64_t>(); ++c) {
                    cm.add(static_cast<int>(g), static_cast<int>(p));
                }
            }
        }
        std::cout << format_confusion(cm);
    }
    return kExitOk;
}

int cmd_export_embeddings(const std::string& model_path, const std::string& data_path,
                          const std::string& out_path) {
    const LoadedModel loaded = load_model(model_path);
    const Dataset dataset = load_dataset(data_path, sniff_format(data_path));

    std::vector<Utterance> utterances;
    std::vector<EmbeddingSidecarRow> rows;
    for (const auto& ex : dataset.examples) {
        utterances.push_back(ex.utterance);
        rows.push_back({ex.utterance.id, ex.label, -1});
    }
    const auto features = loaded.encoder->encode_batch(utterances);
    write_embeddings(out_path, features, rows);
    std::cout << "wrote " << features.size() << " x " << (features.empty() ? 0 : features.front().size())
              << " embeddings to " << out_path << "\n";
    return kExitOk;
}

int cmd_sweep(const CLI::App* cmd, TrainOptions& opt, const std::string& counts_text) {
    apply_config_file(cmd, opt);
    const SplitResult split = load_split(opt.split_dir);
    std::vector<Utterance> pool;
    if (!opt.pool_path.empty()) pool = load_open_pool(opt.pool_path);
    const EncoderSpec encoder_spec = encoder_spec_from(opt, split);
    const std::vector<uint64_t> seeds = parse_seed_list(opt.seeds);
    const BatchRatio base_ratio = parse_ratio(opt.ratio);
    if (base_ratio.open > 0 && pool.empty()) {
        throw UsageError("--open-pool is required when the open outlier quota is positive");
    }

    std::vector<size_t> counts;
    for (const auto& part : split_on(counts_text, ',')) counts.push_back(parse_u64(part, "synth count"));
    if (counts.empty()) throw UsageError("empty --synth-counts");
    fs::create_directories(opt.out_dir);

    struct Cell {
        size_t count;
        uint64_t seed;
        MetricsReport metrics;
    };
    std::vector<Cell> cells(counts.size() * seeds.size());
    const size_t threads = thread_cap();
    parallel_for(cells.size(), threads, [&](size_t idx) {
        const size_t ci = idx / seeds.size();
        const size_t si = idx % seeds.size();
        BatchRatio ratio = base_ratio;
        ratio.synthetic = counts[ci];
        TrainConfig config = train_config_from(opt, seeds[si]);
        config.ratio = ratio;
        TrainResult result = train(config, split, pool, encoder_spec, {});
        const EvalResult ev = evaluate(
            [&result](const std::vector<FeatureVector>& f) { return predict(result.model, f); },
            *result.encoder, split.test, split.label_space.oos_index);
        cells[idx] = {counts[ci], seeds[si], ev.metrics};
    });

    std::string csv = "synth_count,seed,accuracy,macro_f1_all,macro_f1_known,f1_unknown\n";
    for (const auto& cell : cells) {
        csv += std::to_string(cell.count) + "," + std::to_string(cell.seed) + "," +
               format_fixed(cell.metrics.accuracy) + "," + format_fixed(cell.metrics.macro_f1_all) + "," +
               format_fixed(cell.metrics.macro_f1_known) + "," + format_fixed(cell.metrics.f1_unknown) + "\n";
    }
    write_text_file(fs::path(opt.out_dir) / "sweep.csv", csv);

    std::string summary =
        "synth_count,mean_accuracy,mean_macro_f1_all,mean_macro_f1_known,mean_f1_unknown,std_f1_unknown\n";
    for (size_t ci = 0; ci < counts.size(); ++ci) {
        std::vector<double> acc, all, known, unknown;
        for (size_t si = 0; si < seeds.size(); ++si) {
            const auto& m = cells[ci * seeds.size() + si].metrics;
            acc.push_back(m.accuracy);
            all.push_back(m.macro_f1_all);
            known.push_back(m.macro_f1_known);
            unknown.push_back(m.f1_unknown);
        }
        summary += std::to_string(counts[ci]) + "," + format_fixed(mean_of(acc)) + "," +
                   format_fixed(mean_of(all)) + "," + format_fixed(mean_of(known)) + "," +
                   format_fixed(mean_of(unknown)) + "," + format_fixed(stddev_of(unknown)) + "\n";
    }
    write_text_file(fs::path(opt.out_dir) / "sweep_summary.csv", summary);
    std::cout << "wrote " << (fs::path(opt.out_dir) / "sweep.csv").string() << " ("
              << cells.size() << " runs)\n";
    return kExitOk;
}

int cmd_make_blobs(size_t classes, size_t rogue, size_t per_class, double radius, double rogue_radius,
                   double sigma, size_t pool_size, double pool_inner, double pool_outer, double pool_arc,
                   uint64_t seed, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const Dataset dataset =
        rogue == 0 ? make_blob_dataset(classes, per_class, radius, sigma, seed)
                   : make_blobs(benchmark_blob_layout(classes, rogue, per_class, radius, rogue_radius,
                                                      sigma, pool_arc),
                                seed);
    std::string data_content;
    for (const auto& ex : dataset.examples) {
        json rec;
        rec["id"] = ex.utterance.id;
        rec["vec"] = *ex.utterance.numeric;
        rec["label"] = ex.label;
        data_content += rec.dump();
        data_content += '\n';
    }
    write_text_file(fs::path(out_dir) / "blobs.jsonl", data_content);

    const auto pool =
        make_arc_pool(pool_size, pool_inner, pool_outer, pool_arc, Rng::derive(seed, stream::kPoolSample));
    std::string pool_content;
    for (const auto& u : pool) {
        json rec;
        rec["id"] = u.id;
        rec["vec"] = *u.numeric;
        pool_content += rec.dump();
        pool_content += '\n';
    }
    write_text_file(fs::path(out_dir) / "pool.jsonl", pool_content);
    std::cout << "wrote " << dataset.examples.size() << " blob points and " << pool.size()
              << " pool points under " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"out-of-scope intent detection toolkit"};
    app.require_subcommand(1);

    // split
    std::string split_data, split_format, split_out;
    double known_ratio = 0.75, val_fraction = 0.2, test_fraction = 0.25;
    uint64_t split_seed = 0;
    auto* split_cmd = app.add_subcommand("split", "class-holdout split of a labeled dataset");
    split_cmd->add_option("--data", split_data, "dataset file (jsonl or csv)")->required();
    split_cmd->add_option("--format", split_format, "jsonl|csv (default: by extension)");
    split_cmd->add_option("--known-ratio", known_ratio, "fraction of classes kept known");
    split_cmd->add_option("--seed", split_seed, "split seed");
    split_cmd->add_option("--val-fraction", val_fraction, "validation share of each known class's remainder");
    split_cmd->add_option("--test-fraction", test_fraction, "test share of each known class");
    split_cmd->add_option("--out", split_out, "output directory")->required();

    // train
    TrainOptions train_opt;
    auto* train_cmd = app.add_subcommand("train", "train the (K+1)-way model or the msp baseline");
    train_cmd->add_option("--method", train_opt.method, "ours|msp");
    add_train_flags(train_cmd, train_opt);

    // eval
    std::string eval_model, eval_split, eval_out;
    std::vector<std::string> eval_compare;
    bool print_confusion = false;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split's test set");
    eval_cmd->add_option("--model", eval_model, "checkpoint path");
    eval_cmd->add_option("--compare", eval_compare, "two checkpoints for a side-by-side delta")
        ->expected(2);
    eval_cmd->add_option("--split", eval_split, "split artifact directory")->required();
    eval_cmd->add_option("--out", eval_out, "also write the report json here");
    eval_cmd->add_flag("--print-confusion", print_confusion, "pretty-print the confusion matrix");

    // export-embeddings
    std::string exp_model, exp_data, exp_out;
    auto* exp_cmd = app.add_subcommand("export-embeddings", "encode a dataset and write an OOSE file");
    exp_cmd->add_option("--model", exp_model, "checkpoint path (supplies the encoder)")->required();
    exp_cmd->add_option("--data", exp_data, "dataset file to encode")->required();
    exp_cmd->add_option("--out", exp_out, "output OOSE path")->required();

    // sweep
    TrainOptions sweep_opt;
    std::string synth_counts = "0,10,50,200,400";
    auto* sweep_cmd = app.add_subcommand("sweep", "train across synthetic outlier counts, emit csv");
    sweep_cmd->add_option("--synth-counts", synth_counts, "comma list of synthetic quotas");
    add_train_flags(sweep_cmd, sweep_opt);

    // make-blobs
    size_t mb_classes = 6, mb_rogue = 0, mb_per_class = 200, mb_pool = 1500;
    double mb_radius = 5.0, mb_rogue_radius = 11.5, mb_sigma = 0.5;
    double mb_inner = 10.0, mb_outer = 13.0, mb_arc = 360.0;
    uint64_t mb_seed = 0;
    std::string mb_out;
    auto* mb_cmd = app.add_subcommand("make-blobs", "generate a 2-D gaussian blob benchmark dataset");
    mb_cmd->add_option("--classes", mb_classes, "blob count");
    mb_cmd->add_option("--rogue", mb_rogue, "blobs placed out in the pool sector instead of the circle");
    mb_cmd->add_option("--per-class", mb_per_class, "points per blob");
    mb_cmd->add_option("--radius", mb_radius, "blob circle radius");
    mb_cmd->add_option("--rogue-radius", mb_rogue_radius, "radius of the rogue blobs");
    mb_cmd->add_option("--sigma", mb_sigma, "blob standard deviation");
    mb_cmd->add_option("--pool-size", mb_pool, "open pool point count");
    mb_cmd->add_option("--pool-inner", mb_inner, "pool annulus inner radius");
    mb_cmd->add_option("--pool-outer", mb_outer, "pool annulus outer radius");
    mb_cmd->add_option("--pool-arc", mb_arc, "pool sector size in degrees (360 = full ring)");
    mb_cmd->add_option("--seed", mb_seed, "generator seed");
    mb_cmd->add_option("--out", mb_out, "output directory")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            app.exit(e);
            return kExitOk;
        }
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (split_cmd->parsed()) {
            return cmd_split(split_data, split_format, known_ratio, split_seed, val_fraction, test_fraction,
                             split_out);
        }
        if (train_cmd->parsed()) return cmd_train(train_cmd, train_opt);
        if (eval_cmd->parsed()) return cmd_eval(eval_model, eval_compare, eval_split, eval_out, print_confusion);
        if (exp_cmd->parsed()) return cmd_export_embeddings(exp_model, exp_data, exp_out);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_cmd, sweep_opt, synth_counts);
        if (mb_cmd->parsed()) {
            return cmd_make_blobs(mb_classes, mb_rogue, mb_per_class, mb_radius, mb_rogue_radius, mb_sigma,
                                  mb_pool, mb_inner, mb_outer, mb_arc, mb_seed, mb_out);
        }
        throw UsageError("no subcommand given");
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitDataMismatch;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace oos::cli
