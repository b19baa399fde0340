#include "oos/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>

#include <json.hpp>

#include "oos/errors.hpp"
#include "oos/rng.hpp"

using json = nlohmann::json;

namespace oos {

void validate_config(const TrainConfig& config) {
    if (config.ratio.inliers < 1) throw UsageError("inlier batch size must be >= 1");
    if (config.patience < 1) throw UsageError("patience must be >= 1");
    if (config.max_epochs < 1) throw UsageError("max_epochs must be >= 1");
    if (!(config.head_lr > 0.0) || !(config.encoder_lr > 0.0)) throw UsageError("learning rates must be positive");
    if (!(config.tau > 0.0)) throw UsageError("temperature must be positive");
    if (config.ratio.synthetic > 0 && config.ratio.inliers < 2) {
        throw UsageError("synthetic outliers need an inlier batch of >= 2 (two distinct classes)");
    }
    if (!config.detach_synthetic && config.synth_from_whole_set) {
        throw UsageError("gradient through synthetic mixes requires batch-local parents");
    }
}

std::string history_to_jsonl(const TrainHistory& history) {
    std::string out;
    for (const auto& rec : history.epochs) {
        json j;
        j["epoch"] = rec.epoch;
        j["train_loss"] = rec.train_loss;
        j["val_score"] = rec.val_score;
        j["synthetic_used"] = rec.synthetic_used;
        j["open_used"] = rec.open_used;
        j["best"] = (rec.epoch == history.best_epoch);
        out += j.dump();
        out += '\n';
    }
    return out;
}

double validation_score(const MlpClassifier& model, const Encoder& encoder, const Dataset& validation,
                        const LabelSpace& label_space, size_t synth_count, uint64_t seed) {
    if (validation.examples.empty()) throw DataError("validation_score: empty validation set");

    TrainBatch batch;
    std::map<int, std::vector<FeatureVector>> by_class;
    for (const auto& ex : validation.examples) {
        const int label = label_space.index_of(ex.label);
        if (label < 0) throw DataError("validation example with unknown class `" + ex.label + "`");
        FeatureVector f = encoder.encode(ex.utterance);
        by_class[label].push_back(f);
        batch.examples.push_back({std::move(f), label});
    }
    if (synth_count > 0) {
        if (by_class.size() < 2) {
            throw DataError("validation_score: single-class validation cannot synthesize outliers");
        }
        Rng rng(seed);
        for (auto& f : synthesize_outliers(by_class, synth_count, rng)) {
            batch.examples.push_back({std::move(f), label_space.oos_index});
        }
    }
    batch.counts = {validation.examples.size(), 0, synth_count};
    return -loss_and_grad(model, batch).report.loss;
}

namespace detail {

namespace {

struct IndexedInlier {
    size_t example = 0;  // position in split.train.examples
    int label = 0;
};

// Scatters synthetic-mix gradients back onto the parent inliers'
// feature gradients (only used when detach_synthetic is off).
void backflow_synthetic_grads(const std::vector<SynthRecord>& trace,
                              const std::vector<size_t>& batch_positions_by_trace_order,
                              const std::map<int, std::vector<size_t>>& class_to_batch_positions,
                              std::vector<FeatureVector>& input_grads) {
    for (size_t t = 0; t < trace.size(); ++t) {
        const SynthRecord& rec = trace[t];
        const size_t synth_pos = batch_positions_by_trace_order[t];
        const auto& alpha_list = class_to_batch_positions.at(rec.class_alpha);
        const auto& beta_list = class_to_batch_positions.at(rec.class_beta);
        const size_t alpha_pos = alpha_list[rec.index_alpha];
        const size_t beta_pos = beta_list[rec.index_beta];
        const auto& g = input_grads[synth_pos];
        for (size_t j = 0; j < g.size(); ++j) {
            input_grads[alpha_pos][j] += (1.0 - rec.theta) * g[j];
            input_grads[beta_pos][j] += rec.theta * g[j];
        }
    }
}

}  // namespace

TrainResult train_impl(const TrainConfig& config, const SplitResult& split,
                       const std::vector<Utterance>& open_pool, const EncoderSpec& encoder_spec,
                       size_t n_outputs, const TrainHooks& hooks) {
    validate_config(config);
    if (split.train.examples.empty()) throw DataError("train: empty training set");
    if (split.label_space.k() < 2) throw DataError("train: need at least 2 known classes");
    if (config.ratio.open > 0 && open_pool.empty()) {
        throw DataError("train: open outlier quota is positive but the pool is empty");
    }
    if (const auto warn = ratio_guardrail_warning(config.ratio)) {
        std::cerr << "warning: " << *warn << "\n";
    }

    const LabelSpace& ls = split.label_space;
    const int oos_label = ls.oos_index;

    std::vector<IndexedInlier> inliers;
    inliers.reserve(split.train.examples.size());
    std::set<int> train_classes;
    for (size_t i = 0; i < split.train.examples.size(); ++i) {
        const auto& ex = split.train.examples[i];
        const int label = ls.index_of(ex.label);
        if (label < 0) throw DataError("train example with unknown class `" + ex.label + "`");
        inliers.push_back({i, label});
        train_classes.insert(label);
    }
    if (train_classes.size() < 2) throw DataError("train: need at least 2 classes in the training set");

    auto encoder = make_encoder(encoder_spec, config.seed);
    const bool trainable = encoder->trainable();
    MlpClassifier model(encoder->dim(), config.hidden, n_outputs, config.tau, config.seed);

    AdamState head_adam;
    AdamState table_adam;
    const AdamConfig head_cfg{config.head_lr, 0.9, 0.999, 1e-8};
    const AdamConfig table_cfg{config.encoder_lr, 0.9, 0.999, 1e-8};

    // Frozen encoders: encode everything once. Trainable: inliers are
    // encoded per batch; the pool (and whole-set parents) refresh per
    // epoch so features track table updates.
    std::vector<FeatureVector> frozen_train_features;
    if (!trainable) {
        std::vector<Utterance> utts;
        utts.reserve(split.train.examples.size());
        for (const auto& ex : split.train.examples) utts.push_back(ex.utterance);
        frozen_train_features = encoder->encode_batch(utts);
    }
    std::vector<Utterance> pool_utterances = open_pool;
    std::vector<FeatureVector> pool_features;
    if (config.ratio.open > 0 && !trainable) pool_features = encoder->encode_batch(pool_utterances);

    const uint64_t shuffle_seed = Rng::derive(config.seed, stream::kEpochShuffle);
    const uint64_t outlier_seed = Rng::derive(config.seed, stream::kBatchOutliers);
    const uint64_t val_seed = Rng::derive(config.seed, stream::kValidation);
    // One pseudo outlier per validation inlier whenever the method trains
    // with synthetic outliers. A fixed 1:1 quota keeps the stopping
    // criterion comparable across outlier-count configurations.
    const size_t val_synth_count = config.ratio.synthetic > 0 ? split.validation.examples.size() : 0;

    TrainResult best{model, encoder->clone(), {}};
    double best_score = -std::numeric_limits<double>::infinity();
    size_t epochs_since_improvement = 0;
    TrainHistory history;

    std::ofstream trace_out;
    if (!config.synth_trace_path.empty()) {
        trace_out.open(config.synth_trace_path, std::ios::trunc);
        if (!trace_out) throw DataError("cannot open synth trace: " + config.synth_trace_path);
    }
    const bool want_trace = trace_out.is_open() || !config.detach_synthetic;

    for (size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();

        if (config.ratio.open > 0 && trainable) pool_features = encoder->encode_batch(pool_utterances);
        std::map<int, std::vector<FeatureVector>> whole_set_by_class;
        if (config.synth_from_whole_set && config.ratio.synthetic > 0) {
            std::vector<FeatureVector> feats = frozen_train_features;
            if (trainable) {
                std::vector<Utterance> utts;
                utts.reserve(split.train.examples.size());
                for (const auto& ex : split.train.examples) utts.push_back(ex.utterance);
                feats = encoder->encode_batch(utts);
            }
            for (size_t i = 0; i < inliers.size(); ++i) {
                whole_set_by_class[inliers[i].label].push_back(feats[i]);
            }
        }

        std::vector<size_t> order(inliers.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(Rng::derive(shuffle_seed, epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        size_t n_batches = 0;
        size_t synthetic_used = 0;
        size_t open_used = 0;

        for (size_t start = 0; start < order.size(); start += config.ratio.inliers) {
            const size_t end = std::min(order.size(), start + config.ratio.inliers);
            const size_t batch_index = start / config.ratio.inliers;

            std::vector<Utterance> batch_utts;
            std::vector<EmbeddedExample> batch_inliers;
            std::set<int> batch_classes;
            for (size_t p = start; p < end; ++p) {
                const IndexedInlier& item = inliers[order[p]];
                const auto& ex = split.train.examples[item.example];
                batch_utts.push_back(ex.utterance);
                batch_classes.insert(item.label);
                FeatureVector f = trainable ? encoder->encode(ex.utterance)
                                            : frozen_train_features[item.example];
                batch_inliers.push_back({std::move(f), item.label});
            }
            // A partial tail that cannot seed the mix sampler is dropped.
            if (config.ratio.synthetic > 0 && batch_classes.size() < 2) continue;

            Rng batch_rng(Rng::derive(Rng::derive(outlier_seed, epoch), batch_index));
            TrainBatch batch;
            std::vector<SynthRecord> trace;
            if (config.synth_from_whole_set && config.ratio.synthetic > 0) {
                batch = compose_batch(batch_inliers, pool_features, {end - start, config.ratio.open, 0},
                                      oos_label, batch_rng);
                for (auto& f : synthesize_outliers(whole_set_by_class, config.ratio.synthetic, batch_rng,
                                                   want_trace ? &trace : nullptr)) {
                    batch.examples.push_back({std::move(f), oos_label});
                }
                batch.counts.synthetic = config.ratio.synthetic;
            } else {
                batch = compose_batch(batch_inliers, pool_features,
                                      {end - start, config.ratio.open, config.ratio.synthetic}, oos_label,
                                      batch_rng, want_trace ? &trace : nullptr);
            }
            if (trace_out.is_open() && !trace.empty()) {
                trace_out << synth_trace_jsonl(trace, epoch, batch_index);
            }

            LossAndGrads lag;
            try {
                lag = loss_and_grad(model, batch);
            } catch (const NumericalError& e) {
                throw NumericalError("divergence at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batch_index) + ": " + e.what());
            }
            if (!std::isfinite(lag.report.loss)) {
                throw NumericalError("divergence: non-finite loss at epoch " + std::to_string(epoch) +
                                     ", batch " + std::to_string(batch_index));
            }
            loss_sum += lag.report.loss;
            ++n_batches;
            synthetic_used += batch.counts.synthetic;
            open_used += batch.counts.open;

            adam_step(model, head_adam, lag.grads, head_cfg);

            if (trainable) {
                if (!config.detach_synthetic && !trace.empty()) {
                    std::map<int, std::vector<size_t>> class_to_positions;
                    for (size_t p = 0; p < batch_inliers.size(); ++p) {
                        class_to_positions[batch_inliers[p].label].push_back(p);
                    }
                    const size_t synth_base = batch_inliers.size() + batch.counts.open;
                    std::vector<size_t> synth_positions(trace.size());
                    for (size_t t = 0; t < trace.size(); ++t) synth_positions[t] = synth_base + t;
                    backflow_synthetic_grads(trace, synth_positions, class_to_positions, lag.input_grads);
                }
                auto* hashed = dynamic_cast<HashedMeanEncoder*>(encoder.get());
                if (hashed) {
                    hashed->zero_grad();
                    std::vector<FeatureVector> inlier_grads(lag.input_grads.begin(),
                                                            lag.input_grads.begin() +
                                                                static_cast<long>(batch_inliers.size()));
                    hashed->backward(batch_utts, inlier_grads);
                    std::vector<MatF*> params{&hashed->table()};
                    std::vector<const MatD*> grads{&hashed->grad()};
                    table_adam.step(params, grads, table_cfg);
                }
            }
        }
        if (n_batches == 0) throw DataError("train: no usable batches (all dropped by the class guard)");

        double score;
        if (hooks.validation_override) {
            score = hooks.validation_override(model, *encoder, epoch);
        } else {
            score = validation_score(model, *encoder, split.validation, ls, val_synth_count, val_seed);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(n_batches);
        rec.val_score = score;
        rec.synthetic_used = synthetic_used;
        rec.open_used = open_used;
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - epoch_start)
                          .count();
        history.epochs.push_back(rec);
        if (hooks.on_epoch) hooks.on_epoch(rec);

        if (score > best_score + config.val_improve_tol) {
            best_score = score;
            best.model = model;
            best.encoder = encoder->clone();
            history.best_epoch = epoch;
            epochs_since_improvement = 0;
        } else {
            ++epochs_since_improvement;
            if (epochs_since_improvement >= config.patience) break;
        }
    }

    if (history.best_epoch == 0) {
        // No epoch improved over -inf + tol can only happen with a NaN
        // score, which loss_and_grad would have caught; keep the last.
        best.model = model;
        best.encoder = encoder->clone();
        history.best_epoch = history.epochs.size();
    }
    best.history = std::move(history);
    return best;
}

}  // namespace detail

TrainResult train(const TrainConfig& config, const SplitResult& split, const std::vector<Utterance>& open_pool,
                  const EncoderSpec& encoder_spec, const TrainHooks& hooks) {
    return detail::train_impl(config, split, open_pool, encoder_spec,
                              static_cast<size_t>(split.label_space.k()) + 1, hooks);
}

}  // namespace oos
