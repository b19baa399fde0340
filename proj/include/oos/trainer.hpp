#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "oos/classifier.hpp"
#include "oos/data.hpp"
#include "oos/encoder.hpp"
#include "oos/outliers.hpp"

namespace oos {

struct TrainConfig {
    BatchRatio ratio{100, 100, 400};  // inlier minibatch size is ratio.inliers
    double head_lr = 1e-4;
    double encoder_lr = 1e-3;  // hashed table; stand-in for the slower encoder rate
    size_t max_epochs = 50;
    size_t patience = 5;            // epochs without validation improvement
    double val_improve_tol = 1e-4;  // absolute score gain that counts as improvement
    uint64_t seed = 0;
    double tau = 0.1;
    std::vector<size_t> hidden{1024, 1024};
    bool synth_from_whole_set = false;  // parents from the whole train set instead of the batch
    bool detach_synthetic = true;       // no gradient through the mix into parent encodings
    std::string synth_trace_path;       // jsonl audit log of mix parents and theta, empty = off
};

void validate_config(const TrainConfig& config);

struct EpochRecord {
    size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_score = 0.0;
    size_t synthetic_used = 0;
    size_t open_used = 0;
    double wall_ms = 0.0;  // kept in memory only; never serialized
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    size_t best_epoch = 0;  // 1-based epoch whose checkpoint is returned
};

/// jsonl, one epoch per line, without wall_ms (artifacts must be
/// byte-identical across reruns).
std::string history_to_jsonl(const TrainHistory& history);

struct TrainHooks {
    // Replaces validation_score when set (used to test early stopping).
    std::function<double(const MlpClassifier&, const Encoder&, size_t epoch)> validation_override;
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    MlpClassifier model;
    std::unique_ptr<Encoder> encoder;
    TrainHistory history;
};

/// Trains the (K+1)-way classifier: per epoch, seeded shuffle of train
/// inliers, fresh pseudo outliers per minibatch, Adam on the head (and on
/// the encoder table when trainable), early stop on a validation plateau.
/// Returns the best-validation checkpoint, not necessarily the last.
TrainResult train(const TrainConfig& config, const SplitResult& split, const std::vector<Utterance>& open_pool,
                  const EncoderSpec& encoder_spec, const TrainHooks& hooks = {});

/// Negated cross-entropy on validation inliers augmented with
/// synth_count pseudo outliers synthesized from the validation features
/// under a fixed seed; higher is better.
double validation_score(const MlpClassifier& model, const Encoder& encoder, const Dataset& validation,
                        const LabelSpace& label_space, size_t synth_count, uint64_t seed);

namespace detail {
/// Shared loop for the main method and the K-way baseline head.
TrainResult train_impl(const TrainConfig& config, const SplitResult& split,
                       const std::vector<Utterance>& open_pool, const EncoderSpec& encoder_spec,
                       size_t n_outputs, const TrainHooks& hooks);
}  // namespace detail

}  // namespace oos
