#pragma once

#include <memory>
#include <vector>

#include "oos/trainer.hpp"

namespace oos {

/// Maximum-softmax-probability baseline: a K-way head (tau forced to 1,
/// no out-of-scope logit) that rejects inputs whose top softmax
/// probability falls below the calibrated threshold.
struct MspModel {
    MlpClassifier classifier;
    std::unique_ptr<Encoder> encoder;
    double threshold = 0.5;
    TrainHistory history;
};

/// K-way cross-entropy training on inliers only; shares the trainer's
/// optimizer and early-stopping machinery (outlier quotas forced to 0).
/// The threshold is left at its default; calibrate separately.
MspModel train_msp(const TrainConfig& config, const SplitResult& split, const EncoderSpec& encoder_spec,
                   const TrainHooks& hooks = {});

/// Grid search over {0.05, 0.10, ..., 0.95} maximizing macro-F1 on
/// validation inliers plus a seeded open-pool sample treated as
/// out-of-scope; ties go to the lower threshold. Calibration never sees
/// the test set's held-out classes.
double calibrate_threshold(const MlpClassifier& model, const Encoder& encoder, const Dataset& validation,
                           const LabelSpace& label_space, const std::vector<Utterance>& open_pool,
                           uint64_t seed);

/// Max softmax probability below the threshold -> oos_index, otherwise
/// the argmax over the K classes.
std::vector<int> msp_predict(const MlpClassifier& model, double threshold,
                             const std::vector<FeatureVector>& features, int oos_index);

}  // namespace oos
