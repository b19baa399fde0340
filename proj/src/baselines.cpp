#include "oos/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "oos/errors.hpp"
#include "oos/evaluation.hpp"
#include "oos/rng.hpp"

namespace oos {

MspModel train_msp(const TrainConfig& config, const SplitResult& split, const EncoderSpec& encoder_spec,
                   const TrainHooks& hooks) {
    TrainConfig msp_config = config;
    msp_config.ratio.open = 0;
    msp_config.ratio.synthetic = 0;
    msp_config.tau = 1.0;  // MSP scores raw softmax probabilities

    TrainResult result = detail::train_impl(msp_config, split, /*open_pool=*/{}, encoder_spec,
                                            static_cast<size_t>(split.label_space.k()), hooks);
    return {std::move(result.model), std::move(result.encoder), 0.5, std::move(result.history)};
}

namespace {

// Softmax rows of logits / tau (tau is 1 for MSP models).
std::vector<double> max_softmax_probs(const MlpClassifier& model, const std::vector<FeatureVector>& features) {
    const MatD logits = forward(model, features);
    std::vector<double> out(logits.rows());
    for (size_t i = 0; i < logits.rows(); ++i) {
        double max_scaled = logits(i, 0) / model.tau();
        for (size_t j = 1; j < logits.cols(); ++j) max_scaled = std::max(max_scaled, logits(i, j) / model.tau());
        double sum = 0.0;
        for (size_t j = 0; j < logits.cols(); ++j) sum += std::exp(logits(i, j) / model.tau() - max_scaled);
        out[i] = 1.0 / sum;  // exp(max - max) / sum
    }
    return out;
}

}  // namespace

std::vector<int> msp_predict(const MlpClassifier& model, double threshold,
                             const std::vector<FeatureVector>& features, int oos_index) {
    const MatD logits = forward(model, features);
    const auto max_probs = max_softmax_probs(model, features);
    std::vector<int> out(features.size());
    for (size_t i = 0; i < features.size(); ++i) {
        out[i] = max_probs[i] < threshold ? oos_index : argmax_row(logits, i);
    }
    return out;
}

double calibrate_threshold(const MlpClassifier& model, const Encoder& encoder, const Dataset& validation,
                           const LabelSpace& label_space, const std::vector<Utterance>& open_pool,
                           uint64_t seed) {
    if (validation.examples.empty()) throw DataError("calibrate_threshold: empty validation set");
    if (open_pool.empty()) throw DataError("calibrate_threshold: empty open pool");

    std::vector<FeatureVector> features;
    std::vector<int> golds;
    for (const auto& ex : validation.examples) {
        const int label = label_space.index_of(ex.label);
        if (label < 0) throw DataError("calibrate_threshold: unknown class `" + ex.label + "`");
        features.push_back(encoder.encode(ex.utterance));
        golds.push_back(label);
    }

    // Proxy outliers: a seeded with-replacement pool sample, one per
    // validation inlier.
    Rng rng(Rng::derive(seed, stream::kCalibration));
    const size_t n_proxy = std::min(open_pool.size(), validation.examples.size());
    for (size_t i = 0; i < n_proxy; ++i) {
        const auto& u = open_pool[rng.below(open_pool.size())];
        features.push_back(encoder.encode(u));
        golds.push_back(label_space.oos_index);
    }

    double best_threshold = 0.05;
    double best_f1 = -1.0;
    for (int step = 1; step <= 19; ++step) {
        const double threshold = 0.05 * step;
        const auto preds = msp_predict(model, threshold, features, label_space.oos_index);
        const MetricsReport report = compute_metrics(confusion(preds, golds, label_space.oos_index));
        if (report.macro_f1_all > best_f1) {  // strict: ties keep the lower threshold
            best_f1 = report.macro_f1_all;
            best_threshold = threshold;
        }
    }
    return best_threshold;
}

}  // namespace oos
