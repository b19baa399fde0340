#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "oos/encoder.hpp"
#include "oos/matrix.hpp"
#include "oos/outliers.hpp"

namespace oos {

/// Fully-connected classifier head: input -> hidden... -> n_outputs with
/// ReLU between hidden layers and a temperature-scaled softmax
/// cross-entropy loss. Parameters are stored as f32 (the checkpoint
/// format); every computation runs in double.
class MlpClassifier {
public:
    MlpClassifier(size_t input_dim, std::vector<size_t> hidden, size_t n_outputs, double tau, uint64_t seed);

    static MlpClassifier from_parts(size_t input_dim, std::vector<size_t> hidden, size_t n_outputs,
                                    double tau, std::vector<MatF> weights, std::vector<MatF> biases);

    size_t input_dim() const { return input_dim_; }
    size_t n_outputs() const { return n_outputs_; }
    const std::vector<size_t>& hidden() const { return hidden_; }
    double tau() const { return tau_; }

    size_t n_layers() const { return weights_.size(); }
    MatF& weight(size_t layer) { return weights_[layer]; }
    const MatF& weight(size_t layer) const { return weights_[layer]; }
    MatF& bias(size_t layer) { return biases_[layer]; }
    const MatF& bias(size_t layer) const { return biases_[layer]; }

    bool operator==(const MlpClassifier& other) const;

private:
    size_t input_dim_;
    std::vector<size_t> hidden_;
    size_t n_outputs_;
    double tau_;
    std::vector<MatF> weights_;  // [fan_in x fan_out] per layer
    std::vector<MatF> biases_;   // [1 x fan_out] per layer
};

struct LossReport {
    double loss = 0.0;
    size_t correct = 0;
    size_t batch_size = 0;
};

struct ModelGrads {
    std::vector<MatD> weights;
    std::vector<MatD> biases;
};

struct LossAndGrads {
    LossReport report;
    ModelGrads grads;
    std::vector<FeatureVector> input_grads;  // d(loss)/d(features), one per example
};

/// Logits, batch x n_outputs. Pre-temperature; the loss divides by tau.
MatD forward(const MlpClassifier& model, const std::vector<FeatureVector>& features);

/// Mean temperature-scaled softmax cross-entropy with analytic gradients
/// for every parameter and for the inputs. Log-sum-exp uses
/// max-subtraction.
LossAndGrads loss_and_grad(const MlpClassifier& model, const TrainBatch& batch);

/// Argmax over logits; ties break toward the lowest index.
std::vector<int> predict(const MlpClassifier& model, const std::vector<FeatureVector>& features);

int argmax_row(const MatD& logits, size_t row);

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment state for one parameter group. Moments live in
/// double; the updated parameters round back to their f32 storage.
class AdamState {
public:
    void step(const std::vector<MatF*>& params, const std::vector<const MatD*>& grads,
              const AdamConfig& config);
    long steps() const { return t_; }

private:
    std::vector<MatD> m_, v_;
    long t_ = 0;
};

void adam_step(MlpClassifier& model, AdamState& state, const ModelGrads& grads, const AdamConfig& config);

// Checkpoint: magic OOSM, u32 version=1, u32 header length, json header,
// then the parameter blobs as little-endian f32 in the header's declared
// order. Hashed encoder tables ride along; an MSP checkpoint stores its
// threshold in the header.
struct LoadedModel {
    std::string kind;  // "ours" or "msp"
    MlpClassifier model;
    std::unique_ptr<Encoder> encoder;
    std::optional<double> threshold;
};

void save_model(const std::filesystem::path& path, const MlpClassifier& model, const Encoder& encoder,
                const std::string& kind = "ours", std::optional<double> threshold = std::nullopt);
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace oos
