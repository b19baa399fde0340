#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "oos/data.hpp"
#include "oos/encoder.hpp"

#include <json.hpp>

namespace oos {

/// Square count matrix over the K+1 label indices; rows are gold labels,
/// columns are predictions.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(size_t n_classes) : n_(n_classes), counts_(n_classes * n_classes, 0) {}

    void add(int gold, int pred);
    uint64_t at(size_t gold, size_t pred) const { return counts_[gold * n_ + pred]; }
    size_t n_classes() const { return n_; }
    uint64_t total() const;
    uint64_t trace() const;

private:
    size_t n_;
    std::vector<uint64_t> counts_;
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& golds, int oos_index);

struct MetricsReport {
    double accuracy = 0.0;
    double macro_f1_all = 0.0;    // mean of per_class_f1 over all K+1 classes
    double macro_f1_known = 0.0;  // mean over the K known classes
    double f1_unknown = 0.0;      // per_class_f1[K]
    std::vector<double> per_class_f1;
};

/// Per-class F1 with the 0/0 -> 0 convention for precision, recall and
/// F1 (a class never predicted and never gold scores 0 and drags the
/// macro mean).
MetricsReport compute_metrics(const ConfusionMatrix& cm);

using PredictFn = std::function<std::vector<int>(const std::vector<FeatureVector>&)>;

struct EvalResult {
    MetricsReport metrics;
    ConfusionMatrix cm;
};

EvalResult evaluate(const PredictFn& predictor, const Encoder& encoder, const std::vector<TestExample>& test,
                    int oos_index);

nlohmann::json report_to_json(const MetricsReport& metrics, const ConfusionMatrix& cm);
std::string format_confusion(const ConfusionMatrix& cm);

}  // namespace oos
