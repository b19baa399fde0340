#include "oos/evaluation.hpp"

#include <sstream>

#include "oos/errors.hpp"
#include "oos/util.hpp"

namespace oos {

void ConfusionMatrix::add(int gold, int pred) {
    if (gold < 0 || static_cast<size_t>(gold) >= n_ || pred < 0 || static_cast<size_t>(pred) >= n_) {
        throw DataError("confusion: label out of range (gold " + std::to_string(gold) + ", pred " +
                        std::to_string(pred) + ", classes " + std::to_string(n_) + ")");
    }
    ++counts_[static_cast<size_t>(gold) * n_ + static_cast<size_t>(pred)];
}

uint64_t ConfusionMatrix::total() const {
    uint64_t t = 0;
    for (uint64_t c : counts_) t += c;
    return t;
}

uint64_t ConfusionMatrix::trace() const {
    uint64_t t = 0;
    for (size_t i = 0; i < n_; ++i) t += at(i, i);
    return t;
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& golds, int oos_index) {
    if (preds.size() != golds.size()) {
        throw DataError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(golds.size()) + " golds");
    }
    ConfusionMatrix cm(static_cast<size_t>(oos_index) + 1);
    for (size_t i = 0; i < preds.size(); ++i) cm.add(golds[i], preds[i]);
    return cm;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
    const uint64_t total = cm.total();
    if (total == 0) throw DataError("compute_metrics: empty confusion matrix");
    const size_t n = cm.n_classes();

    MetricsReport report;
    report.per_class_f1.resize(n, 0.0);
    for (size_t c = 0; c < n; ++c) {
        uint64_t tp = cm.at(c, c), fp = 0, fn = 0;
        for (size_t o = 0; o < n; ++o) {
            if (o == c) continue;
            fp += cm.at(o, c);
            fn += cm.at(c, o);
        }
        const double precision = (tp + fp == 0) ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double recall = (tp + fn == 0) ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
        report.per_class_f1[c] =
            (precision + recall == 0.0) ? 0.0 : 2.0 * precision * recall / (precision + recall);
    }

    report.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
    report.macro_f1_all = mean_of(report.per_class_f1);
    std::vector<double> known(report.per_class_f1.begin(), report.per_class_f1.end() - 1);
    report.macro_f1_known = mean_of(known);
    report.f1_unknown = report.per_class_f1.back();
    return report;
}

EvalResult evaluate(const PredictFn& predictor, const Encoder& encoder, const std::vector<TestExample>& test,
                    int oos_index) {
    if (test.empty()) throw DataError("evaluate: empty test set");
    std::vector<Utterance> utterances;
    std::vector<int> golds;
    utterances.reserve(test.size());
    golds.reserve(test.size());
    for (const auto& ex : test) {
        utterances.push_back(ex.utterance);
        golds.push_back(ex.label);
    }
    const auto features = encoder.encode_batch(utterances);
    const auto preds = predictor(features);
    ConfusionMatrix cm = confusion(preds, golds, oos_index);
    return {compute_metrics(cm), std::move(cm)};
}

nlohmann::json report_to_json(const MetricsReport& metrics, const ConfusionMatrix& cm) {
    nlohmann::json j;
    j["accuracy"] = metrics.accuracy;
    j["macro_f1_all"] = metrics.macro_f1_all;
    j["macro_f1_known"] = metrics.macro_f1_known;
    j["f1_unknown"] = metrics.f1_unknown;
    j["per_class_f1"] = metrics.per_class_f1;
    nlohmann::json rows = nlohmann::json::array();
    for (size_t g = 0; g < cm.n_classes(); ++g) {
        nlohmann::json row = nlohmann::json::array();
        for (size_t p = 0; p < cm.n_classes(); ++p) row.push_back(cm.at(g, p));
        rows.push_back(row);
    }
    j["confusion"] = rows;
    return j;
}

std::string format_confusion(const ConfusionMatrix& cm) {
    std::ostringstream out;
    out << "gold\\pred";
    for (size_t p = 0; p < cm.n_classes(); ++p) out << "\t" << p;
    out << "\n";
    for (size_t g = 0; g < cm.n_classes(); ++g) {
        out << g;
        for (size_t p = 0; p < cm.n_classes(); ++p) out << "\t" << cm.at(g, p);
        out << "\n";
    }
    return out.str();
}

}  // namespace oos
