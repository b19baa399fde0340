#include "oos/outliers.hpp"

#include <algorithm>

#include <json.hpp>

#include "oos/errors.hpp"

namespace oos {

FeatureVector convex_combine(const FeatureVector& h_alpha, const FeatureVector& h_beta, double theta) {
    if (h_alpha.size() != h_beta.size()) {
        throw NumericalError("convex_combine: parent dimensions differ");
    }
    FeatureVector out(h_alpha.size());
    for (size_t j = 0; j < out.size(); ++j) {
        const double a = h_alpha[j];
        const double b = h_beta[j];
        double v = theta * b + (1.0 - theta) * a;
        // roundoff can push v just past an endpoint; the result must stay
        // on the closed segment
        v = std::clamp(v, std::min(a, b), std::max(a, b));
        out[j] = v;
    }
    return out;
}

std::vector<FeatureVector> synthesize_outliers(const std::map<int, std::vector<FeatureVector>>& by_class,
                                               size_t count, Rng& rng, std::vector<SynthRecord>* trace) {
    std::vector<int> classes;
    for (const auto& [label, features] : by_class) {
        if (!features.empty()) classes.push_back(label);
    }
    if (classes.size() < 2) {
        throw DataError("synthesize_outliers: need at least 2 nonempty classes, got " +
                        std::to_string(classes.size()));
    }

    std::vector<FeatureVector> out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        const size_t ca = rng.below(classes.size());
        const size_t cb = (ca + 1 + rng.below(classes.size() - 1)) % classes.size();
        const auto& list_a = by_class.at(classes[ca]);
        const auto& list_b = by_class.at(classes[cb]);
        const size_t ia = rng.below(list_a.size());
        const size_t ib = rng.below(list_b.size());
        const double theta = rng.uniform();
        out.push_back(convex_combine(list_a[ia], list_b[ib], theta));
        if (trace) trace->push_back({classes[ca], classes[cb], ia, ib, theta});
    }
    return out;
}

std::vector<FeatureVector> sample_open_outliers(const std::vector<FeatureVector>& pool, size_t count,
                                                Rng& rng) {
    if (pool.empty() && count > 0) throw DataError("sample_open_outliers: empty pool");
    std::vector<FeatureVector> out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i) out.push_back(pool[rng.below(pool.size())]);
    return out;
}

TrainBatch compose_batch(const std::vector<EmbeddedExample>& inliers, const std::vector<FeatureVector>& pool,
                         const BatchRatio& ratio, int oos_label, Rng& rng,
                         std::vector<SynthRecord>* trace) {
    TrainBatch batch;
    batch.examples.reserve(inliers.size() + ratio.open + ratio.synthetic);
    const size_t dim = inliers.empty() ? 0 : inliers.front().features.size();
    for (const auto& ex : inliers) {
        if (ex.features.size() != dim) throw NumericalError("compose_batch: inlier dimensions differ");
        batch.examples.push_back(ex);
    }

    for (auto& f : sample_open_outliers(pool, ratio.open, rng)) {
        if (f.size() != dim) throw NumericalError("compose_batch: pool feature dimension differs from inliers");
        batch.examples.push_back({std::move(f), oos_label});
    }

    if (ratio.synthetic > 0) {
        std::map<int, std::vector<FeatureVector>> by_class;
        for (const auto& ex : inliers) by_class[ex.label].push_back(ex.features);
        for (auto& f : synthesize_outliers(by_class, ratio.synthetic, rng, trace)) {
            batch.examples.push_back({std::move(f), oos_label});
        }
    }

    batch.counts = {inliers.size(), ratio.open, ratio.synthetic};
    return batch;
}

std::string synth_trace_jsonl(const std::vector<SynthRecord>& trace, size_t epoch, size_t batch) {
    std::string out;
    for (const auto& rec : trace) {
        nlohmann::json j;
        j["epoch"] = epoch;
        j["batch"] = batch;
        j["class_alpha"] = rec.class_alpha;
        j["class_beta"] = rec.class_beta;
        j["index_alpha"] = rec.index_alpha;
        j["index_beta"] = rec.index_beta;
        j["theta"] = rec.theta;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::optional<std::string> ratio_guardrail_warning(const BatchRatio& ratio) {
    if (ratio.inliers == 0) return std::nullopt;
    const double factor = static_cast<double>(ratio.synthetic) / static_cast<double>(ratio.inliers);
    if (factor > 20.0) {
        return "synthetic outlier quota is " + std::to_string(ratio.synthetic) + " per " +
               std::to_string(ratio.inliers) +
               " inliers (> 20x); counts this extreme are known to hurt unknown-class accuracy";
    }
    return std::nullopt;
}

}  // namespace oos
