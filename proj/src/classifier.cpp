#include "oos/classifier.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "oos/errors.hpp"
#include "oos/rng.hpp"

using json = nlohmann::json;

namespace oos {

namespace {

std::vector<size_t> layer_dims(size_t input_dim, const std::vector<size_t>& hidden, size_t n_outputs) {
    std::vector<size_t> dims;
    dims.push_back(input_dim);
    for (size_t h : hidden) dims.push_back(h);
    dims.push_back(n_outputs);
    return dims;
}

void check_finite_params(const MlpClassifier& model) {
    for (size_t l = 0; l < model.n_layers(); ++l) {
        for (float w : model.weight(l).raw()) {
            if (!std::isfinite(w)) throw NumericalError("non-finite parameter in layer " + std::to_string(l));
        }
        for (float b : model.bias(l).raw()) {
            if (!std::isfinite(b)) throw NumericalError("non-finite bias in layer " + std::to_string(l));
        }
    }
}

// Forward pass keeping pre-activations and activations for backprop.
struct ForwardCache {
    std::vector<MatD> acts;     // acts[0] = inputs, acts[l+1] = layer l output (post-ReLU except last)
    std::vector<MatD> preacts;  // preacts[l] = inputs * W_l + b_l
};

MatD to_matrix(const std::vector<FeatureVector>& features, size_t dim) {
    MatD x(features.size(), dim);
    for (size_t i = 0; i < features.size(); ++i) {
        if (features[i].size() != dim) {
            throw DataError("feature " + std::to_string(i) + " has dimension " +
                            std::to_string(features[i].size()) + ", model expects " + std::to_string(dim));
        }
        for (size_t j = 0; j < dim; ++j) x(i, j) = features[i][j];
    }
    return x;
}

ForwardCache run_forward(const MlpClassifier& model, MatD inputs) {
    ForwardCache cache;
    cache.acts.push_back(std::move(inputs));
    for (size_t l = 0; l < model.n_layers(); ++l) {
        const MatF& w = model.weight(l);
        const MatF& b = model.bias(l);
        const MatD& in = cache.acts.back();
        MatD z(in.rows(), w.cols());
        for (size_t i = 0; i < in.rows(); ++i) {
            for (size_t k = 0; k < w.rows(); ++k) {
                const double x = in(i, k);
                if (x == 0.0) continue;
                for (size_t j = 0; j < w.cols(); ++j) z(i, j) += x * static_cast<double>(w(k, j));
            }
            for (size_t j = 0; j < w.cols(); ++j) z(i, j) += static_cast<double>(b(0, j));
        }
        cache.preacts.push_back(z);
        if (l + 1 < model.n_layers()) {
            for (double& v : z.raw()) v = v > 0.0 ? v : 0.0;  // ReLU
        }
        cache.acts.push_back(std::move(z));
    }
    return cache;
}

}  // namespace

MlpClassifier::MlpClassifier(size_t input_dim, std::vector<size_t> hidden, size_t n_outputs, double tau,
                             uint64_t seed)
    : input_dim_(input_dim), hidden_(std::move(hidden)), n_outputs_(n_outputs), tau_(tau) {
    if (input_dim_ == 0 || n_outputs_ == 0) throw UsageError("classifier dimensions must be positive");
    for (size_t h : hidden_) {
        if (h == 0) throw UsageError("hidden sizes must be positive");
    }
    if (!(tau_ > 0.0)) throw UsageError("temperature must be positive, got " + std::to_string(tau_));

    const auto dims = layer_dims(input_dim_, hidden_, n_outputs_);
    Rng rng(Rng::derive(seed, stream::kWeightInit));
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        MatF w(dims[l], dims[l + 1]);
        // Kaiming-style uniform: limit sqrt(6 / fan_in)
        const double limit = std::sqrt(6.0 / static_cast<double>(dims[l]));
        for (float& x : w.raw()) x = static_cast<float>(rng.uniform_range(-limit, limit));
        weights_.push_back(std::move(w));
        biases_.emplace_back(1, dims[l + 1]);
    }
}

MlpClassifier MlpClassifier::from_parts(size_t input_dim, std::vector<size_t> hidden, size_t n_outputs,
                                        double tau, std::vector<MatF> weights, std::vector<MatF> biases) {
    MlpClassifier m(input_dim, std::move(hidden), n_outputs, tau, /*seed=*/0);
    const auto dims = layer_dims(m.input_dim_, m.hidden_, m.n_outputs_);
    if (weights.size() != dims.size() - 1 || biases.size() != dims.size() - 1) {
        throw DataError("from_parts: layer count mismatch");
    }
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        if (weights[l].rows() != dims[l] || weights[l].cols() != dims[l + 1] || biases[l].rows() != 1 ||
            biases[l].cols() != dims[l + 1]) {
            throw DataError("from_parts: shape mismatch at layer " + std::to_string(l));
        }
    }
    m.weights_ = std::move(weights);
    m.biases_ = std::move(biases);
    return m;
}

bool MlpClassifier::operator==(const MlpClassifier& other) const {
    return input_dim_ == other.input_dim_ && hidden_ == other.hidden_ && n_outputs_ == other.n_outputs_ &&
           tau_ == other.tau_ && weights_ == other.weights_ && biases_ == other.biases_;
}

MatD forward(const MlpClassifier& model, const std::vector<FeatureVector>& features) {
    check_finite_params(model);
    ForwardCache cache = run_forward(model, to_matrix(features, model.input_dim()));
    return std::move(cache.acts.back());
}

int argmax_row(const MatD& logits, size_t row) {
    int best = 0;
    double best_v = logits(row, 0);
    for (size_t j = 1; j < logits.cols(); ++j) {
        if (logits(row, j) > best_v) {
            best_v = logits(row, j);
            best = static_cast<int>(j);
        }
    }
    return best;
}

std::vector<int> predict(const MlpClassifier& model, const std::vector<FeatureVector>& features) {
    const MatD logits = forward(model, features);
    std::vector<int> out(logits.rows());
    for (size_t i = 0; i < logits.rows(); ++i) out[i] = argmax_row(logits, i);
    return out;
}

LossAndGrads loss_and_grad(const MlpClassifier& model, const TrainBatch& batch) {
    const size_t n = batch.examples.size();
    if (n == 0) throw UsageError("loss_and_grad: empty batch");
    const size_t n_out = model.n_outputs();

    std::vector<FeatureVector> feats;
    feats.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        const int label = batch.examples[i].label;
        if (label < 0 || static_cast<size_t>(label) >= n_out) {
            throw DataError("label " + std::to_string(label) + " out of range [0, " +
                            std::to_string(n_out - 1) + "] at batch index " + std::to_string(i));
        }
        feats.push_back(batch.examples[i].features);
    }

    check_finite_params(model);
    ForwardCache cache = run_forward(model, to_matrix(feats, model.input_dim()));
    const MatD& logits = cache.acts.back();
    const double tau = model.tau();

    LossAndGrads out;
    out.report.batch_size = n;
    MatD dlogits(n, n_out);
    double loss_sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double max_scaled = logits(i, 0) / tau;
        for (size_t j = 1; j < n_out; ++j) max_scaled = std::max(max_scaled, logits(i, j) / tau);
        double sum_exp = 0.0;
        for (size_t j = 0; j < n_out; ++j) sum_exp += std::exp(logits(i, j) / tau - max_scaled);
        const double lse = max_scaled + std::log(sum_exp);

        const int gold = batch.examples[i].label;
        const double logp = logits(i, gold) / tau - lse;
        if (!std::isfinite(logp)) {
            throw NumericalError("non-finite loss at batch index " + std::to_string(i));
        }
        loss_sum += -logp;
        if (argmax_row(logits, i) == gold) ++out.report.correct;

        const double inv_n_tau = 1.0 / (static_cast<double>(n) * tau);
        for (size_t j = 0; j < n_out; ++j) {
            const double p = std::exp(logits(i, j) / tau - lse);
            dlogits(i, j) = (p - (static_cast<int>(j) == gold ? 1.0 : 0.0)) * inv_n_tau;
        }
    }
    out.report.loss = loss_sum / static_cast<double>(n);

    // Backprop through the layers.
    const size_t n_layers = model.n_layers();
    out.grads.weights.resize(n_layers);
    out.grads.biases.resize(n_layers);
    MatD delta = std::move(dlogits);
    for (size_t li = n_layers; li-- > 0;) {
        const MatF& w = model.weight(li);
        const MatD& a_in = cache.acts[li];

        MatD dw(w.rows(), w.cols());
        MatD db(1, w.cols());
        for (size_t i = 0; i < n; ++i) {
            for (size_t k = 0; k < w.rows(); ++k) {
                const double x = a_in(i, k);
                if (x == 0.0) continue;
                for (size_t j = 0; j < w.cols(); ++j) dw(k, j) += x * delta(i, j);
            }
            for (size_t j = 0; j < w.cols(); ++j) db(0, j) += delta(i, j);
        }
        out.grads.weights[li] = std::move(dw);
        out.grads.biases[li] = std::move(db);

        MatD prev(n, w.rows());
        for (size_t i = 0; i < n; ++i) {
            for (size_t k = 0; k < w.rows(); ++k) {
                double acc = 0.0;
                for (size_t j = 0; j < w.cols(); ++j) acc += delta(i, j) * static_cast<double>(w(k, j));
                prev(i, k) = acc;
            }
        }
        if (li > 0) {
            const MatD& z = cache.preacts[li - 1];
            for (size_t i = 0; i < n; ++i) {
                for (size_t k = 0; k < w.rows(); ++k) {
                    if (z(i, k) <= 0.0) prev(i, k) = 0.0;  // ReLU'(z<=0) = 0
                }
            }
        }
        delta = std::move(prev);
    }

    out.input_grads.resize(n);
    for (size_t i = 0; i < n; ++i) {
        out.input_grads[i].assign(model.input_dim(), 0.0);
        for (size_t j = 0; j < model.input_dim(); ++j) out.input_grads[i][j] = delta(i, j);
    }
    return out;
}

void AdamState::step(const std::vector<MatF*>& params, const std::vector<const MatD*>& grads,
                     const AdamConfig& config) {
    if (params.size() != grads.size()) throw NumericalError("adam: parameter/gradient group size mismatch");
    if (m_.empty()) {
        for (const MatF* p : params) {
            m_.emplace_back(p->rows(), p->cols());
            v_.emplace_back(p->rows(), p->cols());
        }
    }
    if (m_.size() != params.size()) throw NumericalError("adam: state does not match parameter group");
    ++t_;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t_));
    for (size_t g = 0; g < params.size(); ++g) {
        MatF& p = *params[g];
        const MatD& grad = *grads[g];
        if (p.rows() != grad.rows() || p.cols() != grad.cols() || !m_[g].same_shape(grad)) {
            throw NumericalError("adam: shape mismatch in group " + std::to_string(g));
        }
        for (size_t idx = 0; idx < p.size(); ++idx) {
            const double gv = grad.raw()[idx];
            double& m = m_[g].raw()[idx];
            double& v = v_[g].raw()[idx];
            m = config.beta1 * m + (1.0 - config.beta1) * gv;
            v = config.beta2 * v + (1.0 - config.beta2) * gv * gv;
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            const double updated =
                static_cast<double>(p.raw()[idx]) - config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
            p.raw()[idx] = static_cast<float>(updated);
        }
    }
}

void adam_step(MlpClassifier& model, AdamState& state, const ModelGrads& grads, const AdamConfig& config) {
    std::vector<MatF*> params;
    std::vector<const MatD*> gs;
    for (size_t l = 0; l < model.n_layers(); ++l) {
        params.push_back(&model.weight(l));
        gs.push_back(&grads.weights[l]);
        params.push_back(&model.bias(l));
        gs.push_back(&grads.biases[l]);
    }
    state.step(params, gs, config);
}

namespace {

json encoder_spec_to_json(const EncoderSpec& spec) {
    json j;
    j["kind"] = encoder_kind_name(spec.kind);
    j["dim"] = spec.dim;
    if (spec.kind == EncoderKind::hashed_mean) {
        j["hash_buckets"] = spec.hash_buckets;
        j["trainable"] = spec.trainable;
    }
    if (spec.kind == EncoderKind::precomputed) j["manifest_path"] = spec.manifest_path;
    return j;
}

EncoderSpec encoder_spec_from_json(const json& j) {
    EncoderSpec spec;
    spec.kind = encoder_kind_from_name(j.at("kind").get<std::string>());
    spec.dim = j.at("dim").get<size_t>();
    if (j.contains("hash_buckets")) spec.hash_buckets = j.at("hash_buckets").get<size_t>();
    if (j.contains("trainable")) spec.trainable = j.at("trainable").get<bool>();
    if (j.contains("manifest_path")) spec.manifest_path = j.at("manifest_path").get<std::string>();
    return spec;
}

void write_mat_f32(std::ofstream& out, const MatF& m) {
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(float) * m.size()));
}

MatF read_mat_f32(std::ifstream& in, size_t rows, size_t cols, const std::filesystem::path& path) {
    MatF m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(float) * m.size()));
    if (!in) throw DataError(path.string() + ": truncated parameter payload");
    return m;
}

}  // namespace

void save_model(const std::filesystem::path& path, const MlpClassifier& model, const Encoder& encoder,
                const std::string& kind, std::optional<double> threshold) {
    json header;
    header["kind"] = kind;
    header["input_dim"] = model.input_dim();
    header["hidden"] = model.hidden();
    header["n_outputs"] = model.n_outputs();
    header["tau"] = model.tau();
    if (threshold) header["threshold"] = *threshold;
    header["encoder"] = encoder_spec_to_json(encoder.spec());

    json params = json::array();
    for (size_t l = 0; l < model.n_layers(); ++l) {
        params.push_back({{"name", "w" + std::to_string(l)},
                          {"rows", model.weight(l).rows()},
                          {"cols", model.weight(l).cols()}});
        params.push_back({{"name", "b" + std::to_string(l)},
                          {"rows", model.bias(l).rows()},
                          {"cols", model.bias(l).cols()}});
    }
    const auto* hashed = dynamic_cast<const HashedMeanEncoder*>(&encoder);
    if (hashed) {
        params.push_back({{"name", "encoder_table"},
                          {"rows", hashed->table().rows()},
                          {"cols", hashed->table().cols()}});
    }
    header["params"] = params;

    const std::string header_str = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out.write("OOSM", 4);
    const uint32_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const uint32_t header_len = static_cast<uint32_t>(header_str.size());
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (size_t l = 0; l < model.n_layers(); ++l) {
        write_mat_f32(out, model.weight(l));
        write_mat_f32(out, model.bias(l));
    }
    if (hashed) write_mat_f32(out, hashed->table());
    if (!out) throw DataError("write failed: " + path.string());
}

LoadedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "OOSM", 4) != 0) {
        throw DataError(path.string() + ": bad magic, not an OOSM checkpoint");
    }
    uint32_t version = 0, header_len = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    if (!in) throw DataError(path.string() + ": truncated header");
    if (version != 1) throw DataError(path.string() + ": unsupported OOSM version " + std::to_string(version));
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), header_len);
    if (!in) throw DataError(path.string() + ": truncated header");

    json header;
    try {
        header = json::parse(header_str);
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": bad header json: " + e.what());
    }

    const size_t input_dim = header.at("input_dim").get<size_t>();
    const auto hidden = header.at("hidden").get<std::vector<size_t>>();
    const size_t n_outputs = header.at("n_outputs").get<size_t>();
    const double tau = header.at("tau").get<double>();
    const EncoderSpec enc_spec = encoder_spec_from_json(header.at("encoder"));

    std::vector<MatF> weights, biases;
    MatF encoder_table;
    const auto dims = layer_dims(input_dim, hidden, n_outputs);
    size_t expected_layer = 0;
    for (const auto& p : header.at("params")) {
        const std::string name = p.at("name").get<std::string>();
        const size_t rows = p.at("rows").get<size_t>();
        const size_t cols = p.at("cols").get<size_t>();
        if (name == "encoder_table") {
            encoder_table = read_mat_f32(in, rows, cols, path);
            continue;
        }
        const bool is_weight = name.starts_with("w");
        const size_t layer = expected_layer / 2;
        if (layer + 1 >= dims.size()) throw DataError(path.string() + ": more parameters than layers");
        const size_t want_rows = is_weight ? dims[layer] : 1;
        const size_t want_cols = dims[layer + 1];
        if (rows != want_rows || cols != want_cols) {
            throw DataError(path.string() + ": shape header inconsistent with declared architecture for " +
                            name);
        }
        MatF m = read_mat_f32(in, rows, cols, path);
        if (is_weight) weights.push_back(std::move(m));
        else biases.push_back(std::move(m));
        ++expected_layer;
    }
    char extra;
    if (in.read(&extra, 1)) throw DataError(path.string() + ": trailing bytes after payload");

    LoadedModel out{
        header.at("kind").get<std::string>(),
        MlpClassifier::from_parts(input_dim, hidden, n_outputs, tau, std::move(weights), std::move(biases)),
        nullptr,
        std::nullopt,
    };
    if (header.contains("threshold")) out.threshold = header.at("threshold").get<double>();

    if (enc_spec.kind == EncoderKind::hashed_mean) {
        if (encoder_table.empty()) throw DataError(path.string() + ": hashed encoder table missing");
        auto hashed = std::make_unique<HashedMeanEncoder>(enc_spec, /*seed=*/0);
        if (!hashed->table().same_shape(encoder_table)) {
            throw DataError(path.string() + ": encoder table shape inconsistent with spec");
        }
        hashed->table() = std::move(encoder_table);
        out.encoder = std::move(hashed);
    } else {
        out.encoder = make_encoder(enc_spec, /*seed=*/0);
    }
    return out;
}

}  // namespace oos
