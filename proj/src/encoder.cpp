#include "oos/encoder.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "oos/errors.hpp"
#include "oos/rng.hpp"
#include "oos/util.hpp"

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace oos {

namespace {

// Pipeline-level hash seed; fixed so encodings are stable across runs and
// builds.
constexpr uint64_t kHashSeedConstant = 0x6f6f73642d763031ULL;  // "oosd-v01"

void validate_spec(const EncoderSpec& spec) {
    switch (spec.kind) {
        case EncoderKind::identity:
            if (spec.dim == 0) throw UsageError("identity encoder needs dim > 0");
            break;
        case EncoderKind::hashed_mean:
            if (spec.dim == 0) throw UsageError("hashed_mean encoder needs dim > 0");
            if (spec.hash_buckets < 1024) {
                throw UsageError("hash_buckets must be >= 1024, got " + std::to_string(spec.hash_buckets));
            }
            break;
        case EncoderKind::precomputed:
            if (spec.manifest_path.empty()) throw UsageError("precomputed encoder needs a manifest path");
            break;
    }
}

void write_u32(std::ofstream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::ifstream& in, const std::filesystem::path& path) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw DataError(path.string() + ": truncated file");
    return v;
}

}  // namespace

std::string encoder_kind_name(EncoderKind kind) {
    switch (kind) {
        case EncoderKind::identity: return "identity";
        case EncoderKind::hashed_mean: return "hashed";
        case EncoderKind::precomputed: return "precomputed";
    }
    return "identity";
}

EncoderKind encoder_kind_from_name(const std::string& name) {
    if (name == "identity") return EncoderKind::identity;
    if (name == "hashed" || name == "hashed_mean") return EncoderKind::hashed_mean;
    if (name == "precomputed") return EncoderKind::precomputed;
    throw UsageError("unknown encoder kind: " + name);
}

std::vector<FeatureVector> Encoder::encode_batch(std::span<const Utterance> utterances) const {
    std::vector<FeatureVector> out;
    out.reserve(utterances.size());
    for (size_t i = 0; i < utterances.size(); ++i) {
        try {
            out.push_back(encode(utterances[i]));
        } catch (const DataError& e) {
            throw DataError("batch element " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

std::vector<FeatureVector> Encoder::encode_batch(const std::vector<Utterance>& utterances) const {
    return encode_batch(std::span<const Utterance>(utterances));
}

void Encoder::backward(std::span<const Utterance>, const std::vector<FeatureVector>&) {}

IdentityEncoder::IdentityEncoder(size_t dim) {
    spec_.kind = EncoderKind::identity;
    spec_.dim = dim;
    spec_.trainable = false;
    validate_spec(spec_);
}

FeatureVector IdentityEncoder::encode(const Utterance& utterance) const {
    if (!utterance.has_numeric()) {
        throw DataError("identity encoder: utterance `" + utterance.id + "` has no numeric vector");
    }
    if (utterance.numeric->size() != spec_.dim) {
        throw DataError("identity encoder: utterance `" + utterance.id + "` has dimension " +
                        std::to_string(utterance.numeric->size()) + ", expected " + std::to_string(spec_.dim));
    }
    return *utterance.numeric;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&]() {
        // strip surrounding punctuation
        size_t begin = 0, end = cur.size();
        while (begin < end && std::ispunct(static_cast<unsigned char>(cur[begin]))) ++begin;
        while (end > begin && std::ispunct(static_cast<unsigned char>(cur[end - 1]))) --end;
        if (end > begin) tokens.push_back(cur.substr(begin, end - begin));
        cur.clear();
    };
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    flush();
    return tokens;
}

uint64_t token_hash(const std::string& token) {
    return fnv1a64(token.data(), token.size(), 0xcbf29ce484222325ULL ^ kHashSeedConstant);
}

size_t token_bucket(const std::string& token, size_t buckets) {
    return static_cast<size_t>(token_hash(token) % buckets);
}

HashedMeanEncoder::HashedMeanEncoder(const EncoderSpec& spec, uint64_t seed) : spec_(spec) {
    spec_.kind = EncoderKind::hashed_mean;
    if (spec_.dim == 0) spec_.dim = 768;
    validate_spec(spec_);
    table_ = MatF(spec_.hash_buckets, spec_.dim);
    grad_ = MatD(spec_.hash_buckets, spec_.dim);
    Rng rng(Rng::derive(seed, stream::kEncoderInit));
    for (float& w : table_.raw()) w = static_cast<float>(rng.uniform_range(-0.05, 0.05));
}

FeatureVector HashedMeanEncoder::encode(const Utterance& utterance) const {
    if (!utterance.has_text()) {
        throw DataError("hashed encoder: utterance `" + utterance.id + "` has no text");
    }
    FeatureVector out(spec_.dim, 0.0);
    const auto tokens = tokenize(*utterance.text);
    if (tokens.empty()) return out;  // zero vector
    for (const auto& tok : tokens) {
        const size_t row = token_bucket(tok, spec_.hash_buckets);
        for (size_t j = 0; j < spec_.dim; ++j) out[j] += static_cast<double>(table_(row, j));
    }
    const double inv = 1.0 / static_cast<double>(tokens.size());
    for (double& v : out) v *= inv;
    return out;
}

void HashedMeanEncoder::backward(std::span<const Utterance> utterances,
                                 const std::vector<FeatureVector>& upstream_grads) {
    if (utterances.size() != upstream_grads.size()) {
        throw NumericalError("encoder backward: got " + std::to_string(upstream_grads.size()) +
                             " gradients for " + std::to_string(utterances.size()) + " utterances");
    }
    for (size_t i = 0; i < utterances.size(); ++i) {
        const auto& g = upstream_grads[i];
        if (g.size() != spec_.dim) {
            throw NumericalError("encoder backward: gradient " + std::to_string(i) + " has dimension " +
                                 std::to_string(g.size()) + ", expected " + std::to_string(spec_.dim));
        }
        if (!utterances[i].has_text()) continue;
        const auto tokens = tokenize(*utterances[i].text);
        if (tokens.empty()) continue;
        const double inv = 1.0 / static_cast<double>(tokens.size());
        for (const auto& tok : tokens) {
            const size_t row = token_bucket(tok, spec_.hash_buckets);
            for (size_t j = 0; j < spec_.dim; ++j) grad_(row, j) += g[j] * inv;
        }
    }
}

std::unique_ptr<Encoder> HashedMeanEncoder::clone() const {
    auto copy = std::make_unique<HashedMeanEncoder>(spec_, /*seed=*/0);
    copy->table_ = table_;
    copy->grad_ = grad_;
    return copy;
}

PrecomputedEncoder::PrecomputedEncoder(const EncoderSpec& spec) : spec_(spec) {
    spec_.kind = EncoderKind::precomputed;
    spec_.trainable = false;
    validate_spec(spec_);
    EmbeddingFile file = read_embeddings(spec_.manifest_path);
    rows_ = std::move(file.features);
    spec_.dim = rows_.cols();
    for (size_t i = 0; i < file.rows.size(); ++i) {
        row_of_id_[file.rows[i].id] = i;
    }
    if (row_of_id_.size() != rows_.rows()) {
        throw DataError(spec_.manifest_path + ": sidecar ids do not match the row count");
    }
}

FeatureVector PrecomputedEncoder::encode(const Utterance& utterance) const {
    const auto it = row_of_id_.find(utterance.id);
    if (it == row_of_id_.end()) {
        throw DataError("precomputed encoder: id `" + utterance.id + "` missing from manifest");
    }
    FeatureVector out(spec_.dim);
    for (size_t j = 0; j < spec_.dim; ++j) out[j] = static_cast<double>(rows_(it->second, j));
    return out;
}

std::unique_ptr<Encoder> PrecomputedEncoder::clone() const {
    auto copy = std::make_unique<PrecomputedEncoder>(*this);
    return copy;
}

std::unique_ptr<Encoder> make_encoder(const EncoderSpec& spec, uint64_t seed) {
    switch (spec.kind) {
        case EncoderKind::identity: return std::make_unique<IdentityEncoder>(spec.dim);
        case EncoderKind::hashed_mean: return std::make_unique<HashedMeanEncoder>(spec, seed);
        case EncoderKind::precomputed: return std::make_unique<PrecomputedEncoder>(spec);
    }
    throw UsageError("unknown encoder kind");
}

void write_embeddings(const std::filesystem::path& path, const std::vector<FeatureVector>& features,
                      const std::vector<EmbeddingSidecarRow>& rows) {
    if (features.size() != rows.size()) {
        throw UsageError("write_embeddings: feature/row count mismatch");
    }
    const size_t dim = features.empty() ? 0 : features.front().size();
    for (const auto& f : features) {
        if (f.size() != dim) throw DataError("write_embeddings: inconsistent feature dimensions");
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out.write("OOSE", 4);
    write_u32(out, 1u);
    write_u32(out, static_cast<uint32_t>(features.size()));
    write_u32(out, static_cast<uint32_t>(dim));
    for (const auto& f : features) {
        for (double v : f) {
            const float x = static_cast<float>(v);
            out.write(reinterpret_cast<const char*>(&x), sizeof(x));
        }
    }
    if (!out) throw DataError("write failed: " + path.string());
    out.close();

    std::string sidecar;
    for (size_t i = 0; i < rows.size(); ++i) {
        json rec;
        rec["row"] = i;
        rec["id"] = rows[i].id;
        if (!rows[i].label.empty()) rec["label"] = rows[i].label;
        if (rows[i].label_index >= 0) rec["label_index"] = rows[i].label_index;
        sidecar += rec.dump();
        sidecar += '\n';
    }
    write_text_file(path.string() + ".ids.jsonl", sidecar);
}

EmbeddingFile read_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open embeddings: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "OOSE", 4) != 0) {
        throw DataError(path.string() + ": bad magic, not an OOSE embedding file");
    }
    const uint32_t version = read_u32(in, path);
    if (version != 1) throw DataError(path.string() + ": unsupported OOSE version " + std::to_string(version));
    const uint32_t count = read_u32(in, path);
    const uint32_t dim = read_u32(in, path);

    EmbeddingFile file;
    file.features = MatF(count, dim);
    in.read(reinterpret_cast<char*>(file.features.data()),
            static_cast<std::streamsize>(sizeof(float) * file.features.size()));
    if (!in) throw DataError(path.string() + ": truncated payload (header says " + std::to_string(count) +
                             "x" + std::to_string(dim) + ")");
    char extra;
    if (in.read(&extra, 1)) throw DataError(path.string() + ": trailing bytes after payload");

    const std::filesystem::path sidecar_path = path.string() + ".ids.jsonl";
    std::ifstream sc(sidecar_path);
    if (!sc) throw DataError("cannot open sidecar: " + sidecar_path.string());
    file.rows.resize(count);
    std::vector<bool> seen(count, false);
    std::string line;
    size_t line_no = 0;
    while (std::getline(sc, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(sidecar_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        const size_t row = rec.at("row").get<size_t>();
        if (row >= count) throw DataError(sidecar_path.string() + ": row index out of range");
        EmbeddingSidecarRow& r = file.rows[row];
        r.id = rec.at("id").get<std::string>();
        if (rec.contains("label")) r.label = rec.at("label").get<std::string>();
        if (rec.contains("label_index")) r.label_index = rec.at("label_index").get<int>();
        seen[row] = true;
    }
    for (size_t i = 0; i < count; ++i) {
        if (!seen[i]) throw DataError(sidecar_path.string() + ": missing row " + std::to_string(i));
    }
    return file;
}

}  // namespace oos
