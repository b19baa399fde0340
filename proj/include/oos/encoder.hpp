#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "oos/data.hpp"
#include "oos/matrix.hpp"

namespace oos {

/// A point in the d-dimensional feature space. Stored as doubles so the
/// training path stays smooth; files quantize to f32 at the boundary.
using FeatureVector = std::vector<double>;

enum class EncoderKind { identity, hashed_mean, precomputed };

struct EncoderSpec {
    EncoderKind kind = EncoderKind::identity;
    size_t dim = 0;             // identity: inferred from data when 0; hashed_mean default 768
    size_t hash_buckets = 4096; // hashed_mean only, >= 1024
    bool trainable = true;      // hashed_mean only
    std::string manifest_path;  // precomputed only
};

std::string encoder_kind_name(EncoderKind kind);
EncoderKind encoder_kind_from_name(const std::string& name);

/// Maps utterances to feature vectors. encode/encode_batch are read-only
/// and thread-safe; backward mutates state and belongs to the single
/// training thread.
class Encoder {
public:
    virtual ~Encoder() = default;

    virtual size_t dim() const = 0;
    virtual bool trainable() const { return false; }
    virtual const EncoderSpec& spec() const = 0;

    virtual FeatureVector encode(const Utterance& utterance) const = 0;

    /// Elementwise encode, order preserved; an element error is rethrown
    /// with its index.
    std::vector<FeatureVector> encode_batch(std::span<const Utterance> utterances) const;
    std::vector<FeatureVector> encode_batch(const std::vector<Utterance>& utterances) const;

    /// Accumulates parameter gradients from per-utterance upstream feature
    /// gradients. No-op for non-trainable encoders.
    virtual void backward(std::span<const Utterance> utterances,
                          const std::vector<FeatureVector>& upstream_grads);

    virtual std::unique_ptr<Encoder> clone() const = 0;
};

/// Numeric passthrough for datasets that already carry vectors.
class IdentityEncoder final : public Encoder {
public:
    explicit IdentityEncoder(size_t dim);

    size_t dim() const override { return spec_.dim; }
    const EncoderSpec& spec() const override { return spec_; }
    FeatureVector encode(const Utterance& utterance) const override;
    std::unique_ptr<Encoder> clone() const override { return std::make_unique<IdentityEncoder>(spec_.dim); }

private:
    EncoderSpec spec_;
};

// Tokenization used by the hashed encoder: lowercase, whitespace split,
// surrounding punctuation stripped.
std::vector<std::string> tokenize(const std::string& text);
uint64_t token_hash(const std::string& token);
size_t token_bucket(const std::string& token, size_t buckets);

/// Bag-of-buckets mean embedding with a trainable table: each token
/// hashes into one of `hash_buckets` rows and the sentence encoding is
/// the mean of its token rows. A lightweight trainable stand-in for a
/// fine-tuned sentence encoder; not a contribution in itself.
class HashedMeanEncoder final : public Encoder {
public:
    HashedMeanEncoder(const EncoderSpec& spec, uint64_t seed);

    size_t dim() const override { return spec_.dim; }
    bool trainable() const override { return spec_.trainable; }
    const EncoderSpec& spec() const override { return spec_; }
    FeatureVector encode(const Utterance& utterance) const override;
    void backward(std::span<const Utterance> utterances,
                  const std::vector<FeatureVector>& upstream_grads) override;
    std::unique_ptr<Encoder> clone() const override;

    MatF& table() { return table_; }
    const MatF& table() const { return table_; }
    MatD& grad() { return grad_; }
    void zero_grad() { grad_.fill(0.0); }

private:
    EncoderSpec spec_;
    MatF table_;  // hash_buckets x dim
    MatD grad_;   // accumulated by backward
};

/// Row lookup by utterance id from an embedding file produced offline.
class PrecomputedEncoder final : public Encoder {
public:
    explicit PrecomputedEncoder(const EncoderSpec& spec);

    size_t dim() const override { return spec_.dim; }
    const EncoderSpec& spec() const override { return spec_; }
    FeatureVector encode(const Utterance& utterance) const override;
    std::unique_ptr<Encoder> clone() const override;

private:
    EncoderSpec spec_;
    MatF rows_;
    std::unordered_map<std::string, size_t> row_of_id_;
};

std::unique_ptr<Encoder> make_encoder(const EncoderSpec& spec, uint64_t seed);

/// Embedding file: magic OOSE, u32 version=1, u32 count, u32 dim, then
/// count*dim little-endian f32 row-major. A sidecar `<path>.ids.jsonl`
/// maps row index to utterance id (plus optional label fields).
struct EmbeddingSidecarRow {
    std::string id;
    std::string label;      // optional, empty when absent
    int label_index = -1;   // optional, -1 when absent
};

void write_embeddings(const std::filesystem::path& path, const std::vector<FeatureVector>& features,
                      const std::vector<EmbeddingSidecarRow>& rows);

struct EmbeddingFile {
    MatF features;  // count x dim, exact file payload
    std::vector<EmbeddingSidecarRow> rows;
};

EmbeddingFile read_embeddings(const std::filesystem::path& path);

}  // namespace oos
