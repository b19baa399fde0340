#include "oos/synthetic.hpp"

#include <cmath>

#include "oos/errors.hpp"
#include "oos/rng.hpp"

namespace oos {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Dataset make_blobs(const std::vector<BlobSpec>& blobs, uint64_t seed) {
    if (blobs.size() < 2) throw UsageError("blob dataset needs >= 2 classes");
    Dataset out;
    Rng rng(seed);
    for (size_t c = 0; c < blobs.size(); ++c) {
        const BlobSpec& spec = blobs[c];
        if (spec.count < 3) throw UsageError("each blob needs >= 3 points");
        const std::string name = "blob" + std::to_string(c);
        out.class_names.push_back(name);
        for (size_t i = 0; i < spec.count; ++i) {
            Utterance u;
            u.id = name + "_" + std::to_string(i);
            u.numeric = std::vector<double>{spec.x + spec.sigma * rng.normal(),
                                            spec.y + spec.sigma * rng.normal()};
            out.examples.push_back({std::move(u), name});
        }
    }
    return out;
}

Dataset make_blob_dataset(size_t n_classes, size_t per_class, double radius, double sigma, uint64_t seed) {
    std::vector<BlobSpec> blobs;
    for (size_t c = 0; c < n_classes; ++c) {
        const double angle = 2.0 * kPi * static_cast<double>(c) / static_cast<double>(n_classes);
        blobs.push_back({radius * std::cos(angle), radius * std::sin(angle), sigma, per_class});
    }
    return make_blobs(blobs, seed);
}

std::vector<BlobSpec> benchmark_blob_layout(size_t n_classes, size_t n_rogue, size_t per_class,
                                            double radius, double rogue_radius, double sigma,
                                            double arc_degrees) {
    if (n_rogue >= n_classes) throw UsageError("rogue blob count must be below the class count");
    const size_t n_circle = n_classes - n_rogue;
    std::vector<BlobSpec> blobs;
    for (size_t c = 0; c < n_circle; ++c) {
        const double angle = 2.0 * kPi * static_cast<double>(c) / static_cast<double>(n_circle);
        blobs.push_back({radius * std::cos(angle), radius * std::sin(angle), sigma, per_class});
    }
    for (size_t r = 0; r < n_rogue; ++r) {
        const double angle =
            kPi / 180.0 * arc_degrees * static_cast<double>(r + 1) / static_cast<double>(n_rogue + 1);
        blobs.push_back({rogue_radius * std::cos(angle), rogue_radius * std::sin(angle), sigma, per_class});
    }
    return blobs;
}

std::vector<Utterance> make_arc_pool(size_t count, double inner_radius, double outer_radius,
                                     double arc_degrees, uint64_t seed) {
    if (!(outer_radius > inner_radius) || !(inner_radius >= 0.0)) {
        throw UsageError("pool needs 0 <= inner_radius < outer_radius");
    }
    if (!(arc_degrees > 0.0) || arc_degrees > 360.0) {
        throw UsageError("pool arc must be in (0, 360] degrees");
    }
    std::vector<Utterance> out;
    out.reserve(count);
    Rng rng(seed);
    const double arc_radians = kPi / 180.0 * arc_degrees;
    for (size_t i = 0; i < count; ++i) {
        const double angle = rng.uniform_range(0.0, arc_radians);
        // area-uniform radius
        const double r2 = rng.uniform_range(inner_radius * inner_radius, outer_radius * outer_radius);
        const double r = std::sqrt(r2);
        Utterance u;
        u.id = "pool" + std::to_string(i);
        u.numeric = std::vector<double>{r * std::cos(angle), r * std::sin(angle)};
        out.push_back(std::move(u));
    }
    return out;
}

}  // namespace oos
