#pragma once

#include "realism/reference_pool.hpp"
#include "realism/rng.hpp"
#include "realism/tensor_io.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace realism::testing {

/// Standard normal draws by Box-Muller on SplitMix64, so fixtures do not
/// depend on the standard library's distribution implementations.
class Gaussian {
public:
    explicit Gaussian(std::uint64_t seed) : rng_(seed) {}
    double operator()();
    SplitMix64& engine() { return rng_; }

private:
    SplitMix64 rng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::vector<float> random_floats(std::size_t n, Gaussian& g, double scale = 1.0);
ActivationTensor random_tensor(const std::string& layer, TensorShape shape, Gaussian& g, double scale = 1.0);

/// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

struct SyntheticLayer {
    std::string name;
    TensorShape shape;
};

struct SyntheticSpec {
    std::vector<SyntheticLayer> layers = {
        {"L1", {4, 4, 8}}, {"L2", {2, 2, 16}}, {"FC", {1, 1, 32}}};
    std::size_t reference_images = 200;
    std::size_t scored_images = 2000;
    std::size_t prototypes = 24;
    double noise = 0.05;
    /// Fake-like images are displaced by up to this much per location.
    double max_offset = 1.5;
    /// Label model on z-scored full-reference features: logit = w . z + b.
    std::vector<double> true_weights = {-1.5, -1.5, -1.5};
    double true_intercept = 0.0;
    int raters = 5;
    std::uint64_t seed = 1;
};

struct SyntheticData {
    std::filesystem::path reference_dir;
    std::filesystem::path scored_dir;
    /// `image_id,label`, one row per rater vote.
    std::filesystem::path binary_labels;
    /// `image_id,votes_real,raters`.
    std::filesystem::path spectrum_labels;
    std::vector<std::string> scored_ids;
    std::vector<double> true_probability;
    std::string layer_list;
};

/// Writes reference bundles (real-like activations scattered around shared
/// prototypes) and scored bundles (half real-like, half displaced away from
/// the prototypes by a random amount), plus human-style labels drawn from the
/// logistic label model.
SyntheticData write_synthetic_fixture(const std::filesystem::path& root, const SyntheticSpec& spec);

} // namespace realism::testing
