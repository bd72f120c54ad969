#pragma once

#include "realism/rng.hpp"
#include "realism/tensor_io.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace realism {

inline constexpr std::size_t kDefaultPoolCap = 10'000;

struct PoolConfig {
    std::size_t pool_cap = kDefaultPoolCap;
    std::uint64_t seed = 0;
    /// When set, the reference set at location (u, v) only holds training
    /// vectors taken from the same (u, v), subsampled per location.
    bool location_matched = false;
};

/// Frozen per-layer reference vectors.
///
/// Vectors are organised in groups. A pooled reference (the default) has a
/// single group shared by every test location. A location-matched reference
/// has grid_width * grid_height groups, one per spatial location in
/// row-major (u, v) order; every group holds the same number of vectors.
class ReferencePool {
public:
    ReferencePool() = default;
    ReferencePool(std::string layer_name, std::size_t channels, std::size_t group_count,
                  std::vector<float> vectors, std::size_t source_count, std::uint64_t seed,
                  std::uint32_t grid_width = 1, std::uint32_t grid_height = 1,
                  bool location_matched = false);

    const std::string& layer_name() const noexcept { return layer_name_; }
    std::size_t channels() const noexcept { return channels_; }
    std::size_t group_count() const noexcept { return group_count_; }
    /// Vectors per group.
    std::size_t group_size() const noexcept { return group_size_; }
    std::size_t size() const noexcept { return group_count_ * group_size_; }
    bool empty() const noexcept { return size() == 0; }
    std::size_t source_count() const noexcept { return source_count_; }
    std::uint64_t seed() const noexcept { return seed_; }
    bool location_matched() const noexcept { return location_matched_; }
    std::uint32_t grid_width() const noexcept { return grid_width_; }
    std::uint32_t grid_height() const noexcept { return grid_height_; }

    /// Flat row-major storage of `group_size()` C-vectors for group `g`.
    std::span<const float> group(std::size_t g) const noexcept {
        return std::span<const float>(vectors_).subspan(g * group_size_ * channels_,
                                                        group_size_ * channels_);
    }
    std::span<const float> vector(std::size_t g, std::size_t k) const noexcept {
        return group(g).subspan(k * channels_, channels_);
    }
    std::span<const float> all_vectors() const noexcept { return vectors_; }

    friend bool operator==(const ReferencePool&, const ReferencePool&) = default;

private:
    std::string layer_name_;
    std::size_t channels_ = 0;
    std::size_t group_count_ = 0;
    std::size_t group_size_ = 0;
    std::size_t source_count_ = 0;
    std::uint64_t seed_ = 0;
    std::uint32_t grid_width_ = 1;
    std::uint32_t grid_height_ = 1;
    bool location_matched_ = false;
    std::vector<float> vectors_;
};

/// Random access to one layer of the training images, so large candidate
/// sets never have to be materialised at once.
class TensorSource {
public:
    virtual ~TensorSource() = default;
    virtual std::size_t size() const = 0;
    virtual TensorShape shape(std::size_t image) const = 0;
    virtual ActivationTensor load(std::size_t image) const = 0;
};

class InMemorySource final : public TensorSource {
public:
    explicit InMemorySource(std::vector<ActivationTensor> tensors) : tensors_(std::move(tensors)) {}
    std::size_t size() const override { return tensors_.size(); }
    TensorShape shape(std::size_t image) const override { return tensors_.at(image).shape(); }
    ActivationTensor load(std::size_t image) const override { return tensors_.at(image); }

private:
    std::vector<ActivationTensor> tensors_;
};

/// One layer of every image in a bundle directory.
class BundleDirSource final : public TensorSource {
public:
    BundleDirSource(std::filesystem::path dir, std::vector<std::string> image_ids, std::string layer);
    std::size_t size() const override { return ids_.size(); }
    TensorShape shape(std::size_t image) const override { return shapes_.at(image); }
    ActivationTensor load(std::size_t image) const override;

private:
    std::filesystem::path dir_;
    std::vector<std::string> ids_;
    std::string layer_;
    std::vector<TensorShape> shapes_;
};

/// `count` distinct indices drawn uniformly from [0, population), sorted
/// ascending. Uses Floyd's subset algorithm: for j = population - count ..
/// population - 1, draw t = rng.below(j + 1) and take t unless already taken,
/// in which case take j.
std::vector<std::uint64_t> sample_without_replacement(std::uint64_t population, std::uint64_t count,
                                                      SplitMix64& rng);

/// Candidate indices enumerate (image, u, v) in that nesting order across all
/// images of the source.
ReferencePool build_pool(const TensorSource& source, const std::string& layer, const PoolConfig& config);

void save_pool(const std::filesystem::path& path, const ReferencePool& pool);
ReferencePool load_pool(const std::filesystem::path& path);

} // namespace realism
