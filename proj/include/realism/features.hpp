#pragma once

#include "realism/reference_pool.hpp"
#include "realism/tensor_io.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace realism {

struct FeatureVector {
    std::string image_id;
    /// One aggregated nearest-neighbour distance per layer, in layer order.
    std::vector<double> values;

    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

enum class Aggregation {
    sum,  ///< total distance over all spatial locations (default)
    mean, ///< sum divided by W*H
};

struct FeatureOptions {
    Aggregation aggregation = Aggregation::sum;
    /// Workers for the per-location scan inside one layer. Location distances
    /// are summed sequentially in row-major order afterwards, so the result
    /// does not depend on this value.
    unsigned threads = 1;
};

/// Exact Euclidean distance from `query` to its nearest neighbour among the
/// row-major C-vectors in `vectors`. Differences and squares are accumulated
/// in double, channel index ascending; the square root is taken once, on the
/// minimum squared distance.
double nn_distance(std::span<const float> query, std::span<const float> vectors, std::size_t channels);

/// Nearest-neighbour distance against group `group` of the pool.
double nn_distance(std::span<const float> query, const ReferencePool& pool, std::size_t group = 0);

/// Aggregated distance over every spatial location of `tensor`.
double layer_feature(const ActivationTensor& tensor, const ReferencePool& pool,
                     const FeatureOptions& options = {});

/// Per-location distances in row-major (u, v) order.
std::vector<double> location_distances(const ActivationTensor& tensor, const ReferencePool& pool,
                                       unsigned threads = 1);

FeatureVector featurize(const ActivationBundle& bundle, std::span<const ReferencePool> pools,
                        const FeatureOptions& options = {});

/// Feature vectors of a set of images, column order given by `layers`.
struct FeatureTable {
    std::vector<std::string> layers;
    std::vector<FeatureVector> rows;

    const FeatureVector* find(const std::string& image_id) const;
};

/// CSV with header `image_id,<layer1>,...,<layerm>`; values printed with
/// 9 significant digits.
void write_features_csv(const std::filesystem::path& path, const FeatureTable& table);
FeatureTable read_features_csv(const std::filesystem::path& path);

} // namespace realism
