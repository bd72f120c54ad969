#include "realism/features.hpp"

#include "realism/csv.hpp"
#include "realism/error.hpp"
#include "realism/layers.hpp"
#include "realism/parallel.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace realism {

namespace {

constexpr std::size_t kAbandonBlock = 16;

/// Squared distance, abandoning once a block boundary is passed with the
/// running sum already above `best`. An abandoned candidate cannot be the
/// minimum, so the minimum itself is always summed in full, channel order.
double squared_distance_bounded(const float* q, const float* p, std::size_t channels, double best) {
    double acc = 0.0;
    std::size_t c = 0;
    while (c < channels) {
        const std::size_t stop = std::min(channels, c + kAbandonBlock);
        for (; c < stop; ++c) {
            const double d = static_cast<double>(q[c]) - static_cast<double>(p[c]);
            acc += d * d;
        }
        if (acc > best) return acc;
    }
    return acc;
}

std::size_t group_for_location(const ReferencePool& pool, std::size_t loc) {
    return pool.location_matched() ? loc : 0;
}

void check_compatible(const ActivationTensor& tensor, const ReferencePool& pool) {
    if (tensor.shape().channels != pool.channels()) {
        throw Error(ErrorCategory::dimension_mismatch,
                    "layer " + tensor.layer_name() + " has " + std::to_string(tensor.shape().channels) +
                        " channels, pool has " + std::to_string(pool.channels()));
    }
    if (pool.empty()) throw Error(ErrorCategory::empty_input, "reference pool for " + pool.layer_name() + " is empty");
    if (pool.location_matched() &&
        (tensor.shape().width != pool.grid_width() || tensor.shape().height != pool.grid_height())) {
        throw Error(ErrorCategory::dimension_mismatch,
                    "layer " + tensor.layer_name() + " spatial grid differs from its location-matched pool");
    }
}

} // namespace

double nn_distance(std::span<const float> query, std::span<const float> vectors, std::size_t channels) {
    if (channels == 0 || query.size() != channels) {
        throw Error(ErrorCategory::dimension_mismatch, "query has " + std::to_string(query.size()) +
                                                           " components, pool vectors have " +
                                                           std::to_string(channels));
    }
    if (vectors.empty()) throw Error(ErrorCategory::empty_input, "nearest neighbour of an empty pool");
    if (vectors.size() % channels != 0) {
        throw Error(ErrorCategory::dimension_mismatch, "pool storage is not a whole number of vectors");
    }
    double best = std::numeric_limits<double>::infinity();
    const float* q = query.data();
    for (const float* p = vectors.data(); p != vectors.data() + vectors.size(); p += channels) {
        const double d2 = squared_distance_bounded(q, p, channels, best);
        if (d2 < best) {
            best = d2;
            if (best == 0.0) break;
        }
    }
    return std::sqrt(best);
}

double nn_distance(std::span<const float> query, const ReferencePool& pool, std::size_t group) {
    if (group >= pool.group_count()) {
        throw Error(ErrorCategory::dimension_mismatch, "pool group index out of range");
    }
    return nn_distance(query, pool.group(group), pool.channels());
}

std::vector<double> location_distances(const ActivationTensor& tensor, const ReferencePool& pool,
                                       unsigned threads) {
    check_compatible(tensor, pool);
    const std::size_t locations = tensor.shape().locations();
    std::vector<double> out(locations);
    parallel_for(locations, threads, [&](std::size_t loc) {
        out[loc] = nn_distance(tensor.location(loc), pool.group(group_for_location(pool, loc)),
                               pool.channels());
    });
    return out;
}

double layer_feature(const ActivationTensor& tensor, const ReferencePool& pool, const FeatureOptions& options) {
    const auto distances = location_distances(tensor, pool, options.threads);
    double total = 0.0;
    for (double d : distances) total += d;
    if (options.aggregation == Aggregation::mean) total /= static_cast<double>(distances.size());
    return total;
}

FeatureVector featurize(const ActivationBundle& bundle, std::span<const ReferencePool> pools,
                        const FeatureOptions& options) {
    if (bundle.tensors.size() != pools.size()) {
        throw Error(ErrorCategory::layer_mismatch, "image " + bundle.image_id + " has " +
                                                       std::to_string(bundle.tensors.size()) + " layers, " +
                                                       std::to_string(pools.size()) + " pools given");
    }
    FeatureVector fv{bundle.image_id, {}};
    fv.values.reserve(pools.size());
    for (std::size_t j = 0; j < pools.size(); ++j) {
        if (!same_layer(bundle.tensors[j].layer_name(), pools[j].layer_name())) {
            throw Error(ErrorCategory::layer_mismatch, "image " + bundle.image_id + " layer " +
                                                           std::to_string(j) + " is " +
                                                           bundle.tensors[j].layer_name() + ", pool is " +
                                                           pools[j].layer_name());
        }
        fv.values.push_back(layer_feature(bundle.tensors[j], pools[j], options));
    }
    return fv;
}

const FeatureVector* FeatureTable::find(const std::string& image_id) const {
    for (const auto& row : rows) {
        if (row.image_id == image_id) return &row;
    }
    return nullptr;
}

void write_features_csv(const std::filesystem::path& path, const FeatureTable& table) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCategory::io, "cannot open " + path.string() + " for writing");
    out << "image_id";
    for (const auto& layer : table.layers) out << ',' << layer;
    out << '\n';
    for (const auto& row : table.rows) {
        if (row.values.size() != table.layers.size()) {
            throw Error(ErrorCategory::layer_mismatch, "feature row " + row.image_id + " has wrong length");
        }
        out << row.image_id;
        for (double v : row.values) out << ',' << format_double(v, 9);
        out << '\n';
    }
    if (!out) throw Error(ErrorCategory::io, "write failed: " + path.string());
}

FeatureTable read_features_csv(const std::filesystem::path& path) {
    auto csv = read_csv(path);
    if (csv.header.size() < 2 || csv.header[0] != "image_id") {
        throw Error(ErrorCategory::bad_csv, path.string() + ": header must be image_id,<layer>,...");
    }
    FeatureTable table;
    table.layers.assign(csv.header.begin() + 1, csv.header.end());
    table.rows.reserve(csv.rows.size());
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& fields = csv.rows[r];
        FeatureVector fv{fields[0], {}};
        for (std::size_t j = 1; j < fields.size(); ++j) {
            const double v = parse_double_field(fields[j], path, csv.line_numbers[r]);
            if (v < 0.0) {
                throw Error(ErrorCategory::bad_csv, path.string() + ":" + std::to_string(csv.line_numbers[r]) +
                                                        ": negative distance");
            }
            fv.values.push_back(v);
        }
        table.rows.push_back(std::move(fv));
    }
    return table;
}

} // namespace realism
