#include "realism/reference_pool.hpp"

#include "realism/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_set>

namespace realism {

namespace fs = std::filesystem;

ReferencePool::ReferencePool(std::string layer_name, std::size_t channels, std::size_t group_count,
                             std::vector<float> vectors, std::size_t source_count, std::uint64_t seed,
                             std::uint32_t grid_width, std::uint32_t grid_height, bool location_matched)
    : layer_name_(std::move(layer_name)),
      channels_(channels),
      group_count_(group_count),
      source_count_(source_count),
      seed_(seed),
      grid_width_(grid_width),
      grid_height_(grid_height),
      location_matched_(location_matched),
      vectors_(std::move(vectors)) {
    if (channels_ == 0 || group_count_ == 0) {
        throw Error(ErrorCategory::bad_header, "pool needs positive channel and group counts");
    }
    if (vectors_.size() % (channels_ * group_count_) != 0) {
        throw Error(ErrorCategory::dimension_mismatch, "pool storage is not a whole number of vectors per group");
    }
    if (static_cast<std::size_t>(grid_width_) * grid_height_ != (location_matched_ ? group_count_ : 1)) {
        throw Error(ErrorCategory::bad_header, "pool grid does not match its group count");
    }
    group_size_ = vectors_.size() / (channels_ * group_count_);
    if (std::any_of(vectors_.begin(), vectors_.end(), [](float x) { return !std::isfinite(x); })) {
        throw Error(ErrorCategory::non_finite, "non-finite value in reference pool");
    }
}

BundleDirSource::BundleDirSource(fs::path dir, std::vector<std::string> image_ids, std::string layer)
    : dir_(std::move(dir)), ids_(std::move(image_ids)), layer_(std::move(layer)) {
    shapes_.reserve(ids_.size());
    for (const auto& id : ids_) {
        auto path = bundle_tensor_path(dir_, id, layer_);
        if (!fs::exists(path)) throw Error(ErrorCategory::io, "missing layer file " + path.string());
        shapes_.push_back(read_tensor_shape(path));
    }
}

ActivationTensor BundleDirSource::load(std::size_t image) const {
    return read_tensor(bundle_tensor_path(dir_, ids_.at(image), layer_));
}

std::vector<std::uint64_t> sample_without_replacement(std::uint64_t population, std::uint64_t count,
                                                      SplitMix64& rng) {
    if (count > population) {
        throw Error(ErrorCategory::bad_config, "cannot draw more samples than the population holds");
    }
    std::unordered_set<std::uint64_t> taken;
    taken.reserve(count);
    std::vector<std::uint64_t> out;
    out.reserve(count);
    for (std::uint64_t j = population - count; j < population; ++j) {
        const std::uint64_t t = rng.below(j + 1);
        const std::uint64_t pick = taken.contains(t) ? j : t;
        taken.insert(pick);
        out.push_back(pick);
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

ActivationTensor load_checked(const TensorSource& source, std::size_t image) {
    auto t = source.load(image);
    if (t.shape() != source.shape(image)) {
        throw Error(ErrorCategory::dimension_mismatch,
                    "tensor for image " + std::to_string(image) + " changed shape between header and load");
    }
    return t;
}

ReferencePool build_pooled(const TensorSource& source, const std::string& layer, const PoolConfig& config,
                           std::size_t channels) {
    const std::size_t n = source.size();
    std::vector<std::uint64_t> offsets(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) offsets[i + 1] = offsets[i] + source.shape(i).locations();
    const std::uint64_t total = offsets[n];

    std::vector<std::uint64_t> picks;
    if (total <= config.pool_cap) {
        picks.resize(total);
        for (std::uint64_t i = 0; i < total; ++i) picks[i] = i;
    } else {
        SplitMix64 rng(config.seed);
        picks = sample_without_replacement(total, config.pool_cap, rng);
    }

    std::vector<float> vectors;
    vectors.reserve(picks.size() * channels);
    auto it = picks.begin();
    for (std::size_t image = 0; image < n && it != picks.end(); ++image) {
        if (*it >= offsets[image + 1]) continue;
        auto tensor = load_checked(source, image);
        for (; it != picks.end() && *it < offsets[image + 1]; ++it) {
            auto v = tensor.location(*it - offsets[image]);
            vectors.insert(vectors.end(), v.begin(), v.end());
        }
    }
    return ReferencePool(layer, channels, 1, std::move(vectors), n, config.seed);
}

ReferencePool build_location_matched(const TensorSource& source, const std::string& layer,
                                     const PoolConfig& config, TensorShape shape) {
    const std::size_t n = source.size();
    for (std::size_t i = 1; i < n; ++i) {
        auto s = source.shape(i);
        if (s.width != shape.width || s.height != shape.height) {
            throw Error(ErrorCategory::dimension_mismatch,
                        "location-matched pools need one spatial grid across all images");
        }
    }
    const std::size_t locations = shape.locations();
    const std::size_t per_location = std::min<std::size_t>(config.pool_cap, n);
    const std::size_t channels = shape.channels;

    // For each image, the (location, slot) pairs it fills.
    std::map<std::size_t, std::vector<std::pair<std::size_t, std::size_t>>> wanted;
    SplitMix64 rng(config.seed);
    for (std::size_t loc = 0; loc < locations; ++loc) {
        std::vector<std::uint64_t> images;
        if (n <= config.pool_cap) {
            images.resize(n);
            for (std::size_t i = 0; i < n; ++i) images[i] = i;
        } else {
            images = sample_without_replacement(n, config.pool_cap, rng);
        }
        for (std::size_t slot = 0; slot < images.size(); ++slot) {
            wanted[images[slot]].emplace_back(loc, slot);
        }
    }

    std::vector<float> vectors(locations * per_location * channels);
    for (const auto& [image, targets] : wanted) {
        auto tensor = load_checked(source, image);
        for (auto [loc, slot] : targets) {
            auto v = tensor.location(loc);
            std::copy(v.begin(), v.end(), vectors.begin() + (loc * per_location + slot) * channels);
        }
    }
    return ReferencePool(layer, channels, locations, std::move(vectors), n, config.seed, shape.width,
                         shape.height, true);
}

} // namespace

ReferencePool build_pool(const TensorSource& source, const std::string& layer, const PoolConfig& config) {
    if (config.pool_cap == 0) throw Error(ErrorCategory::bad_config, "pool cap must be at least 1");
    if (source.size() == 0) throw Error(ErrorCategory::empty_input, "no training tensors for layer " + layer);
    const auto first = source.shape(0);
    for (std::size_t i = 1; i < source.size(); ++i) {
        if (source.shape(i).channels != first.channels) {
            throw Error(ErrorCategory::dimension_mismatch,
                        "layer " + layer + ": image " + std::to_string(i) + " has " +
                            std::to_string(source.shape(i).channels) + " channels, expected " +
                            std::to_string(first.channels));
        }
    }
    return config.location_matched ? build_location_matched(source, layer, config, first)
                                   : build_pooled(source, layer, config, first.channels);
}

namespace {

constexpr std::string_view kPoolMagic = "RPOOL1";

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw Error(ErrorCategory::bad_header, "bad value for pool field '" + key + "': " + value);
    }
    return out;
}

} // namespace

void save_pool(const fs::path& path, const ReferencePool& pool) {
    if (pool.layer_name().find_first_of("\r\n") != std::string::npos) {
        throw Error(ErrorCategory::bad_config, "layer name contains a line break");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCategory::io, "cannot open " + path.string() + " for writing");
    out << kPoolMagic << '\n'
        << "layer=" << pool.layer_name() << '\n'
        << "channels=" << pool.channels() << '\n'
        << "size=" << pool.size() << '\n'
        << "sources=" << pool.source_count() << '\n'
        << "seed=" << pool.seed() << '\n'
        << "mode=" << (pool.location_matched() ? "location" : "pooled") << '\n'
        << "grid=" << pool.grid_width() << 'x' << pool.grid_height() << '\n'
        << '\n';
    TensorShape shape{static_cast<std::uint32_t>(pool.group_count()),
                      static_cast<std::uint32_t>(pool.group_size()),
                      static_cast<std::uint32_t>(pool.channels())};
    if (pool.group_size() == 0) {
        throw Error(ErrorCategory::empty_input, "refusing to save an empty pool");
    }
    encode_tensor(out, shape, pool.all_vectors());
}

ReferencePool load_pool(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCategory::io, "cannot open " + path.string());
    try {
        std::string line;
        if (!std::getline(in, line) || line != kPoolMagic) {
            throw Error(ErrorCategory::bad_magic, "missing RPOOL1 magic");
        }
        std::map<std::string, std::string> fields;
        while (std::getline(in, line) && !line.empty()) {
            auto eq = line.find('=');
            if (eq == std::string::npos) throw Error(ErrorCategory::bad_header, "malformed header line: " + line);
            fields[line.substr(0, eq)] = line.substr(eq + 1);
        }
        if (!in) throw Error(ErrorCategory::truncated, "pool header not terminated");
        for (const char* key : {"layer", "channels", "size", "sources", "seed", "mode", "grid"}) {
            if (!fields.contains(key)) throw Error(ErrorCategory::bad_header, std::string("missing pool field ") + key);
        }
        const auto channels = parse_number<std::size_t>("channels", fields["channels"]);
        const auto size = parse_number<std::size_t>("size", fields["size"]);
        const auto sources = parse_number<std::size_t>("sources", fields["sources"]);
        const auto seed = parse_number<std::uint64_t>("seed", fields["seed"]);
        const auto& grid = fields["grid"];
        auto x = grid.find('x');
        if (x == std::string::npos) throw Error(ErrorCategory::bad_header, "bad grid field: " + grid);
        const auto gw = parse_number<std::uint32_t>("grid", grid.substr(0, x));
        const auto gh = parse_number<std::uint32_t>("grid", grid.substr(x + 1));
        const auto& mode = fields["mode"];
        if (mode != "pooled" && mode != "location") throw Error(ErrorCategory::bad_header, "bad mode: " + mode);

        auto shape = decode_tensor_header(in);
        if (shape.channels != channels || shape.element_count() != size * channels) {
            throw Error(ErrorCategory::bad_header, "pool header disagrees with payload shape");
        }
        auto data = decode_tensor_payload(in, shape);
        if (in.peek() != std::char_traits<char>::eof()) {
            throw Error(ErrorCategory::bad_header, "trailing bytes after payload");
        }
        return ReferencePool(fields["layer"], channels, shape.width, std::move(data), sources, seed, gw, gh,
                             mode == "location");
    } catch (const Error& e) {
        throw Error(e.category(), path.string() + ": " + e.what());
    }
}

} // namespace realism
