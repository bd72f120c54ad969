#include "realism/tensor_io.hpp"

#include "realism/error.hpp"
#include "realism/layers.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace realism {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 4> kMagic = {'A', 'T', 'N', '1'};
constexpr std::uint8_t kDtypeF32 = 0x01;
constexpr std::uint8_t kNdim = 3;

void put_u32(std::uint8_t* dst, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) dst[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint32_t get_u32(const std::uint8_t* src) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(src[i]) << (8 * i);
    return v;
}

void check_finite(std::span<const float> data) {
    auto it = std::find_if(data.begin(), data.end(), [](float x) { return !std::isfinite(x); });
    if (it != data.end()) {
        throw Error(ErrorCategory::non_finite,
                    "non-finite activation at element " + std::to_string(it - data.begin()));
    }
}

} // namespace

ActivationTensor::ActivationTensor(std::string layer_name, TensorShape shape, std::vector<float> data)
    : layer_name_(std::move(layer_name)), shape_(shape), data_(std::move(data)) {
    if (shape_.width == 0 || shape_.height == 0 || shape_.channels == 0) {
        throw Error(ErrorCategory::bad_header, "tensor dimensions must be positive");
    }
    if (data_.size() != shape_.element_count()) {
        throw Error(ErrorCategory::dimension_mismatch,
                    "tensor data has " + std::to_string(data_.size()) + " values, shape implies " +
                        std::to_string(shape_.element_count()));
    }
    check_finite(data_);
}

void encode_tensor(std::ostream& out, TensorShape shape, std::span<const float> data) {
    if (data.size() != shape.element_count()) {
        throw Error(ErrorCategory::dimension_mismatch, "payload size does not match shape");
    }
    check_finite(data);
    std::array<std::uint8_t, kAtnHeaderSize> header{};
    std::copy(kMagic.begin(), kMagic.end(), header.begin());
    header[4] = kDtypeF32;
    header[5] = kNdim;
    put_u32(&header[6], shape.width);
    put_u32(&header[10], shape.height);
    put_u32(&header[14], shape.channels);
    out.write(reinterpret_cast<const char*>(header.data()), header.size());

    std::vector<std::uint8_t> payload(data.size() * 4);
    for (std::size_t i = 0; i < data.size(); ++i) {
        put_u32(&payload[4 * i], std::bit_cast<std::uint32_t>(data[i]));
    }
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out) throw Error(ErrorCategory::io, "write failed");
}

TensorShape decode_tensor_header(std::istream& in) {
    std::array<std::uint8_t, kAtnHeaderSize> header{};
    in.read(reinterpret_cast<char*>(header.data()), header.size());
    if (in.gcount() < 4 || !std::equal(kMagic.begin(), kMagic.end(), header.begin())) {
        throw Error(ErrorCategory::bad_magic, "missing ATN1 magic");
    }
    if (static_cast<std::size_t>(in.gcount()) != header.size()) {
        throw Error(ErrorCategory::truncated, "header shorter than 18 bytes");
    }
    if (header[4] != kDtypeF32) {
        throw Error(ErrorCategory::bad_dtype, "unsupported dtype code " + std::to_string(header[4]));
    }
    if (header[5] != kNdim) {
        throw Error(ErrorCategory::bad_header, "ndim must be 3, got " + std::to_string(header[5]));
    }
    TensorShape shape{get_u32(&header[6]), get_u32(&header[10]), get_u32(&header[14])};
    if (shape.width == 0 || shape.height == 0 || shape.channels == 0) {
        throw Error(ErrorCategory::bad_header, "zero dimension in header");
    }
    return shape;
}

std::vector<float> decode_tensor_payload(std::istream& in, TensorShape shape) {
    const std::size_t n = shape.element_count();
    std::vector<std::uint8_t> raw(n * 4);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
        throw Error(ErrorCategory::truncated, "payload holds " + std::to_string(in.gcount() / 4) +
                                                  " floats, header declares " + std::to_string(n));
    }
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<float>(get_u32(&raw[4 * i]));
    check_finite(data);
    return data;
}

void write_tensor(const fs::path& path, const ActivationTensor& tensor) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCategory::io, "cannot open " + path.string() + " for writing");
    encode_tensor(out, tensor.shape(), tensor.data());
}

namespace {

ActivationTensor load_tensor(const fs::path& path, std::string layer_name) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCategory::io, "cannot open " + path.string());
    try {
        auto shape = decode_tensor_header(in);
        auto data = decode_tensor_payload(in, shape);
        if (in.peek() != std::char_traits<char>::eof()) {
            throw Error(ErrorCategory::bad_header, "trailing bytes after payload");
        }
        return ActivationTensor(std::move(layer_name), shape, std::move(data));
    } catch (const Error& e) {
        throw Error(e.category(), path.string() + ": " + e.what());
    }
}

} // namespace

ActivationTensor read_tensor(const fs::path& path) { return load_tensor(path, path.stem().string()); }

TensorShape read_tensor_shape(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCategory::io, "cannot open " + path.string());
    try {
        return decode_tensor_header(in);
    } catch (const Error& e) {
        throw Error(e.category(), path.string() + ": " + e.what());
    }
}

fs::path bundle_tensor_path(const fs::path& dir, const std::string& image_id, const std::string& layer) {
    auto path = dir / image_id / (layer + ".atn");
    if (!fs::exists(path)) {
        if (auto alias = layer_alias(layer)) {
            auto alt = dir / image_id / (*alias + ".atn");
            if (fs::exists(alt)) return alt;
        }
    }
    return path;
}

ActivationBundle read_bundle(const fs::path& dir, const std::string& image_id,
                             const std::vector<std::string>& layers) {
    ActivationBundle bundle;
    bundle.image_id = image_id;
    bundle.tensors.reserve(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (same_layer(layers[i], layers[j])) {
                throw Error(ErrorCategory::layer_mismatch, "duplicate layer '" + layers[i] + "'");
            }
        }
        auto path = bundle_tensor_path(dir, image_id, layers[i]);
        if (!fs::exists(path)) {
            throw Error(ErrorCategory::io, "missing layer file " + path.string());
        }
        bundle.tensors.push_back(load_tensor(path, layers[i]));
    }
    return bundle;
}

std::vector<std::string> list_bundle_ids(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(ErrorCategory::io, "not a directory: " + dir.string());
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_directory()) ids.push_back(entry.path().filename().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

} // namespace realism
