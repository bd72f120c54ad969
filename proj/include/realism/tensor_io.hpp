#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace realism {

/// Shape of a single-layer activation map. Values are stored with the
/// channel index innermost: offset(u, v, c) = (u * height + v) * channels + c.
struct TensorShape {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t channels = 0;

    std::size_t locations() const noexcept {
        return static_cast<std::size_t>(width) * height;
    }
    std::size_t element_count() const noexcept { return locations() * channels; }

    friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

/// One layer's activations for one image. Immutable once constructed; the
/// constructor enforces the size and finiteness invariants.
class ActivationTensor {
public:
    ActivationTensor() = default;
    ActivationTensor(std::string layer_name, TensorShape shape, std::vector<float> data);

    const std::string& layer_name() const noexcept { return layer_name_; }
    const TensorShape& shape() const noexcept { return shape_; }
    std::span<const float> data() const noexcept { return data_; }

    /// Channel vector at spatial location (u, v).
    std::span<const float> at(std::size_t u, std::size_t v) const noexcept {
        return std::span<const float>(data_).subspan(
            (u * shape_.height + v) * shape_.channels, shape_.channels);
    }
    /// Channel vector at flat location index u * height + v.
    std::span<const float> location(std::size_t index) const noexcept {
        return std::span<const float>(data_).subspan(index * shape_.channels,
                                                     shape_.channels);
    }

    friend bool operator==(const ActivationTensor&, const ActivationTensor&) = default;

private:
    std::string layer_name_;
    TensorShape shape_;
    std::vector<float> data_;
};

struct ActivationBundle {
    std::string image_id;
    std::vector<ActivationTensor> tensors;
};

inline constexpr std::size_t kAtnHeaderSize = 18;

// Stream-level codec, reused by the pool file format.
void encode_tensor(std::ostream& out, TensorShape shape, std::span<const float> data);
TensorShape decode_tensor_header(std::istream& in);
std::vector<float> decode_tensor_payload(std::istream& in, TensorShape shape);

void write_tensor(const std::filesystem::path& path, const ActivationTensor& tensor);

/// Layer name is taken from the file stem.
ActivationTensor read_tensor(const std::filesystem::path& path);

/// Reads only the fixed-size header; does not validate the payload.
TensorShape read_tensor_shape(const std::filesystem::path& path);

/// `<dir>/<image_id>/<layer>.atn`, falling back to a known alias of `layer`
/// when the exact file does not exist.
std::filesystem::path bundle_tensor_path(const std::filesystem::path& dir,
                                         const std::string& image_id,
                                         const std::string& layer);

ActivationBundle read_bundle(const std::filesystem::path& dir, const std::string& image_id,
                             const std::vector<std::string>& layers);

/// Image ids (subdirectory names) under a bundle directory, sorted.
std::vector<std::string> list_bundle_ids(const std::filesystem::path& dir);

} // namespace realism
