#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace realism {

/// Failure categories. The CLI prints the category name verbatim so that
/// callers can dispatch on it without parsing the message.
enum class ErrorCategory {
    io,
    bad_magic,
    bad_dtype,
    bad_header,
    truncated,
    non_finite,
    dimension_mismatch,
    layer_mismatch,
    id_mismatch,
    empty_input,
    single_class,
    too_few_images,
    constant_input,
    bad_config,
    bad_csv,
};

constexpr std::string_view category_name(ErrorCategory c) noexcept {
    switch (c) {
    case ErrorCategory::io: return "io";
    case ErrorCategory::bad_magic: return "bad-magic";
    case ErrorCategory::bad_dtype: return "bad-dtype";
    case ErrorCategory::bad_header: return "bad-header";
    case ErrorCategory::truncated: return "truncated";
    case ErrorCategory::non_finite: return "non-finite";
    case ErrorCategory::dimension_mismatch: return "dimension-mismatch";
    case ErrorCategory::layer_mismatch: return "layer-mismatch";
    case ErrorCategory::id_mismatch: return "id-mismatch";
    case ErrorCategory::empty_input: return "empty-input";
    case ErrorCategory::single_class: return "single-class";
    case ErrorCategory::too_few_images: return "too-few-images";
    case ErrorCategory::constant_input: return "constant-input";
    case ErrorCategory::bad_config: return "bad-config";
    case ErrorCategory::bad_csv: return "bad-csv";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

} // namespace realism
