#include "realism/layers.hpp"

#include "realism/error.hpp"

namespace realism {

namespace {
constexpr std::string_view kPrintedFirst = "Conv2d_1a_3x";
constexpr std::string_view kFullFirst = "Conv2d_1a_3x3";
} // namespace

std::vector<std::string> default_layers() {
    return {std::string(kPrintedFirst), "Conv2d_2b_3x3", "Conv2d_3b_1x1", "Mixed_5d",
            "Mixed_6e", "Mixed_7c", "FC"};
}

std::optional<std::string> layer_alias(std::string_view name) {
    if (name == kPrintedFirst) return std::string(kFullFirst);
    if (name == kFullFirst) return std::string(kPrintedFirst);
    return std::nullopt;
}

bool same_layer(std::string_view a, std::string_view b) {
    if (a == b) return true;
    auto alias = layer_alias(a);
    return alias && *alias == b;
}

std::vector<std::string> parse_layer_list(std::string_view list) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= list.size()) {
        auto end = list.find(',', start);
        if (end == std::string_view::npos) end = list.size();
        auto item = list.substr(start, end - start);
        while (!item.empty() && (item.front() == ' ' || item.front() == '\t')) item.remove_prefix(1);
        while (!item.empty() && (item.back() == ' ' || item.back() == '\t')) item.remove_suffix(1);
        if (item.empty()) {
            throw Error(ErrorCategory::bad_config, "empty layer name in list '" + std::string(list) + "'");
        }
        out.emplace_back(item);
        start = end + 1;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t j = i + 1; j < out.size(); ++j) {
            if (same_layer(out[i], out[j])) {
                throw Error(ErrorCategory::bad_config, "duplicate layer '" + out[j] + "'");
            }
        }
    }
    return out;
}

} // namespace realism
