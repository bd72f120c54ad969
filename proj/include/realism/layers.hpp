#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace realism {

/// The seven Inception-V3 layers used by default. The first name is kept as
/// "Conv2d_1a_3x" for compatibility with published configurations; its full
/// name "Conv2d_1a_3x3" is accepted as an alias everywhere a layer is looked up.
std::vector<std::string> default_layers();

/// The other spelling of `name` if it has one.
std::optional<std::string> layer_alias(std::string_view name);

bool same_layer(std::string_view a, std::string_view b);

/// Splits "a,b,c" into names, trimming whitespace; empty entries are rejected.
std::vector<std::string> parse_layer_list(std::string_view list);

} // namespace realism
