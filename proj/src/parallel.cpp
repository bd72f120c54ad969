#include "realism/parallel.hpp"

#include "realism/error.hpp"

#include <charconv>
#include <cstdlib>
#include <string>
#include <string_view>

namespace realism {

unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("REALISM_THREADS"); env && *env) {
        std::string_view text(env);
        unsigned value = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc() || ptr != text.data() + text.size()) {
            throw Error(ErrorCategory::bad_config, "REALISM_THREADS must be a non-negative integer");
        }
        if (value > 0) return value;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

} // namespace realism
