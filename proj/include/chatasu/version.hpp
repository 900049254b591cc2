#pragma once

#include <string_view>

#include "json.hpp"

namespace chatasu {

inline constexpr std::string_view kVersion = "0.1.0";

// Versions of this library and of the third-party code compiled into it.
nlohmann::json library_versions();

}  // namespace chatasu
