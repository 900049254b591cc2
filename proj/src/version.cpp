#include "chatasu/version.hpp"

#include <string>

#include <fmt/format.h>
#include <httplib.h>
#include <openssl/opensslv.h>
#include <toml.hpp>
#include <unicode/uvernum.h>
#include <boost/version.hpp>

namespace chatasu {

nlohmann::json library_versions() {
  return {
      {"chatasu", std::string(kVersion)},
      {"fmt", fmt::format("{}.{}.{}", FMT_VERSION / 10000, FMT_VERSION / 100 % 100, FMT_VERSION % 100)},
      {"icu", U_ICU_VERSION},
      {"openssl", OPENSSL_VERSION_TEXT},
      {"boost", BOOST_LIB_VERSION},
      {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                    NLOHMANN_JSON_VERSION_PATCH)},
      {"tomlplusplus", fmt::format("{}.{}.{}", TOML_LIB_MAJOR, TOML_LIB_MINOR, TOML_LIB_PATCH)},
      {"cpp-httplib", CPPHTTPLIB_VERSION},
  };
}

}  // namespace chatasu
