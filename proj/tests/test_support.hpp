#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "pvdelay/config.hpp"

namespace pvdelay::testing {

inline std::filesystem::path source_dir() {
  if (const char* dir = std::getenv("PVDELAY_SOURCE_DIR")) return dir;
#ifdef PVDELAY_SOURCE_DIR_DEFAULT
  return PVDELAY_SOURCE_DIR_DEFAULT;
#else
  return std::filesystem::current_path();
#endif
}

inline std::filesystem::path default_config_path() { return source_dir() / "config" / "default.json"; }

inline config::Config default_config() { return config::load(default_config_path()); }

}  // namespace pvdelay::testing
