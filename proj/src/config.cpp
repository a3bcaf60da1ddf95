#include "ihp/config.hpp"

#include <cstdlib>

namespace ihp {

std::optional<std::filesystem::path> data_root() {
  const char* v = std::getenv(kDataRootEnv);
  if (!v || !*v) return std::nullopt;
  return std::filesystem::path(v);
}

std::filesystem::path resolve_data_path(const std::filesystem::path& path) {
  if (path.empty() || path.is_absolute()) return path;
  if (const auto root = data_root()) return *root / path;
  return path;
}

}  // namespace ihp
