#pragma once

#include <filesystem>
#include <optional>

namespace ihp {

inline constexpr const char* kDataRootEnv = "IHP_DATA_ROOT";

/// Value of IHP_DATA_ROOT, if set and non-empty.
std::optional<std::filesystem::path> data_root();

/// Relative paths are taken against the data root when one is configured.
std::filesystem::path resolve_data_path(const std::filesystem::path& path);

}  // namespace ihp
