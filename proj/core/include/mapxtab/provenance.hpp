#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace mapxtab {

/// Version string embedded in every report.
std::string_view toolVersion();

/// Lower-case hex SHA-256 of a file, read in fixed-size chunks.
std::string sha256File(const std::filesystem::path& path);
std::string sha256Hex(std::string_view bytes);

/// UTC time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utcTimestamp();

}  // namespace mapxtab
