#pragma once

#include <filesystem>
#include <map>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace mapxtab::csv {

using Row = std::vector<std::string>;

/// Comma-separated records with RFC 4180 quoting. Blank lines and lines whose
/// first character is '#' are skipped, so fixture files can carry comments.
std::vector<Row> parse(std::istream& in);

/// Throws IoError when the file cannot be opened.
std::vector<Row> readFile(const std::filesystem::path& path);

/// Quotes a field when it contains a comma, quote or newline.
std::string escape(std::string_view field);

std::string joinRow(const Row& row);

/// `key = value` lines with '#' comments, as used by sidecar files. Throws
/// ValidationError on a line without '=' or a repeated key.
std::map<std::string, std::string> readKeyValues(const std::filesystem::path& path);

}  // namespace mapxtab::csv
