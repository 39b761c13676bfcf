#include "mapxtab/csv.hpp"

#include <fstream>

#include "mapxtab/error.hpp"

namespace mapxtab::csv {

namespace {

std::string trimmed(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::vector<Row> parse(std::istream& in) {
  std::vector<Row> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trimmed(line).empty() || line.front() == '#') continue;

    Row row;
    std::string field;
    bool quoted = false;
    bool wasQuoted = false;
    for (std::size_t i = 0;; ++i) {
      if (i == line.size()) {
        if (!quoted) break;
        // Quoted field spanning lines.
        std::string next;
        if (!std::getline(in, next)) throw ValidationError("csv: unterminated quoted field");
        if (!next.empty() && next.back() == '\r') next.pop_back();
        field += '\n';
        line += '\n';
        line += next;
        continue;
      }
      const char c = line[i];
      if (quoted) {
        if (c == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            field += '"';
            ++i;
          } else {
            quoted = false;
          }
        } else {
          field += c;
        }
      } else if (c == '"') {
        quoted = true;
        wasQuoted = true;
      } else if (c == ',') {
        row.push_back(wasQuoted ? field : trimmed(field));
        field.clear();
        wasQuoted = false;
      } else {
        field += c;
      }
    }
    row.push_back(wasQuoted ? field : trimmed(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<Row> readFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse(in);
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string joinRow(const Row& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    out += escape(row[i]);
  }
  return out;
}

std::map<std::string, std::string> readKeyValues(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<std::string, std::string> values;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto text = trimmed(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ValidationError(path.string() + ":" + std::to_string(number) + ": expected key = value");
    const auto key = trimmed(text.substr(0, eq));
    if (!values.emplace(key, trimmed(text.substr(eq + 1))).second)
      throw ValidationError(path.string() + ":" + std::to_string(number) + ": repeated key '" +
                            key + "'");
  }
  return values;
}

}  // namespace mapxtab::csv
