#include "published.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace testsupport {

namespace {

// Deliberately separate from the library's CSV reader: fixtures here never
// quote, so a plain split keeps the oracle independent.
std::vector<std::vector<std::string>> readLines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    out.push_back(std::move(fields));
  }
  return out;
}

}  // namespace

std::filesystem::path dataDir() { return MAPXTAB_DATA_DIR; }
std::filesystem::path dataFile(const std::string& relative) { return dataDir() / relative; }

std::size_t PercentTable::row(const std::string& label) const {
  for (std::size_t i = 0; i < rowLabels.size(); ++i)
    if (rowLabels[i] == label) return i;
  throw std::runtime_error("no row " + label);
}

std::size_t PercentTable::col(const std::string& label) const {
  for (std::size_t i = 0; i < colLabels.size(); ++i)
    if (colLabels[i] == label) return i;
  throw std::runtime_error("no column " + label);
}

PercentTable readPercentTable(const std::filesystem::path& path) {
  const auto lines = readLines(path);
  PercentTable t;
  const auto& header = lines.at(0);
  if (header.back() != "total") throw std::runtime_error("expected a total column");
  t.colLabels.assign(header.begin() + 1, header.end() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& l = lines[i];
    if (l.size() != header.size()) throw std::runtime_error("ragged line in " + path.string());
    std::vector<double> values;
    for (std::size_t j = 1; j + 1 < l.size(); ++j) values.push_back(std::stod(l[j]));
    if (l[0] == "total") {
      t.colMargins = values;
      if (!l.back().empty()) t.grandTotal = std::stod(l.back());
    } else {
      t.rowLabels.push_back(l[0]);
      t.cells.push_back(values);
      t.rowMargins.push_back(std::stod(l.back()));
    }
  }
  return t;
}

TopKTable readTopK(const std::filesystem::path& path) {
  const auto lines = readLines(path);
  TopKTable t;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& l = lines[i];
    auto& ranked = t[l.at(0)];
    if (static_cast<std::size_t>(std::stoul(l.at(1))) != ranked.size() + 1)
      throw std::runtime_error("ranks out of order in " + path.string());
    ranked.emplace_back(l.at(2), std::stod(l.at(3)));
  }
  return t;
}

TemporalTable readTemporal(const std::filesystem::path& path) {
  const auto lines = readLines(path);
  TemporalTable t;
  const auto& header = lines.at(0);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& l = lines[i];
    TemporalRowPrinted row;
    for (std::size_t j = 1; j < header.size(); ++j) {
      const double v = std::stod(l.at(j));
      if (header[j] == "mean")
        row.mean = v;
      else if (header[j] == "std")
        row.std = v;
      else
        row.series.push_back(v);
    }
    t.order.push_back(l[0]);
    t.rows[l[0]] = row;
  }
  return t;
}

}  // namespace testsupport
