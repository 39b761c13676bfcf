#include "mapxtab/legend.hpp"

#include <algorithm>
#include <charconv>
#include <limits>

#include "mapxtab/csv.hpp"
#include "mapxtab/error.hpp"

namespace mapxtab {

namespace {

ClassCode parseCode(const std::string& text, const std::string& where) {
  std::uint64_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || value > std::numeric_limits<ClassCode>::max())
    throw ValidationError(where + ": invalid class code '" + text + "'");
  return static_cast<ClassCode>(value);
}

void requireHeader(const std::vector<csv::Row>& rows, const std::vector<std::string>& expected,
                   const std::filesystem::path& path) {
  if (rows.empty()) throw ValidationError(path.string() + ": empty file");
  if (rows.front() != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    throw ValidationError(path.string() + ": expected header '" + want + "'");
  }
}

void requireSameLegend(const Legend& a, const Legend& b, const char* what) {
  if (!a.sameClasses(b))
    throw ValidationError(std::string("legend mismatch: ") + what + " ('" + a.id() + "' vs '" +
                          b.id() + "')");
}

}  // namespace

Legend::Legend(std::string id, std::vector<LegendClass> classes)
    : id_(std::move(id)), classes_(std::move(classes)) {
  if (classes_.empty()) throw ValidationError("legend '" + id_ + "' is empty");
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const auto& c = classes_[i];
    if (c.acronym.empty())
      throw ValidationError("legend '" + id_ + "': empty acronym for code " +
                            std::to_string(c.code));
    if (!byCode_.emplace(c.code, i).second)
      throw ValidationError("legend '" + id_ + "': duplicate code " + std::to_string(c.code));
    if (!byAcronym_.emplace(c.acronym, i).second)
      throw ValidationError("legend '" + id_ + "': duplicate acronym '" + c.acronym + "'");
  }
}

std::optional<std::size_t> Legend::indexOfCode(ClassCode code) const {
  const auto it = byCode_.find(code);
  if (it == byCode_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Legend::indexOfAcronym(std::string_view acronym) const {
  const auto it = byAcronym_.find(std::string(acronym));
  if (it == byAcronym_.end()) return std::nullopt;
  return it->second;
}

std::size_t Legend::requireAcronym(std::string_view acronym) const {
  if (auto index = indexOfAcronym(acronym)) return *index;
  throw ValidationError("unknown acronym '" + std::string(acronym) + "' in legend '" + id_ + "'");
}

std::size_t Legend::requireCode(ClassCode code) const {
  if (auto index = indexOfCode(code)) return *index;
  throw ValidationError("unknown code " + std::to_string(code) + " in legend '" + id_ + "'");
}

CodeLookup::CodeLookup(const Legend& legend) {
  ClassCode maxCode = 0;
  for (const auto& c : legend.classes()) maxCode = std::max(maxCode, c.code);
  if (maxCode < (1u << 16)) {
    dense_.assign(static_cast<std::size_t>(maxCode) + 1, kAbsent);
    for (std::size_t i = 0; i < legend.size(); ++i)
      dense_[legend[i].code] = static_cast<std::int32_t>(i);
  } else {
    for (std::size_t i = 0; i < legend.size(); ++i)
      sparse_.emplace(legend[i].code, static_cast<std::int32_t>(i));
  }
}

LegendPtr loadLegend(const std::filesystem::path& path) {
  const auto rows = csv::readFile(path);
  requireHeader(rows, {"code", "acronym", "name"}, path);
  std::vector<LegendClass> classes;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != 3)
      throw ValidationError(path.string() + ": line " + std::to_string(i + 1) +
                            ": expected 3 fields");
    classes.push_back({parseCode(row[0], path.string()), row[1], row[2]});
  }
  if (classes.empty()) throw ValidationError(path.string() + ": empty file");
  return std::make_shared<const Legend>(path.stem().string(), std::move(classes));
}

// AggregationMap ------------------------------------------------------------

AggregationMap::AggregationMap(LegendPtr source, LegendPtr target,
                               std::vector<std::size_t> targetOfSource)
    : source_(std::move(source)), target_(std::move(target)), targetOf_(std::move(targetOfSource)) {
  if (targetOf_.size() != source_->size())
    throw ValidationError("aggregation: mapping is not totally exhaustive");
  std::vector<bool> hit(target_->size(), false);
  for (const auto t : targetOf_) {
    if (t >= target_->size()) throw ValidationError("aggregation: target index out of range");
    hit[t] = true;
  }
  for (std::size_t t = 0; t < hit.size(); ++t)
    if (!hit[t])
      throw ValidationError("aggregation: target class '" + (*target_)[t].acronym +
                            "' has no preimage");
}

AggregationMap AggregationMap::identity(LegendPtr legend) {
  std::vector<std::size_t> map(legend->size());
  for (std::size_t i = 0; i < map.size(); ++i) map[i] = i;
  return AggregationMap(legend, legend, std::move(map));
}

std::vector<std::size_t> AggregationMap::preimage(std::size_t targetIndex) const {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < targetOf_.size(); ++s)
    if (targetOf_[s] == targetIndex) out.push_back(s);
  return out;
}

AggregationMap buildAggregation(LegendPtr source, LegendPtr target,
                                std::span<const std::pair<ClassCode, ClassCode>> groups) {
  constexpr auto kUnset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> map(source->size(), kUnset);
  for (const auto& [from, to] : groups) {
    const auto s = source->requireCode(from);
    const auto t = target->requireCode(to);
    if (map[s] != kUnset)
      throw ValidationError("aggregation not mutually exclusive: source class '" +
                            (*source)[s].acronym + "' assigned twice");
    map[s] = t;
  }
  for (std::size_t s = 0; s < map.size(); ++s)
    if (map[s] == kUnset)
      throw ValidationError("aggregation not totally exhaustive: source class '" +
                            (*source)[s].acronym + "' is not mapped");
  return AggregationMap(std::move(source), std::move(target), std::move(map));
}

AggregationMap loadAggregation(const std::filesystem::path& path, LegendPtr source,
                               LegendPtr target) {
  const auto rows = csv::readFile(path);
  requireHeader(rows, {"source_acronym", "target_acronym"}, path);
  std::vector<std::pair<ClassCode, ClassCode>> groups;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != 2)
      throw ValidationError(path.string() + ": line " + std::to_string(i + 1) +
                            ": expected 2 fields");
    groups.emplace_back((*source)[source->requireAcronym(row[0])].code,
                        (*target)[target->requireAcronym(row[1])].code);
  }
  return buildAggregation(std::move(source), std::move(target), groups);
}

// BinaryRelation ------------------------------------------------------------

BinaryRelation::BinaryRelation(LegendPtr test, LegendPtr reference, std::vector<Pair> pairs)
    : test_(std::move(test)),
      reference_(std::move(reference)),
      pairs_(std::move(pairs)),
      mask_(test_->size() * reference_->size(), false) {
  for (const auto& [t, r] : pairs_) {
    if (t >= test_->size() || r >= reference_->size())
      throw ValidationError("relation: pair index out of range");
    const auto cell = t * reference_->size() + r;
    if (mask_[cell])
      throw ValidationError("relation: duplicate pair (" + (*test_)[t].acronym + ", " +
                            (*reference_)[r].acronym + ")");
    mask_[cell] = true;
  }
  std::sort(pairs_.begin(), pairs_.end());
}

BinaryRelation BinaryRelation::full(LegendPtr test, LegendPtr reference) {
  std::vector<Pair> pairs;
  for (std::size_t t = 0; t < test->size(); ++t)
    for (std::size_t r = 0; r < reference->size(); ++r) pairs.emplace_back(t, r);
  return BinaryRelation(std::move(test), std::move(reference), std::move(pairs));
}

std::vector<std::pair<ClassCode, ClassCode>> BinaryRelation::codePairs() const {
  std::vector<std::pair<ClassCode, ClassCode>> out;
  out.reserve(pairs_.size());
  for (const auto& [t, r] : pairs_) out.emplace_back((*test_)[t].code, (*reference_)[r].code);
  return out;
}

BinaryRelation BinaryRelation::withPair(std::size_t testIndex, std::size_t referenceIndex) const {
  auto pairs = pairs_;
  if (!contains(testIndex, referenceIndex)) pairs.emplace_back(testIndex, referenceIndex);
  return BinaryRelation(test_, reference_, std::move(pairs));
}

BinaryRelation loadRelation(const std::filesystem::path& path, LegendPtr test,
                            LegendPtr reference) {
  const auto rows = csv::readFile(path);
  requireHeader(rows, {"test_acronym", "reference_acronym"}, path);
  std::vector<BinaryRelation::Pair> pairs;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != 2)
      throw ValidationError(path.string() + ": line " + std::to_string(i + 1) +
                            ": expected 2 fields");
    pairs.emplace_back(test->requireAcronym(row[0]), reference->requireAcronym(row[1]));
  }
  return BinaryRelation(std::move(test), std::move(reference), std::move(pairs));
}

BinaryRelation pushRelation(const BinaryRelation& relation, const AggregationMap* aggTest,
                            const AggregationMap* aggReference) {
  if (aggTest) requireSameLegend(aggTest->source(), relation.test(), "test aggregation source");
  if (aggReference)
    requireSameLegend(aggReference->source(), relation.reference(),
                      "reference aggregation source");

  LegendPtr test = aggTest ? aggTest->targetPtr() : relation.testPtr();
  LegendPtr reference = aggReference ? aggReference->targetPtr() : relation.referencePtr();
  std::vector<bool> seen(test->size() * reference->size(), false);
  std::vector<BinaryRelation::Pair> pairs;
  for (const auto& [t, r] : relation.pairs()) {
    const auto t2 = aggTest ? aggTest->targetIndex(t) : t;
    const auto r2 = aggReference ? aggReference->targetIndex(r) : r;
    const auto cell = t2 * reference->size() + r2;
    if (seen[cell]) continue;
    seen[cell] = true;
    pairs.emplace_back(t2, r2);
  }
  return BinaryRelation(std::move(test), std::move(reference), std::move(pairs));
}

}  // namespace mapxtab
