#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mapxtab {

/// Unsigned class code as stored in a raster.
using ClassCode = std::uint32_t;

struct LegendClass {
  ClassCode code = 0;
  std::string acronym;
  std::string name;

  bool operator==(const LegendClass&) const = default;
};

/// Ordered class dictionary of one map. Order fixes the row/column order of
/// every cross-tabulation built on it. Codes and acronyms are unique.
class Legend {
 public:
  Legend(std::string id, std::vector<LegendClass> classes);

  const std::string& id() const noexcept { return id_; }
  std::size_t size() const noexcept { return classes_.size(); }
  const LegendClass& operator[](std::size_t index) const { return classes_[index]; }
  std::span<const LegendClass> classes() const noexcept { return classes_; }

  std::optional<std::size_t> indexOfCode(ClassCode code) const;
  std::optional<std::size_t> indexOfAcronym(std::string_view acronym) const;

  /// Throws ValidationError naming the legend when the acronym is unknown.
  std::size_t requireAcronym(std::string_view acronym) const;
  std::size_t requireCode(ClassCode code) const;

  /// Same classes in the same order; the id is not compared.
  bool sameClasses(const Legend& other) const noexcept { return classes_ == other.classes_; }

 private:
  std::string id_;
  std::vector<LegendClass> classes_;
  std::unordered_map<ClassCode, std::size_t> byCode_;
  std::unordered_map<std::string, std::size_t> byAcronym_;
};

using LegendPtr = std::shared_ptr<const Legend>;

/// Code -> legend index lookup tuned for the per-pixel hot loop: a flat table
/// when every code fits in 16 bits, a hash map otherwise.
class CodeLookup {
 public:
  static constexpr std::int32_t kAbsent = -1;

  CodeLookup() = default;
  explicit CodeLookup(const Legend& legend);

  std::int32_t operator()(ClassCode code) const noexcept {
    if (!dense_.empty()) return code < dense_.size() ? dense_[code] : kAbsent;
    const auto it = sparse_.find(code);
    return it == sparse_.end() ? kAbsent : it->second;
  }

 private:
  std::vector<std::int32_t> dense_;
  std::unordered_map<ClassCode, std::int32_t> sparse_;
};

/// Reads `code,acronym,name` CSV (header row required). The legend id is the
/// file stem.
LegendPtr loadLegend(const std::filesystem::path& path);

/// Total many-to-one function from the classes of `source` onto the classes of
/// `target`; every target class has at least one preimage.
class AggregationMap {
 public:
  AggregationMap(LegendPtr source, LegendPtr target, std::vector<std::size_t> targetOfSource);

  static AggregationMap identity(LegendPtr legend);

  const Legend& source() const noexcept { return *source_; }
  const Legend& target() const noexcept { return *target_; }
  const LegendPtr& sourcePtr() const noexcept { return source_; }
  const LegendPtr& targetPtr() const noexcept { return target_; }

  std::size_t targetIndex(std::size_t sourceIndex) const { return targetOf_.at(sourceIndex); }
  std::vector<std::size_t> preimage(std::size_t targetIndex) const;

 private:
  LegendPtr source_;
  LegendPtr target_;
  std::vector<std::size_t> targetOf_;
};

/// Validates that `groups` (source code, target code) is mutually exclusive
/// and totally exhaustive over the source legend.
AggregationMap buildAggregation(LegendPtr source, LegendPtr target,
                                std::span<const std::pair<ClassCode, ClassCode>> groups);

/// Reads `source_acronym,target_acronym` CSV.
AggregationMap loadAggregation(const std::filesystem::path& path, LegendPtr source,
                               LegendPtr target);

/// Set of (test class, reference class) pairs counted as agreement. Pairs are
/// held as legend indices and kept sorted.
class BinaryRelation {
 public:
  using Pair = std::pair<std::size_t, std::size_t>;

  BinaryRelation(LegendPtr test, LegendPtr reference, std::vector<Pair> pairs);

  /// Every pair of A x B.
  static BinaryRelation full(LegendPtr test, LegendPtr reference);

  const Legend& test() const noexcept { return *test_; }
  const Legend& reference() const noexcept { return *reference_; }
  const LegendPtr& testPtr() const noexcept { return test_; }
  const LegendPtr& referencePtr() const noexcept { return reference_; }

  std::span<const Pair> pairs() const noexcept { return pairs_; }
  std::size_t size() const noexcept { return pairs_.size(); }
  bool contains(std::size_t testIndex, std::size_t referenceIndex) const {
    return mask_[testIndex * reference_->size() + referenceIndex];
  }

  /// Pairs as class codes, in stored order.
  std::vector<std::pair<ClassCode, ClassCode>> codePairs() const;

  BinaryRelation withPair(std::size_t testIndex, std::size_t referenceIndex) const;

 private:
  LegendPtr test_;
  LegendPtr reference_;
  std::vector<Pair> pairs_;
  std::vector<bool> mask_;
};

/// Reads `test_acronym,reference_acronym` CSV. An empty pair list is legal.
BinaryRelation loadRelation(const std::filesystem::path& path, LegendPtr test, LegendPtr reference);

/// Re-expresses a relation over aggregated legends: (a', b') is present iff
/// some input pair maps onto it. A null aggregation leaves that side as is.
BinaryRelation pushRelation(const BinaryRelation& relation, const AggregationMap* aggTest,
                            const AggregationMap* aggReference);

}  // namespace mapxtab
