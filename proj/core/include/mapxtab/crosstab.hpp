#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mapxtab/legend.hpp"
#include "mapxtab/raster.hpp"

namespace mapxtab {

/// Overlapping-area matrix: dense test x reference pixel counts. Rows follow
/// the test legend order, columns the reference legend order.
class CrossTab {
 public:
  CrossTab(LegendPtr test, LegendPtr reference, std::vector<std::uint64_t> counts,
           std::uint64_t excludedTotal = 0);

  /// All-zero table.
  static CrossTab zero(LegendPtr test, LegendPtr reference);

  const Legend& test() const noexcept { return *test_; }
  const Legend& reference() const noexcept { return *reference_; }
  const LegendPtr& testPtr() const noexcept { return test_; }
  const LegendPtr& referencePtr() const noexcept { return reference_; }

  std::size_t rows() const noexcept { return test_->size(); }
  std::size_t cols() const noexcept { return reference_->size(); }

  std::uint64_t count(std::size_t t, std::size_t r) const { return counts_[t * cols() + r]; }
  std::span<const std::uint64_t> counts() const noexcept { return counts_; }

  std::uint64_t validTotal() const noexcept { return validTotal_; }
  std::uint64_t excludedTotal() const noexcept { return excludedTotal_; }

  /// counts[t][r] / validTotal; 0 when the table is empty.
  double proportion(std::size_t t, std::size_t r) const;

  std::vector<std::uint64_t> rowSums() const;
  std::vector<std::uint64_t> colSums() const;

  /// Same classes, counts and totals.
  bool operator==(const CrossTab& other) const;

 private:
  LegendPtr test_;
  LegendPtr reference_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t validTotal_ = 0;
  std::uint64_t excludedTotal_ = 0;
};

/// Everything a tally needs besides the pixels: legends and nodata codes.
/// A null `strata` legend means unstratified.
struct TallyLayout {
  LegendPtr test;
  LegendPtr reference;
  LegendPtr strata;
  ClassCode testNodata = 0;
  ClassCode referenceNodata = 0;
  ClassCode strataNodata = 0;
};

/// Mergeable running tally. Unstratified accumulators hold one slot;
/// stratified ones hold one slot per stratum class plus a final slot for
/// pixels whose stratum is nodata. Merge is commutative and associative and a
/// fresh accumulator is its identity.
class TallyAccumulator {
 public:
  explicit TallyAccumulator(TallyLayout layout);

  const TallyLayout& layout() const noexcept { return layout_; }
  bool stratified() const noexcept { return layout_.strata != nullptr; }
  std::size_t slotCount() const noexcept { return excluded_.size(); }
  std::size_t nodataSlot() const noexcept { return slotCount() - 1; }

  std::span<const std::uint64_t> slotCounts(std::size_t slot) const;
  std::uint64_t slotExcluded(std::size_t slot) const { return excluded_.at(slot); }

  std::uint64_t validTotal() const noexcept;
  std::uint64_t excludedTotal() const noexcept;

  /// Tallies one pixel window. Spans are row-major over the same window;
  /// `strata` is empty when unstratified.
  void tally(std::span<const ClassCode> test, std::span<const ClassCode> reference,
             std::span<const ClassCode> strata);

  /// Elementwise sum; throws ValidationError on a layout mismatch.
  void merge(const TallyAccumulator& other);

  /// All slots summed.
  CrossTab total() const;
  /// One stratified slot as a table (slot == nodataSlot() gives the pixels
  /// whose stratum is nodata).
  CrossTab slot(std::size_t index) const;

  bool operator==(const TallyAccumulator& other) const;

 private:
  struct Lookups;

  TallyLayout layout_;
  std::shared_ptr<const Lookups> lookups_;
  std::size_t cells_ = 0;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> excluded_;
};

/// Tile-level wrapper: the tiles must cover the identical window.
TallyAccumulator tallyTile(const Tile& test, const Tile& reference, const Tile* strata,
                           TallyAccumulator acc);

TallyAccumulator merge(TallyAccumulator a, const TallyAccumulator& b);

struct StratumSet {
  CategoricalRaster raster;
  LegendPtr legend;
};

struct StreamOptions {
  std::uint32_t tileWidth = kDefaultTileSize;
  std::uint32_t tileHeight = kDefaultTileSize;
  /// Worker threads; each holds its own tile buffers and accumulator.
  unsigned threads = 1;
};

struct StratifiedResult {
  /// One table per stratum class, in strata legend order.
  std::vector<CrossTab> perStratum;
  /// Pixels with a nodata stratum.
  CrossTab nodataStratum;
};

struct StreamResult {
  CrossTab total;
  std::optional<StratifiedResult> strata;
  std::uint64_t tilesProcessed = 0;
};

/// One pass over the tile grid. The result does not depend on tile size,
/// tile order or thread count.
StreamResult crosstabStreamed(const CategoricalRaster& test, const CategoricalRaster& reference,
                              const StratumSet* strata = nullptr, const StreamOptions& options = {});

/// Sums counts over preimages of the given aggregations (null = unchanged).
CrossTab aggregateCrossTab(const CrossTab& ct, const AggregationMap* rows,
                           const AggregationMap* cols);

// Serialization: header row of reference acronyms, first column of test
// acronyms.

std::string crossTabCountsCsv(const CrossTab& ct);
/// Proportions as percentages, two decimals, half-up.
std::string crossTabPercentCsv(const CrossTab& ct);
void writeCrossTabCsv(const std::filesystem::path& path, const CrossTab& ct, bool percent);

/// Reads an integer-count table written by crossTabCountsCsv. Acronyms are
/// resolved against the legends and may appear in any order.
CrossTab readCrossTabCsv(const std::filesystem::path& path, LegendPtr test, LegendPtr reference);

}  // namespace mapxtab
