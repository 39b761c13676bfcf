#include "mapxtab/crosstab.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "mapxtab/csv.hpp"
#include "mapxtab/error.hpp"
#include "mapxtab/percent.hpp"

namespace mapxtab {

namespace {

bool sameLegend(const LegendPtr& a, const LegendPtr& b) {
  if (!a || !b) return a == b;
  return a == b || a->sameClasses(*b);
}

void requireLegend(const CategoricalRaster& raster, const char* role) {
  if (!raster.legend())
    throw ValidationError(std::string(role) + " raster has no legend attached");
}

}  // namespace

// CrossTab -------------------------------------------------------------------

CrossTab::CrossTab(LegendPtr test, LegendPtr reference, std::vector<std::uint64_t> counts,
                   std::uint64_t excludedTotal)
    : test_(std::move(test)),
      reference_(std::move(reference)),
      counts_(std::move(counts)),
      excludedTotal_(excludedTotal) {
  if (counts_.size() != test_->size() * reference_->size())
    throw ValidationError("cross-tab: expected " +
                          std::to_string(test_->size() * reference_->size()) + " cells, got " +
                          std::to_string(counts_.size()));
  validTotal_ = std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

CrossTab CrossTab::zero(LegendPtr test, LegendPtr reference) {
  const auto cells = test->size() * reference->size();
  return CrossTab(std::move(test), std::move(reference), std::vector<std::uint64_t>(cells, 0));
}

double CrossTab::proportion(std::size_t t, std::size_t r) const {
  if (validTotal_ == 0) return 0.0;
  return static_cast<double>(count(t, r)) / static_cast<double>(validTotal_);
}

std::vector<std::uint64_t> CrossTab::rowSums() const {
  std::vector<std::uint64_t> sums(rows(), 0);
  for (std::size_t t = 0; t < rows(); ++t)
    for (std::size_t r = 0; r < cols(); ++r) sums[t] += count(t, r);
  return sums;
}

std::vector<std::uint64_t> CrossTab::colSums() const {
  std::vector<std::uint64_t> sums(cols(), 0);
  for (std::size_t t = 0; t < rows(); ++t)
    for (std::size_t r = 0; r < cols(); ++r) sums[r] += count(t, r);
  return sums;
}

bool CrossTab::operator==(const CrossTab& other) const {
  return sameLegend(test_, other.test_) && sameLegend(reference_, other.reference_) &&
         counts_ == other.counts_ && excludedTotal_ == other.excludedTotal_;
}

// TallyAccumulator -----------------------------------------------------------

struct TallyAccumulator::Lookups {
  CodeLookup test;
  CodeLookup reference;
  CodeLookup strata;
};

TallyAccumulator::TallyAccumulator(TallyLayout layout) : layout_(std::move(layout)) {
  if (!layout_.test || !layout_.reference)
    throw ValidationError("tally: test and reference legends are required");
  auto lookups = std::make_shared<Lookups>();
  lookups->test = CodeLookup(*layout_.test);
  lookups->reference = CodeLookup(*layout_.reference);
  if (layout_.strata) lookups->strata = CodeLookup(*layout_.strata);
  lookups_ = std::move(lookups);
  cells_ = layout_.test->size() * layout_.reference->size();
  const std::size_t slots = layout_.strata ? layout_.strata->size() + 1 : 1;
  counts_.assign(slots * cells_, 0);
  excluded_.assign(slots, 0);
}

std::span<const std::uint64_t> TallyAccumulator::slotCounts(std::size_t slot) const {
  if (slot >= slotCount()) throw ValidationError("tally: slot out of range");
  return std::span<const std::uint64_t>(counts_).subspan(slot * cells_, cells_);
}

std::uint64_t TallyAccumulator::validTotal() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t TallyAccumulator::excludedTotal() const noexcept {
  return std::accumulate(excluded_.begin(), excluded_.end(), std::uint64_t{0});
}

void TallyAccumulator::tally(std::span<const ClassCode> test, std::span<const ClassCode> reference,
                             std::span<const ClassCode> strata) {
  if (test.size() != reference.size())
    throw ValidationError("tally: test and reference windows differ in size");
  if (stratified() ? strata.size() != test.size() : !strata.empty())
    throw ValidationError("tally: stratum window does not match");

  const auto& lt = lookups_->test;
  const auto& lr = lookups_->reference;
  const ClassCode testNodata = layout_.testNodata;
  const ClassCode refNodata = layout_.referenceNodata;
  const std::size_t cols = layout_.reference->size();

  auto fail = [&](ClassCode code, const Legend& legend) {
    throw ValidationError("code " + std::to_string(code) + " outside legend '" + legend.id() + "'");
  };

  if (!stratified()) {
    std::uint64_t* cells = counts_.data();
    std::uint64_t excluded = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const ClassCode a = test[i];
      const ClassCode b = reference[i];
      if (a == testNodata || b == refNodata) {
        ++excluded;
        continue;
      }
      const auto t = lt(a);
      const auto r = lr(b);
      if (t < 0) fail(a, *layout_.test);
      if (r < 0) fail(b, *layout_.reference);
      ++cells[static_cast<std::size_t>(t) * cols + static_cast<std::size_t>(r)];
    }
    excluded_[0] += excluded;
    return;
  }

  const auto& ls = lookups_->strata;
  const ClassCode strataNodata = layout_.strataNodata;
  const std::size_t nodataSlot = this->nodataSlot();
  for (std::size_t i = 0; i < test.size(); ++i) {
    const ClassCode s = strata[i];
    std::size_t slot = nodataSlot;
    if (s != strataNodata) {
      const auto k = ls(s);
      if (k < 0) fail(s, *layout_.strata);
      slot = static_cast<std::size_t>(k);
    }
    const ClassCode a = test[i];
    const ClassCode b = reference[i];
    if (a == testNodata || b == refNodata) {
      ++excluded_[slot];
      continue;
    }
    const auto t = lt(a);
    const auto r = lr(b);
    if (t < 0) fail(a, *layout_.test);
    if (r < 0) fail(b, *layout_.reference);
    ++counts_[slot * cells_ + static_cast<std::size_t>(t) * cols + static_cast<std::size_t>(r)];
  }
}

void TallyAccumulator::merge(const TallyAccumulator& other) {
  const auto& a = layout_;
  const auto& b = other.layout_;
  if (!sameLegend(a.test, b.test) || !sameLegend(a.reference, b.reference) ||
      !sameLegend(a.strata, b.strata) || a.testNodata != b.testNodata ||
      a.referenceNodata != b.referenceNodata || a.strataNodata != b.strataNodata)
    throw ValidationError("merge: accumulator shapes differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  for (std::size_t i = 0; i < excluded_.size(); ++i) excluded_[i] += other.excluded_[i];
}

CrossTab TallyAccumulator::total() const {
  std::vector<std::uint64_t> sum(cells_, 0);
  for (std::size_t s = 0; s < slotCount(); ++s)
    for (std::size_t c = 0; c < cells_; ++c) sum[c] += counts_[s * cells_ + c];
  return CrossTab(layout_.test, layout_.reference, std::move(sum), excludedTotal());
}

CrossTab TallyAccumulator::slot(std::size_t index) const {
  const auto cells = slotCounts(index);
  return CrossTab(layout_.test, layout_.reference,
                  std::vector<std::uint64_t>(cells.begin(), cells.end()), excluded_[index]);
}

bool TallyAccumulator::operator==(const TallyAccumulator& other) const {
  return sameLegend(layout_.test, other.layout_.test) &&
         sameLegend(layout_.reference, other.layout_.reference) &&
         sameLegend(layout_.strata, other.layout_.strata) && counts_ == other.counts_ &&
         excluded_ == other.excluded_;
}

TallyAccumulator tallyTile(const Tile& test, const Tile& reference, const Tile* strata,
                           TallyAccumulator acc) {
  if (test.window != reference.window || (strata && strata->window != test.window))
    throw ValidationError("tally: tiles cover different windows");
  acc.tally(test.data, reference.data,
            strata ? std::span<const ClassCode>(strata->data) : std::span<const ClassCode>{});
  return acc;
}

TallyAccumulator merge(TallyAccumulator a, const TallyAccumulator& b) {
  a.merge(b);
  return a;
}

// Streaming ------------------------------------------------------------------

constexpr std::uint32_t kStripRows = 32;

StreamResult crosstabStreamed(const CategoricalRaster& test, const CategoricalRaster& reference,
                              const StratumSet* strata, const StreamOptions& options) {
  requireLegend(test, "test");
  requireLegend(reference, "reference");
  const auto alignment = validateAlignment(test, reference);
  if (!alignment.sameDimensions) throw ValidationError("alignment failure: " + alignment.notes);
  if (strata) {
    if (!strata->legend) throw ValidationError("strata legend is required");
    const auto strataAlignment = validateAlignment(test, strata->raster);
    if (!strataAlignment.sameDimensions)
      throw ValidationError("strata alignment failure: " + strataAlignment.notes);
  }

  TallyLayout layout{test.legend(), reference.legend(), strata ? strata->legend : nullptr,
                     test.nodata(), reference.nodata(),
                     strata ? strata->raster.nodata() : ClassCode{0}};
  const TileGrid grid = test.grid(options.tileWidth, options.tileHeight);
  const std::uint64_t tileCount = grid.tileCount();
  const unsigned workers = static_cast<unsigned>(
      std::clamp<std::uint64_t>(options.threads == 0 ? 1 : options.threads, 1, tileCount));

  std::atomic<std::uint64_t> nextTile{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex errorMutex;
  std::vector<TallyAccumulator> partials(workers, TallyAccumulator(layout));

  auto work = [&](unsigned id) {
    try {
      // Tiles are the unit of work, but each tile is read in short row strips
      // so the per-worker buffers stay small and cache resident.
      const std::uint32_t stripRows = std::min(grid.tileHeight(), kStripRows);
      const std::size_t capacity = std::size_t{grid.tileWidth()} * stripRows;
      std::vector<ClassCode> a(capacity);
      std::vector<ClassCode> b(capacity);
      std::vector<ClassCode> s(strata ? capacity : 0);
      auto& acc = partials[id];
      for (;;) {
        if (failed.load(std::memory_order_relaxed)) return;
        const auto index = nextTile.fetch_add(1, std::memory_order_relaxed);
        if (index >= tileCount) return;
        const auto tile = grid.window(static_cast<std::uint32_t>(index % grid.tilesX()),
                                      static_cast<std::uint32_t>(index / grid.tilesX()));
        for (std::uint32_t row = 0; row < tile.height; row += stripRows) {
          const Window window{tile.x, tile.y + row, tile.width,
                              std::min(stripRows, tile.height - row)};
          const auto area = static_cast<std::size_t>(window.area());
          const std::span<ClassCode> ta(a.data(), area);
          const std::span<ClassCode> tb(b.data(), area);
          test.readWindowInto(window, ta);
          reference.readWindowInto(window, tb);
          std::span<ClassCode> ts;
          if (strata) {
            ts = std::span<ClassCode>(s.data(), area);
            strata->raster.readWindowInto(window, ts);
          }
          acc.tally(ta, tb, ts);
        }
      }
    } catch (...) {
      std::lock_guard lock(errorMutex);
      if (!error) error = std::current_exception();
      failed = true;
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned id = 0; id < workers; ++id) pool.emplace_back(work, id);
  }
  if (error) std::rethrow_exception(error);

  TallyAccumulator combined(layout);
  for (const auto& p : partials) combined.merge(p);

  StreamResult result{combined.total(), std::nullopt, tileCount};
  if (strata) {
    StratifiedResult split{{}, combined.slot(combined.nodataSlot())};
    for (std::size_t k = 0; k + 1 < combined.slotCount(); ++k)
      split.perStratum.push_back(combined.slot(k));
    result.strata = std::move(split);
  }
  return result;
}

// Aggregation ----------------------------------------------------------------

CrossTab aggregateCrossTab(const CrossTab& ct, const AggregationMap* rows,
                           const AggregationMap* cols) {
  if (rows && !rows->source().sameClasses(ct.test()))
    throw ValidationError("legend mismatch: row aggregation source is not the test legend");
  if (cols && !cols->source().sameClasses(ct.reference()))
    throw ValidationError("legend mismatch: column aggregation source is not the reference legend");
  LegendPtr test = rows ? rows->targetPtr() : ct.testPtr();
  LegendPtr reference = cols ? cols->targetPtr() : ct.referencePtr();
  std::vector<std::uint64_t> counts(test->size() * reference->size(), 0);
  for (std::size_t t = 0; t < ct.rows(); ++t) {
    const auto t2 = rows ? rows->targetIndex(t) : t;
    for (std::size_t r = 0; r < ct.cols(); ++r) {
      const auto r2 = cols ? cols->targetIndex(r) : r;
      counts[t2 * reference->size() + r2] += ct.count(t, r);
    }
  }
  return CrossTab(std::move(test), std::move(reference), std::move(counts), ct.excludedTotal());
}

// Serialization --------------------------------------------------------------

namespace {

std::string renderCsv(const CrossTab& ct, bool percent) {
  std::string out;
  csv::Row header{""};
  for (const auto& c : ct.reference().classes()) header.push_back(c.acronym);
  out += csv::joinRow(header) + "\n";
  for (std::size_t t = 0; t < ct.rows(); ++t) {
    csv::Row row{ct.test()[t].acronym};
    for (std::size_t r = 0; r < ct.cols(); ++r) {
      if (!percent)
        row.push_back(std::to_string(ct.count(t, r)));
      else
        row.push_back(ct.validTotal() ? Percent::ofRatio(ct.count(t, r), ct.validTotal()).str()
                                      : "0.00");
    }
    out += csv::joinRow(row) + "\n";
  }
  return out;
}

}  // namespace

std::string crossTabCountsCsv(const CrossTab& ct) { return renderCsv(ct, false); }
std::string crossTabPercentCsv(const CrossTab& ct) { return renderCsv(ct, true); }

void writeCrossTabCsv(const std::filesystem::path& path, const CrossTab& ct, bool percent) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << renderCsv(ct, percent);
  if (!out) throw IoError("write failed: " + path.string());
}

CrossTab readCrossTabCsv(const std::filesystem::path& path, LegendPtr test, LegendPtr reference) {
  const auto rows = csv::readFile(path);
  if (rows.empty()) throw ValidationError(path.string() + ": empty file");
  const auto& header = rows.front();
  if (header.size() != reference->size() + 1)
    throw ValidationError(path.string() + ": header must list every reference class once");
  std::vector<std::size_t> colIndex;
  for (std::size_t j = 1; j < header.size(); ++j) colIndex.push_back(reference->requireAcronym(header[j]));
  if (rows.size() != test->size() + 1)
    throw ValidationError(path.string() + ": expected one row per test class");
  std::vector<std::uint64_t> counts(test->size() * reference->size(), 0);
  std::vector<bool> seenRow(test->size(), false);
  std::vector<bool> seenCol(reference->size(), false);
  for (const auto c : colIndex) {
    if (seenCol[c]) throw ValidationError(path.string() + ": duplicate column");
    seenCol[c] = true;
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != header.size())
      throw ValidationError(path.string() + ": line " + std::to_string(i + 1) +
                            ": wrong field count");
    const auto t = test->requireAcronym(row[0]);
    if (seenRow[t]) throw ValidationError(path.string() + ": duplicate row '" + row[0] + "'");
    seenRow[t] = true;
    for (std::size_t j = 1; j < row.size(); ++j) {
      std::uint64_t value = 0;
      const auto& text = row[j];
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
      if (ec != std::errc{} || ptr != text.data() + text.size())
        throw ValidationError(path.string() + ": '" + text + "' is not a non-negative integer");
      counts[t * reference->size() + colIndex[j - 1]] = value;
    }
  }
  return CrossTab(std::move(test), std::move(reference), std::move(counts));
}

}  // namespace mapxtab
