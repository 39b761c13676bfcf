#include "mapxtab/metrics.hpp"

#include <dlfcn.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "mapxtab/association_plugin.h"
#include "mapxtab/csv.hpp"
#include "mapxtab/error.hpp"

namespace mapxtab {

namespace {

void requireSameLegends(const CrossTab& ct, const BinaryRelation& relation) {
  if (!ct.test().sameClasses(relation.test()) || !ct.reference().sameClasses(relation.reference()))
    throw ValidationError("legend mismatch: relation legends (" + relation.test().id() + ", " +
                          relation.reference().id() + ") differ from the cross-tab legends (" +
                          ct.test().id() + ", " + ct.reference().id() + ")");
}

}  // namespace

OverallAgreement overallAgreement(const CrossTab& ct, const BinaryRelation& relation) {
  requireSameLegends(ct, relation);
  if (ct.validTotal() == 0) throw ValidationError("overall agreement: no valid pixels");
  OverallAgreement oa;
  for (const auto& [t, r] : relation.pairs()) oa.agreeing += ct.count(t, r);
  oa.validTotal = ct.validTotal();
  oa.exact = 100.0 * static_cast<double>(oa.agreeing) / static_cast<double>(oa.validTotal);
  oa.rounded = Percent::ofRatio(oa.agreeing, oa.validTotal);
  oa.uncertainty = Percent::fromHundredths(0);
  return oa;
}

// Conditional tables ---------------------------------------------------------

ConditionalTable conditionalGivenReference(const CrossTab& ct) {
  ConditionalTable table{Conditioning::GivenReference, ct.testPtr(), ct.referencePtr(),
                         std::vector<double>(ct.rows() * ct.cols(), 0.0),
                         std::vector<bool>(ct.cols(), false)};
  const auto colSums = ct.colSums();
  for (std::size_t r = 0; r < ct.cols(); ++r) {
    if (colSums[r] == 0) {
      table.zeroMarginal[r] = true;
      continue;
    }
    const auto denom = static_cast<double>(colSums[r]);
    for (std::size_t t = 0; t < ct.rows(); ++t)
      table.values[t * ct.cols() + r] = static_cast<double>(ct.count(t, r)) / denom;
  }
  return table;
}

ConditionalTable conditionalGivenTest(const CrossTab& ct) {
  ConditionalTable table{Conditioning::GivenTest, ct.testPtr(), ct.referencePtr(),
                         std::vector<double>(ct.rows() * ct.cols(), 0.0),
                         std::vector<bool>(ct.rows(), false)};
  const auto rowSums = ct.rowSums();
  for (std::size_t t = 0; t < ct.rows(); ++t) {
    if (rowSums[t] == 0) {
      table.zeroMarginal[t] = true;
      continue;
    }
    const auto denom = static_cast<double>(rowSums[t]);
    for (std::size_t r = 0; r < ct.cols(); ++r)
      table.values[t * ct.cols() + r] = static_cast<double>(ct.count(t, r)) / denom;
  }
  return table;
}

std::vector<TopKRow> topKMatches(const ConditionalTable& table, std::size_t k) {
  if (k == 0) throw ValidationError("top-k: k must be at least 1");
  const std::size_t conditioningCount = table.conditioningLegend().size();
  const std::size_t partnerCount = table.partnerLegend().size();
  const std::size_t take = std::min(k, partnerCount);

  std::vector<TopKRow> result;
  result.reserve(conditioningCount);
  std::vector<Match> candidates(partnerCount);
  for (std::size_t c = 0; c < conditioningCount; ++c) {
    for (std::size_t p = 0; p < partnerCount; ++p) candidates[p] = {p, table.given(c, p)};
    // Stable ordering on probability alone keeps equal values in legend order.
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Match& a, const Match& b) { return a.probability > b.probability; });
    result.push_back({c, table.zeroMarginal[c],
                      std::vector<Match>(candidates.begin(), candidates.begin() + take)});
  }
  return result;
}

// Association ----------------------------------------------------------------

double chiSquare(const CrossTab& ct) {
  const auto rows = ct.rowSums();
  const auto cols = ct.colSums();
  const double n = static_cast<double>(ct.validTotal());
  if (n == 0) return 0.0;
  double chi2 = 0.0;
  for (std::size_t t = 0; t < ct.rows(); ++t) {
    if (rows[t] == 0) continue;
    for (std::size_t r = 0; r < ct.cols(); ++r) {
      if (cols[r] == 0) continue;
      const double expected = static_cast<double>(rows[t]) * static_cast<double>(cols[r]) / n;
      const double diff = static_cast<double>(ct.count(t, r)) - expected;
      chi2 += diff * diff / expected;
    }
  }
  return chi2;
}

double cramersV(const CrossTab& ct) {
  const auto rows = ct.rowSums();
  const auto cols = ct.colSums();
  const auto nonzero = [](const std::vector<std::uint64_t>& v) {
    return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](auto x) { return x != 0; }));
  };
  const std::size_t q = std::min(nonzero(rows), nonzero(cols));
  if (q < 2) return 0.0;
  const double v =
      std::sqrt(chiSquare(ct) / (static_cast<double>(ct.validTotal()) * static_cast<double>(q - 1)));
  return std::clamp(v, 0.0, 1.0);
}

double semanticGap(double associationValue) {
  if (!(associationValue >= 0.0 && associationValue <= 1.0))
    throw ValidationError("semantic gap: association value must lie in [0, 1]");
  return 1.0 - associationValue;
}

namespace {

/// Keeps the shared object loaded for as long as any registry holds the
/// function.
class PluginHandle {
 public:
  explicit PluginHandle(const std::filesystem::path& path) {
    handle_ = ::dlopen(path.c_str(), RTLD_NOW | RTLD_LOCAL);
    if (!handle_) {
      const char* why = ::dlerror();
      throw IoError("cannot load association plugin " + path.string() + ": " +
                    (why ? why : "unknown error"));
    }
    fn_ = reinterpret_cast<mapxtab_association_fn>(::dlsym(handle_, MAPXTAB_ASSOCIATION_SYMBOL));
    if (!fn_) {
      ::dlclose(handle_);
      throw ValidationError("association plugin " + path.string() + " does not export " +
                            MAPXTAB_ASSOCIATION_SYMBOL);
    }
  }
  ~PluginHandle() { ::dlclose(handle_); }
  PluginHandle(const PluginHandle&) = delete;
  PluginHandle& operator=(const PluginHandle&) = delete;

  double operator()(const mapxtab_association_input* in) const { return fn_(in); }

 private:
  void* handle_ = nullptr;
  mapxtab_association_fn fn_ = nullptr;
};

}  // namespace

AssociationRegistry AssociationRegistry::builtin(const std::filesystem::path& cvpai2Plugin) {
  AssociationRegistry registry;
  registry.add("cramers-v", [](const CrossTab& ct, const BinaryRelation&) {
    return AssociationResult{"cramers-v", cramersV(ct),
                             "Cramer's V, bias-uncorrected, over nonzero margins; "
                             "independent of the relation"};
  });

  if (cvpai2Plugin.empty()) {
    registry.add("cvpai2-plugin", [](const CrossTab&, const BinaryRelation&) -> AssociationResult {
      throw ValidationError(
          "cvpai2-plugin: no formula definition supplied (pass a shared object exporting " +
          std::string(MAPXTAB_ASSOCIATION_SYMBOL) + ")");
    });
  } else {
    auto plugin = std::make_shared<PluginHandle>(cvpai2Plugin);
    const std::string definition = std::filesystem::absolute(cvpai2Plugin).string();
    registry.add("cvpai2-plugin", [plugin, definition](const CrossTab& ct,
                                                       const BinaryRelation& relation) {
      std::vector<unsigned char> related(ct.rows() * ct.cols(), 0);
      for (const auto& [t, r] : relation.pairs()) related[t * ct.cols() + r] = 1;
      const mapxtab_association_input input{ct.rows(), ct.cols(), ct.counts().data(),
                                            related.data(), ct.validTotal()};
      const double value = (*plugin)(&input);
      if (value < 0.0) throw ValidationError("cvpai2-plugin: input outside the formula's domain");
      return AssociationResult{"cvpai2-plugin", value, definition};
    });
  }
  return registry;
}

void AssociationRegistry::add(std::string name, AssociationFn fn) {
  methods_[std::move(name)] = std::move(fn);
}

std::vector<std::string> AssociationRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, fn] : methods_) out.push_back(name);
  return out;
}

AssociationResult AssociationRegistry::compute(const std::string& method, const CrossTab& ct,
                                               const BinaryRelation& relation) const {
  const auto it = methods_.find(method);
  if (it == methods_.end()) throw ValidationError("unknown association method '" + method + "'");
  requireSameLegends(ct, relation);
  auto result = it->second(ct, relation);
  if (!(result.value >= 0.0 && result.value <= 1.0))
    throw ValidationError(method + ": value " + std::to_string(result.value) +
                          " outside [0, 1]");
  result.method = method;
  return result;
}

AssociationResult associationIndex(const CrossTab& ct, const BinaryRelation& relation,
                                   const std::string& method,
                                   const std::filesystem::path& cvpai2Plugin) {
  return AssociationRegistry::builtin(cvpai2Plugin).compute(method, ct, relation);
}

// Class frequencies ----------------------------------------------------------

std::vector<double> ClassFrequencies::proportions() const {
  std::vector<double> out(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) out[i] = proportion(i);
  return out;
}

ClassFrequencies classFrequencies(const CrossTab& ct, bool testMargin) {
  if (ct.validTotal() == 0) throw ValidationError("class frequencies: no valid pixels");
  return ClassFrequencies{testMargin ? ct.testPtr() : ct.referencePtr(),
                          testMargin ? ct.rowSums() : ct.colSums(), ct.validTotal()};
}

ClassFrequencies classFrequencies(const CategoricalRaster& raster, std::uint32_t tileSize) {
  if (!raster.legend()) throw ValidationError("class frequencies: raster has no legend");
  const Legend& legend = *raster.legend();
  const CodeLookup lookup(legend);
  ClassFrequencies freq{raster.legend(), std::vector<std::uint64_t>(legend.size(), 0), 0};
  const auto grid = raster.grid(tileSize, tileSize);
  std::vector<ClassCode> buffer(std::size_t{grid.tileWidth()} * grid.tileHeight());
  for (std::uint32_t ty = 0; ty < grid.tilesY(); ++ty) {
    for (std::uint32_t tx = 0; tx < grid.tilesX(); ++tx) {
      const auto window = grid.window(tx, ty);
      const std::span<ClassCode> codes(buffer.data(), static_cast<std::size_t>(window.area()));
      raster.readWindowInto(window, codes);
      for (const ClassCode code : codes) {
        if (code == raster.nodata()) continue;
        ++freq.counts[static_cast<std::size_t>(lookup(code))];
      }
    }
  }
  freq.validTotal = std::accumulate(freq.counts.begin(), freq.counts.end(), std::uint64_t{0});
  if (freq.validTotal == 0) throw ValidationError("class frequencies: no valid pixels");
  return freq;
}

// Temporal consistency -------------------------------------------------------

double sampleMean(std::span<const double> values) {
  if (values.empty()) throw ValidationError("mean of an empty series");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sampleStdDev(std::span<const double> values) {
  if (values.size() < 2) throw ValidationError("sample standard deviation needs two values");
  const double mean = sampleMean(values);
  double ss = 0.0;
  for (const double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

namespace {

TemporalRow makeRow(std::string label, std::vector<double> series) {
  TemporalRow row{std::move(label), std::move(series), 0.0, 0.0};
  row.mean = sampleMean(row.series);
  row.stddev = sampleStdDev(row.series);
  return row;
}

}  // namespace

TemporalStats temporalConsistency(std::span<const EpochFrequencies> epochs,
                                  std::span<const ClassGroup> groups) {
  if (epochs.size() < 2) throw UsageError("temporal consistency needs at least two epochs");
  const LegendPtr legend = epochs.front().legend;
  if (!legend) throw ValidationError("temporal consistency: epoch without a legend");
  for (const auto& epoch : epochs) {
    if (!epoch.legend || !epoch.legend->sameClasses(*legend))
      throw ValidationError("legend mismatch: epoch '" + epoch.label +
                            "' does not share the legend of '" + epochs.front().label + "'");
    if (epoch.values.size() != legend->size())
      throw ValidationError("epoch '" + epoch.label + "' has the wrong number of values");
  }

  TemporalStats stats;
  stats.legend = legend;
  for (const auto& epoch : epochs) stats.epochs.push_back(epoch.label);

  for (std::size_t c = 0; c < legend->size(); ++c) {
    std::vector<double> series;
    for (const auto& epoch : epochs) series.push_back(epoch.values[c]);
    stats.classes.push_back(makeRow((*legend)[c].acronym, std::move(series)));
  }
  for (const auto& group : groups) {
    std::vector<double> series;
    for (const auto& epoch : epochs) {
      double sum = 0.0;
      for (const auto member : group.members) {
        if (member >= legend->size())
          throw ValidationError("group '" + group.name + "' references a class outside the legend");
        sum += epoch.values[member];
      }
      series.push_back(sum);
    }
    stats.groups.push_back(makeRow(group.name, std::move(series)));
  }
  return stats;
}

std::vector<ClassGroup> loadGroups(const std::filesystem::path& path, const Legend& legend) {
  const auto rows = csv::readFile(path);
  if (rows.empty() || rows.front() != csv::Row{"group", "class"})
    throw ValidationError(path.string() + ": expected header 'group,class'");
  std::vector<ClassGroup> groups;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != 2) throw ValidationError(path.string() + ": expected two fields per line");
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const ClassGroup& g) { return g.name == row[0]; });
    if (it == groups.end()) it = groups.insert(groups.end(), ClassGroup{row[0], {}});
    const auto index = legend.requireAcronym(row[1]);
    if (std::find(it->members.begin(), it->members.end(), index) != it->members.end())
      throw ValidationError(path.string() + ": class '" + row[1] + "' listed twice in group '" +
                            row[0] + "'");
    it->members.push_back(index);
  }
  return groups;
}

// Boxplots -------------------------------------------------------------------

std::string quartileRuleId(QuartileRule rule) {
  return rule == QuartileRule::Type7 ? "type7" : "tukey-hinges";
}

QuartileRule parseQuartileRule(const std::string& id) {
  if (id == "type7") return QuartileRule::Type7;
  if (id == "tukey-hinges" || id == "tukey") return QuartileRule::TukeyHinges;
  throw UsageError("unknown quartile rule '" + id + "' (use type7 or tukey-hinges)");
}

namespace {

// Linear interpolation at position p of a sorted sample.
double type7(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

double medianOf(const std::vector<double>& sorted, std::size_t first, std::size_t last) {
  const std::size_t n = last - first;
  const std::size_t mid = first + n / 2;
  return n % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
}

}  // namespace

BoxplotSummary summarizeBoxplot(std::vector<double> values, QuartileRule rule) {
  if (values.empty()) throw ValidationError("boxplot of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();

  BoxplotSummary box;
  box.n = n;
  box.min = values.front();
  box.max = values.back();
  box.median = medianOf(values, 0, n);
  if (rule == QuartileRule::Type7) {
    box.q1 = type7(values, 0.25);
    box.q3 = type7(values, 0.75);
  } else {
    const std::size_t half = (n + 1) / 2;
    box.q1 = medianOf(values, 0, half);
    box.q3 = medianOf(values, n - half, n);
  }

  const double reach = 1.5 * (box.q3 - box.q1);
  const double lowFence = box.q1 - reach;
  const double highFence = box.q3 + reach;
  box.lowerWhisker = box.q1;
  box.upperWhisker = box.q3;
  for (const double v : values) {
    if (v < lowFence || v > highFence) {
      box.outliers.push_back(v);
      continue;
    }
    box.lowerWhisker = std::min(box.lowerWhisker, v);
    box.upperWhisker = std::max(box.upperWhisker, v);
  }
  return box;
}

StratumBoxplots stratumBoxplots(std::span<const CrossTab> perStratum, std::size_t referenceIndex,
                                QuartileRule rule) {
  if (perStratum.empty()) throw ValidationError("stratum boxplots: no strata");
  const auto& first = perStratum.front();
  if (referenceIndex >= first.cols())
    throw ValidationError("stratum boxplots: reference class out of range");

  StratumBoxplots out;
  out.referenceIndex = referenceIndex;
  out.rule = rule;
  out.samples.assign(first.rows(), {});
  for (std::size_t s = 0; s < perStratum.size(); ++s) {
    const auto& ct = perStratum[s];
    if (!ct.test().sameClasses(first.test()) || !ct.reference().sameClasses(first.reference()))
      throw ValidationError("stratum boxplots: strata use different legends");
    std::uint64_t marginal = 0;
    for (std::size_t t = 0; t < ct.rows(); ++t) marginal += ct.count(t, referenceIndex);
    if (marginal == 0) {
      ++out.skippedStrata;
      continue;
    }
    out.usedStrata.push_back(s);
    for (std::size_t t = 0; t < ct.rows(); ++t)
      out.samples[t].push_back(static_cast<double>(ct.count(t, referenceIndex)) /
                               static_cast<double>(marginal));
  }
  if (!out.usedStrata.empty())
    for (const auto& sample : out.samples) out.perTestClass.push_back(summarizeBoxplot(sample, rule));
  return out;
}

}  // namespace mapxtab
