#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mapxtab/crosstab.hpp"
#include "mapxtab/legend.hpp"
#include "mapxtab/percent.hpp"
#include "mapxtab/raster.hpp"

namespace mapxtab {

// Overall agreement ----------------------------------------------------------

/// Relation-guided agreement. Wall-to-wall counts carry no sampling error, so
/// `uncertainty` is an explicit zero rather than an omitted field.
struct OverallAgreement {
  std::uint64_t agreeing = 0;
  std::uint64_t validTotal = 0;
  double exact = 0.0;  // percent, unrounded
  Percent rounded;     // percent, half-up to hundredths
  Percent uncertainty;
};

/// Throws ValidationError when the table is empty or the legends differ.
OverallAgreement overallAgreement(const CrossTab& ct, const BinaryRelation& relation);

// Conditional probabilities --------------------------------------------------

enum class Conditioning {
  GivenReference,  // p(t | r): each column sums to one
  GivenTest,       // p(r | t): each row sums to one
};

struct ConditionalTable {
  Conditioning direction = Conditioning::GivenReference;
  LegendPtr test;
  LegendPtr reference;
  std::vector<double> values;  // rows x cols, row-major
  /// Indexed by conditioning class; true where its marginal is zero and the
  /// line was emitted as all zeros.
  std::vector<bool> zeroMarginal;

  std::size_t rows() const { return test->size(); }
  std::size_t cols() const { return reference->size(); }
  double at(std::size_t t, std::size_t r) const { return values[t * cols() + r]; }

  const Legend& conditioningLegend() const {
    return direction == Conditioning::GivenReference ? *reference : *test;
  }
  const Legend& partnerLegend() const {
    return direction == Conditioning::GivenReference ? *test : *reference;
  }
  /// p(partner | conditioning) regardless of direction.
  double given(std::size_t conditioning, std::size_t partner) const {
    return direction == Conditioning::GivenReference ? at(partner, conditioning)
                                                     : at(conditioning, partner);
  }
};

ConditionalTable conditionalGivenReference(const CrossTab& ct);
ConditionalTable conditionalGivenTest(const CrossTab& ct);

struct Match {
  std::size_t partner = 0;
  double probability = 0.0;
};

struct TopKRow {
  std::size_t conditioning = 0;
  bool zeroMarginal = false;
  std::vector<Match> matches;
};

/// Best k partners per conditioning class, ties broken by legend order.
std::vector<TopKRow> topKMatches(const ConditionalTable& table, std::size_t k);

// Association ----------------------------------------------------------------

struct AssociationResult {
  std::string method;
  double value = 0.0;
  /// What produced the number: a formula name or the plugin path.
  std::string definition;
};

using AssociationFn =
    std::function<AssociationResult(const CrossTab&, const BinaryRelation&)>;

/// Named association methods. The built-in set has "cramers-v" (bias
/// uncorrected, relation independent) and "cvpai2-plugin", which loads the
/// formula from a shared object and refuses to run without one.
class AssociationRegistry {
 public:
  static AssociationRegistry builtin(const std::filesystem::path& cvpai2Plugin = {});

  void add(std::string name, AssociationFn fn);
  bool contains(const std::string& name) const { return methods_.count(name) != 0; }
  std::vector<std::string> names() const;

  /// Throws ValidationError for unknown methods or values outside [0, 1].
  AssociationResult compute(const std::string& method, const CrossTab& ct,
                            const BinaryRelation& relation) const;

 private:
  std::map<std::string, AssociationFn> methods_;
};

/// Convenience wrapper over AssociationRegistry::builtin.
AssociationResult associationIndex(const CrossTab& ct, const BinaryRelation& relation,
                                   const std::string& method,
                                   const std::filesystem::path& cvpai2Plugin = {});

/// Chi-square statistic over the rows and columns with nonzero marginals.
double chiSquare(const CrossTab& ct);

/// sqrt(chi2 / (n * (q - 1))) with q the smaller count of nonzero rows and
/// columns; 0 when q < 2.
double cramersV(const CrossTab& ct);

/// 1 - value; throws ValidationError outside [0, 1].
double semanticGap(double associationValue);
inline double semanticGap(const AssociationResult& a) { return semanticGap(a.value); }

// Class frequencies ----------------------------------------------------------

struct ClassFrequencies {
  LegendPtr legend;
  std::vector<std::uint64_t> counts;
  std::uint64_t validTotal = 0;

  double proportion(std::size_t index) const {
    return static_cast<double>(counts[index]) / static_cast<double>(validTotal);
  }
  std::vector<double> proportions() const;
};

/// Row margin (test) or column margin (reference). Throws on an empty table.
ClassFrequencies classFrequencies(const CrossTab& ct, bool testMargin);
/// Streams the raster once, tile by tile.
ClassFrequencies classFrequencies(const CategoricalRaster& raster,
                                  std::uint32_t tileSize = kDefaultTileSize);

// Temporal consistency -------------------------------------------------------

struct EpochFrequencies {
  std::string label;
  LegendPtr legend;
  std::vector<double> values;  // one per legend class, any consistent unit
};

struct ClassGroup {
  std::string name;
  std::vector<std::size_t> members;  // legend indices
};

struct TemporalRow {
  std::string label;
  std::vector<double> series;
  double mean = 0.0;
  double stddev = 0.0;  // n - 1 denominator
};

struct TemporalStats {
  LegendPtr legend;
  std::vector<std::string> epochs;
  std::vector<TemporalRow> classes;
  std::vector<TemporalRow> groups;
};

/// Needs at least two epochs sharing one legend.
TemporalStats temporalConsistency(std::span<const EpochFrequencies> epochs,
                                  std::span<const ClassGroup> groups = {});

/// Reads `group,class` CSV (class by acronym), groups in first-seen order.
std::vector<ClassGroup> loadGroups(const std::filesystem::path& path, const Legend& legend);

double sampleMean(std::span<const double> values);
double sampleStdDev(std::span<const double> values);

// Boxplots -------------------------------------------------------------------

enum class QuartileRule {
  Type7,        // linear interpolation between order statistics
  TukeyHinges,  // medians of the lower and upper halves, median included
};

std::string quartileRuleId(QuartileRule rule);
QuartileRule parseQuartileRule(const std::string& id);

struct BoxplotSummary {
  std::size_t n = 0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double lowerWhisker = 0.0;
  double upperWhisker = 0.0;
  std::vector<double> outliers;
};

/// Whiskers reach the most extreme data points within 1.5 IQR of the box.
/// Throws ValidationError on an empty sample.
BoxplotSummary summarizeBoxplot(std::vector<double> values, QuartileRule rule = QuartileRule::Type7);

struct StratumBoxplots {
  std::size_t referenceIndex = 0;
  QuartileRule rule = QuartileRule::Type7;
  std::vector<std::size_t> usedStrata;  // indices into the input
  std::size_t skippedStrata = 0;        // reference class absent there
  /// p(t | r) per used stratum, one vector per test class.
  std::vector<std::vector<double>> samples;
  /// One summary per test class; empty when every stratum was skipped.
  std::vector<BoxplotSummary> perTestClass;
};

StratumBoxplots stratumBoxplots(std::span<const CrossTab> perStratum, std::size_t referenceIndex,
                                QuartileRule rule = QuartileRule::Type7);

}  // namespace mapxtab
