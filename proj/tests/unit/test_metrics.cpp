#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "mapxtab/error.hpp"
#include "mapxtab/metrics.hpp"
#include "mapxtab/synth.hpp"
#include "oracles.hpp"
#include "published.hpp"

using namespace mapxtab;
using testsupport::dataFile;
using testsupport::makeLegend;
using testsupport::TestRng;

namespace {

struct Fixture {
  LegendPtr siam = loadLegend(dataFile("legends/siam19.csv"));
  LegendPtr nlcd = loadLegend(dataFile("legends/nlcd16.csv"));
  CrossTab ct = readCrossTabCsv(dataFile("fixtures/siam19_nlcd16_conus2006.counts.csv"), siam, nlcd);

  std::size_t t(const char* acronym) const { return siam->requireAcronym(acronym); }
  std::size_t r(const char* acronym) const { return nlcd->requireAcronym(acronym); }
};

CrossTab randomTable(TestRng& rng, LegendPtr a, LegendPtr b, std::uint64_t maxCell = 50) {
  std::vector<std::uint64_t> counts(a->size() * b->size());
  for (auto& c : counts) c = rng.below(maxCell + 1);
  return CrossTab(std::move(a), std::move(b), std::move(counts));
}

std::vector<std::vector<std::uint64_t>> asRows(const CrossTab& ct) {
  std::vector<std::vector<std::uint64_t>> rows(ct.rows(), std::vector<std::uint64_t>(ct.cols()));
  for (std::size_t t = 0; t < ct.rows(); ++t)
    for (std::size_t r = 0; r < ct.cols(); ++r) rows[t][r] = ct.count(t, r);
  return rows;
}

}  // namespace

TEST_CASE("overall_agreement") {
  const auto legend = makeLegend("k", 4);
  TestRng rng(1);
  std::vector<std::uint64_t> diagonal(16, 0);
  for (std::size_t i = 0; i < 4; ++i) diagonal[i * 4 + i] = 10 + i;
  const CrossTab same(legend, legend, diagonal);
  std::vector<BinaryRelation::Pair> identityPairs{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  const auto full = overallAgreement(same, BinaryRelation(legend, legend, identityPairs));
  CHECK(full.rounded == Percent::whole(100));
  CHECK(full.uncertainty == Percent::whole(0));
  CHECK(overallAgreement(same, BinaryRelation(legend, legend, {})).rounded == Percent::whole(0));

  const CrossTab empty = CrossTab::zero(legend, legend);
  CHECK_THROWS_WITH_AS(overallAgreement(empty, BinaryRelation(legend, legend, {})),
                       doctest::Contains("no valid pixels"), ValidationError);
  const auto other = makeLegend("other", 4, 1, 2);
  CHECK_THROWS_WITH_AS(overallAgreement(same, BinaryRelation(other, legend, {})),
                       doctest::Contains("legend mismatch"), ValidationError);

  // 1 of 8 is 12.5%, which rounds half-up.
  const auto two = makeLegend("two", 2);
  const CrossTab eighth(two, two, {1, 3, 2, 2});
  CHECK(overallAgreement(eighth, BinaryRelation(two, two, {{0, 0}})).rounded.str() == "12.50");
}

TEST_CASE("property: overall_agreement equals direct summation, is bounded and monotone") {
  TestRng rng(88);
  const auto a = makeLegend("a", 8);
  const auto b = makeLegend("b", 8, 20);
  for (int trial = 0; trial < 200; ++trial) {
    const auto ct = randomTable(rng, a, b);
    if (ct.validTotal() == 0) continue;
    std::vector<BinaryRelation::Pair> pairs;
    std::set<testsupport::CodePair> codePairs;
    for (std::size_t t = 0; t < 8; ++t)
      for (std::size_t r = 0; r < 8; ++r)
        if (rng.below(4) == 0) {
          pairs.emplace_back(t, r);
          codePairs.emplace((*a)[t].code, (*b)[r].code);
        }
    testsupport::CodeCounts byCode;
    for (std::size_t t = 0; t < 8; ++t)
      for (std::size_t r = 0; r < 8; ++r)
        if (ct.count(t, r)) byCode[{(*a)[t].code, (*b)[r].code}] = ct.count(t, r);

    const BinaryRelation rel(a, b, pairs);
    const auto oa = overallAgreement(ct, rel);
    CHECK(oa.exact == doctest::Approx(testsupport::agreementPercent(byCode, codePairs)).epsilon(1e-12));
    CHECK(oa.rounded >= Percent::whole(0));
    CHECK(oa.rounded <= Percent::whole(100));
    CHECK(overallAgreement(ct, BinaryRelation::full(a, b)).rounded == Percent::whole(100));
    const auto grown = overallAgreement(ct, rel.withPair(rng.below(8), rng.below(8)));
    CHECK(grown.agreeing >= oa.agreeing);
  }
}

TEST_CASE("conditional tables: published probabilities from the joint fixture") {
  const Fixture f;
  const auto givenRef = conditionalGivenReference(f.ct);
  const auto givenTest = conditionalGivenTest(f.ct);
  CHECK(std::abs(givenRef.at(f.t("WA"), f.r("OW")) - 0.64) <= 0.01);
  CHECK(std::abs(givenRef.at(f.t("sV_HC"), f.r("DF")) - 0.83) <= 0.01);
  CHECK(std::abs(givenTest.at(f.t("WA"), f.r("OW")) - 0.86) <= 0.01);
  CHECK(std::abs(givenTest.at(f.t("aS"), f.r("SS")) - 0.68) <= 0.01);
  CHECK(givenRef.given(f.r("OW"), f.t("WA")) == givenRef.at(f.t("WA"), f.r("OW")));
  CHECK(givenTest.given(f.t("WA"), f.r("OW")) == givenTest.at(f.t("WA"), f.r("OW")));
}

TEST_CASE("property: conditional tables sum to one on nonzero marginals") {
  TestRng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = makeLegend("a", 1 + rng.below(7));
    const auto b = makeLegend("b", 1 + rng.below(7));
    std::vector<std::uint64_t> counts(a->size() * b->size());
    for (auto& c : counts) c = rng.below(3) == 0 ? 0 : rng.below(1000);
    const CrossTab ct(a, b, counts);
    const auto rowSums = ct.rowSums();
    const auto colSums = ct.colSums();

    const auto byRef = conditionalGivenReference(ct);
    for (std::size_t r = 0; r < ct.cols(); ++r) {
      double sum = 0;
      for (std::size_t t = 0; t < ct.rows(); ++t) sum += byRef.at(t, r);
      CHECK(byRef.zeroMarginal[r] == (colSums[r] == 0));
      CHECK(sum == doctest::Approx(colSums[r] == 0 ? 0.0 : 1.0).epsilon(1e-9));
    }
    const auto byTest = conditionalGivenTest(ct);
    for (std::size_t t = 0; t < ct.rows(); ++t) {
      double sum = 0;
      for (std::size_t r = 0; r < ct.cols(); ++r) sum += byTest.at(t, r);
      CHECK(byTest.zeroMarginal[t] == (rowSums[t] == 0));
      CHECK(sum == doctest::Approx(rowSums[t] == 0 ? 0.0 : 1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("top_k_matches") {
  const Fixture f;
  const auto rows = topKMatches(conditionalGivenReference(f.ct), 5);
  const auto& ow = rows.at(f.r("OW"));
  const std::pair<const char*, double> want[] = {
      {"WA", 0.64}, {"aV_HC", 0.15}, {"O", 0.08}, {"sV_HC", 0.04}, {"wV_HC", 0.03}};
  REQUIRE(ow.matches.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK((*f.siam)[ow.matches[i].partner].acronym == want[i].first);
    CHECK(std::abs(ow.matches[i].probability - want[i].second) <= 0.01);
  }

  const auto legend = makeLegend("d", 4);
  std::vector<std::uint64_t> diag(16, 0);
  for (std::size_t i = 0; i < 4; ++i) diag[i * 5] = 7;
  for (const auto& row : topKMatches(conditionalGivenTest(CrossTab(legend, legend, diag)), 1)) {
    REQUIRE(row.matches.size() == 1);
    CHECK(row.matches[0].partner == row.conditioning);
    CHECK(row.matches[0].probability == 1.0);
  }

  CHECK_THROWS_AS(topKMatches(conditionalGivenTest(f.ct), 0), ValidationError);
}

TEST_CASE("property: top_k with k = all partners is the naive stable sort") {
  TestRng rng(44);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = makeLegend("a", 1 + rng.below(6));
    const auto b = makeLegend("b", 1 + rng.below(6));
    // Few distinct values so ties are common.
    const auto ct = randomTable(rng, a, b, 3);
    const auto table = conditionalGivenTest(ct);
    const auto rows = topKMatches(table, b->size());
    for (std::size_t t = 0; t < a->size(); ++t) {
      std::vector<std::size_t> order(b->size());
      std::iota(order.begin(), order.end(), 0);
      // Insertion sort: descending probability, lower index first on ties.
      for (std::size_t i = 1; i < order.size(); ++i)
        for (std::size_t j = i; j > 0 && table.at(t, order[j]) > table.at(t, order[j - 1]); --j)
          std::swap(order[j], order[j - 1]);
      REQUIRE(rows[t].matches.size() == order.size());
      for (std::size_t i = 0; i < order.size(); ++i) CHECK(rows[t].matches[i].partner == order[i]);
    }
  }
}

TEST_CASE("association_index: cramers-v") {
  const auto three = makeLegend("three", 3);
  const auto none = BinaryRelation(three, three, {});
  const CrossTab diagonal(three, three, {5, 0, 0, 0, 9, 0, 0, 0, 2});
  CHECK(associationIndex(diagonal, none, "cramers-v").value == doctest::Approx(1.0).epsilon(1e-12));

  // Outer product of margins (2, 3, 5) x (1, 4, 7): exact independence.
  std::vector<std::uint64_t> outer;
  for (std::uint64_t r : {2, 3, 5})
    for (std::uint64_t c : {1, 4, 7}) outer.push_back(r * c);
  CHECK(std::abs(associationIndex(CrossTab(three, three, outer), none, "cramers-v").value) <= 1e-9);

  TestRng rng(45);
  const auto four = makeLegend("four", 4);
  const auto five = makeLegend("five", 5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto ct = randomTable(rng, four, five, 100);
    const double v = cramersV(ct);
    CHECK(v == doctest::Approx(testsupport::cramersVPhi(asRows(ct))).epsilon(1e-9));
    std::vector<std::uint64_t> scaled(ct.counts().begin(), ct.counts().end());
    for (auto& c : scaled) c *= 1000;
    CHECK(cramersV(CrossTab(four, five, scaled)) == doctest::Approx(v).epsilon(1e-9));
  }

  // One nonzero row or column leaves no association to measure.
  CHECK(cramersV(CrossTab(three, three, {4, 5, 6, 0, 0, 0, 0, 0, 0})) == 0.0);

  CHECK_THROWS_WITH_AS(associationIndex(diagonal, none, "kappa"),
                       doctest::Contains("unknown association method"), ValidationError);
  const auto registry = AssociationRegistry::builtin();
  CHECK(registry.contains("cramers-v"));
  CHECK(registry.contains("cvpai2-plugin"));
}

TEST_CASE("association_index: cvpai2-plugin slot") {
  const auto two = makeLegend("two", 2);
  const CrossTab ct(two, two, {6, 1, 1, 2});
  const BinaryRelation rel(two, two, {{0, 0}, {1, 1}});
  CHECK_THROWS_WITH_AS(associationIndex(ct, rel, "cvpai2-plugin"),
                       doctest::Contains("no formula definition"), ValidationError);
  CHECK_THROWS_AS(associationIndex(ct, rel, "cvpai2-plugin", "/nonexistent/plugin.so"), IoError);

  const auto result = associationIndex(ct, rel, "cvpai2-plugin", MAPXTAB_TEST_PLUGIN);
  CHECK(result.method == "cvpai2-plugin");
  CHECK(result.value == doctest::Approx(0.8));
  CHECK(result.definition.find("mapxtab_test_plugin") != std::string::npos);
  CHECK_THROWS_WITH_AS(associationIndex(CrossTab::zero(two, two), rel, "cvpai2-plugin",
                                        MAPXTAB_TEST_PLUGIN),
                       doctest::Contains("outside the formula's domain"), ValidationError);
}

TEST_CASE("association registry rejects values outside [0, 1]") {
  auto registry = AssociationRegistry::builtin();
  registry.add("broken", [](const CrossTab&, const BinaryRelation&) {
    return AssociationResult{"broken", 1.5, "test"};
  });
  const auto two = makeLegend("two", 2);
  CHECK_THROWS_AS(registry.compute("broken", CrossTab(two, two, {1, 0, 0, 1}),
                                   BinaryRelation(two, two, {})),
                  ValidationError);
}

TEST_CASE("semantic_gap") {
  CHECK(semanticGap(0.6769) == doctest::Approx(0.3231).epsilon(1e-12));
  CHECK(semanticGap(0.7486) == doctest::Approx(0.2514).epsilon(1e-12));
  CHECK(semanticGap(1.0) == 0.0);
  CHECK(semanticGap(AssociationResult{"x", 0.25, ""}) == 0.75);
  CHECK_THROWS_AS(semanticGap(1.01), ValidationError);
  CHECK_THROWS_AS(semanticGap(-0.01), ValidationError);
}

TEST_CASE("class_frequencies") {
  const Fixture f;
  const auto freq = classFrequencies(f.ct, true);
  CHECK(std::abs(100 * freq.proportion(f.t("sV_HC")) - 33.11) <= 0.01);
  CHECK(std::abs(100 * freq.proportion(f.t("aV_HC")) - 19.94) <= 0.01);
  CHECK(std::abs(100 * freq.proportion(f.t("WA")) - 1.28) <= 0.01);
  const auto props = freq.proportions();
  CHECK(std::accumulate(props.begin(), props.end(), 0.0) == doctest::Approx(1.0));

  const auto two = makeLegend("two", 2);
  const auto uniform = CategoricalRaster::fromCodes(4, 2, 0, 1, {1, 2, 1, 2, 2, 1, 2, 1}, two);
  CHECK(classFrequencies(uniform, 3).proportions() == std::vector<double>{0.5, 0.5});

  TestRng rng(3);
  const auto five = makeLegend("five", 5, 2, 3);
  std::vector<ClassCode> codes(37 * 23);
  std::map<ClassCode, std::uint64_t> naive;
  std::uint64_t valid = 0;
  for (auto& c : codes) {
    c = rng.below(6) == 0 ? 0 : (*five)[rng.below(5)].code;
    if (c != 0) {
      ++naive[c];
      ++valid;
    }
  }
  const auto fromRaster = classFrequencies(CategoricalRaster::fromCodes(37, 23, 0, 1, codes, five), 8);
  CHECK(fromRaster.validTotal == valid);
  for (std::size_t i = 0; i < 5; ++i) CHECK(fromRaster.counts[i] == naive[(*five)[i].code]);

  CHECK_THROWS_AS(classFrequencies(CrossTab::zero(two, two), true), ValidationError);
}

TEST_CASE("temporal_consistency: annual frequency table") {
  const auto siam = loadLegend(dataFile("legends/siam19.csv"));
  const auto printed =
      testsupport::readTemporal(dataFile("published/siam19_annual_frequencies_2006_2009.csv"));
  std::vector<EpochFrequencies> epochs;
  for (int year = 2006; year <= 2009; ++year)
    epochs.push_back({std::to_string(year), siam, std::vector<double>(siam->size())});
  for (std::size_t c = 0; c < siam->size(); ++c) {
    const auto& row = printed.rows.at((*siam)[c].acronym);
    for (std::size_t e = 0; e < 4; ++e) epochs[e].values[c] = row.series[e];
  }
  const auto groups = loadGroups(dataFile("groups/siam19_groups.csv"), *siam);
  REQUIRE(groups.size() == 2);
  const auto stats = temporalConsistency(epochs, groups);

  for (std::size_t c = 0; c < siam->size(); ++c) {
    const auto& row = printed.rows.at((*siam)[c].acronym);
    INFO((*siam)[c].acronym);
    CHECK(std::abs(stats.classes[c].mean - row.mean) <= 0.01);
    CHECK(std::abs(stats.classes[c].stddev - row.std) <= 0.01);
    CHECK(stats.classes[c].stddev == doctest::Approx(testsupport::welfordStdDev(row.series)));
  }
  const auto sv = siam->requireAcronym("sV_HC");
  CHECK(std::abs(stats.classes[sv].mean - 33.38) <= 0.01);
  CHECK(std::abs(stats.classes[sv].stddev - 0.68) <= 0.01);

  CHECK(stats.groups[0].label == "Total vegetation");
  CHECK(std::abs(stats.groups[0].mean - 78.66) <= 0.01);
  CHECK(std::abs(stats.groups[0].stddev - 1.20) <= 0.01);
  CHECK(stats.groups[1].label == "Total soils");
  CHECK(std::abs(stats.groups[1].mean - 18.98) <= 0.01);
  CHECK(std::abs(stats.groups[1].stddev - 1.25) <= 0.01);
}

TEST_CASE("temporal_consistency: edge cases") {
  const auto two = makeLegend("two", 2);
  const std::vector<EpochFrequencies> constant{{"a", two, {3, 7}}, {"b", two, {3, 7}}, {"c", two, {3, 7}}};
  const auto stats = temporalConsistency(constant);
  CHECK(stats.classes[0].stddev == 0.0);
  CHECK(stats.classes[1].mean == 7.0);

  CHECK_THROWS_AS(temporalConsistency(std::span(constant).first(1)), UsageError);
  const std::vector<EpochFrequencies> mixed{{"a", two, {3, 7}}, {"b", makeLegend("x", 2, 5), {3, 7}}};
  CHECK_THROWS_WITH_AS(temporalConsistency(mixed), doctest::Contains("legend mismatch"),
                       ValidationError);
}

TEST_CASE("summarize_boxplot") {
  const auto degenerate = summarizeBoxplot({0.42});
  CHECK(degenerate.min == 0.42);
  CHECK(degenerate.q1 == 0.42);
  CHECK(degenerate.median == 0.42);
  CHECK(degenerate.q3 == 0.42);
  CHECK(degenerate.max == 0.42);

  const std::vector<double> five{0.3, 0.1, 0.5, 0.2, 0.4};
  for (const auto rule : {QuartileRule::Type7, QuartileRule::TukeyHinges}) {
    const auto box = summarizeBoxplot(five, rule);
    CHECK(box.median == doctest::Approx(0.3));
    CHECK(box.q1 == doctest::Approx(0.2));
    CHECK(box.q3 == doctest::Approx(0.4));
    CHECK(box.lowerWhisker == doctest::Approx(0.1));
    CHECK(box.upperWhisker == doctest::Approx(0.5));
    CHECK(box.outliers.empty());
  }

  const std::vector<double> withOutlier{0.1, 0.2, 0.3, 0.4, 0.5, 2.0};
  const auto box = summarizeBoxplot(withOutlier);
  CHECK(box.q1 == doctest::Approx(testsupport::quantileType7(withOutlier, 0.25)));
  CHECK(box.q3 == doctest::Approx(testsupport::quantileType7(withOutlier, 0.75)));
  CHECK(box.median == doctest::Approx(testsupport::quantileType7(withOutlier, 0.5)));
  CHECK(box.outliers == std::vector<double>{2.0});
  CHECK(box.upperWhisker == doctest::Approx(0.5));
  CHECK(box.max == 2.0);

  // Tukey hinges differ from type 7 for n = 6: hinges are the medians of
  // {0.1, 0.2, 0.3} and {0.4, 0.5, 2.0}.
  const auto tukey = summarizeBoxplot(withOutlier, QuartileRule::TukeyHinges);
  CHECK(tukey.q1 == doctest::Approx(0.2));
  CHECK(tukey.q3 == doctest::Approx(0.5));

  CHECK(parseQuartileRule("tukey-hinges") == QuartileRule::TukeyHinges);
  CHECK(quartileRuleId(QuartileRule::Type7) == "type7");
  CHECK_THROWS_AS(parseQuartileRule("type6"), UsageError);
  CHECK_THROWS_AS(summarizeBoxplot({}), ValidationError);
}

TEST_CASE("property: boxplot ordering invariant") {
  TestRng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> values(1 + rng.below(30));
    for (auto& v : values) v = rng.below(4) == 0 ? rng.unit() * 10 : rng.unit();
    for (const auto rule : {QuartileRule::Type7, QuartileRule::TukeyHinges}) {
      const auto b = summarizeBoxplot(values, rule);
      CHECK(b.min <= b.lowerWhisker);
      CHECK(b.lowerWhisker <= b.q1);
      CHECK(b.q1 <= b.median);
      CHECK(b.median <= b.q3);
      CHECK(b.q3 <= b.upperWhisker);
      CHECK(b.upperWhisker <= b.max);
      const double iqr = b.q3 - b.q1;
      std::size_t beyond = 0;
      for (const double v : values)
        if (v < b.q1 - 1.5 * iqr || v > b.q3 + 1.5 * iqr) ++beyond;
      CHECK(b.outliers.size() == beyond);
    }
  }
}

TEST_CASE("stratum_boxplots") {
  const auto test = makeLegend("t", 2);
  const auto ref = makeLegend("r", 2);
  std::vector<CrossTab> strata;
  // p(t0 | r0) = 0.1 .. 0.5 over five strata.
  for (std::uint64_t k = 1; k <= 5; ++k) strata.emplace_back(test, ref, std::vector<std::uint64_t>{k, 3, 10 - k, 4});
  // Reference class 0 absent here: skipped and counted.
  strata.emplace_back(test, ref, std::vector<std::uint64_t>{0, 5, 0, 5});

  const auto result = stratumBoxplots(strata, 0);
  CHECK(result.skippedStrata == 1);
  CHECK(result.usedStrata == std::vector<std::size_t>{0, 1, 2, 3, 4});
  REQUIRE(result.perTestClass.size() == 2);
  CHECK(result.perTestClass[0].median == doctest::Approx(0.3));
  CHECK(result.perTestClass[0].lowerWhisker == doctest::Approx(0.1));
  CHECK(result.perTestClass[0].upperWhisker == doctest::Approx(0.5));
  CHECK(result.perTestClass[1].median == doctest::Approx(0.7));

  const auto single = stratumBoxplots(std::span(strata).first(1), 0);
  CHECK(single.perTestClass[0].min == single.perTestClass[0].max);
  CHECK(single.perTestClass[0].q1 == single.perTestClass[0].q3);

  CHECK_THROWS_AS(stratumBoxplots({}, 0), ValidationError);
  CHECK_THROWS_AS(stratumBoxplots(strata, 2), ValidationError);
}
