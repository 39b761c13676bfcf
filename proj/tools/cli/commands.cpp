#include "commands.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "mapxtab/bounds.hpp"
#include "mapxtab/crosstab.hpp"
#include "mapxtab/csv.hpp"
#include "mapxtab/error.hpp"
#include "mapxtab/legend.hpp"
#include "mapxtab/metrics.hpp"
#include "mapxtab/percent.hpp"
#include "mapxtab/provenance.hpp"
#include "mapxtab/raster.hpp"
#include "mapxtab/synth.hpp"

namespace mapxtab::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// Plumbing -------------------------------------------------------------------

/// Config file keys without a section belong to the subcommand being run, so
/// a plain `key = value` file can stand in for that subcommand's flags.
class SubcommandConfig : public CLI::ConfigTOML {
 public:
  explicit SubcommandConfig(const CLI::App* app) : app_(app) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigTOML::from_config(input);
    const auto selected = app_->get_subcommands();
    if (!selected.empty())
      for (auto& item : items)
        if (item.parents.empty()) item.parents = {selected.front()->get_name()};
    return items;
  }

 private:
  const CLI::App* app_;
};

unsigned defaultThreads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return std::clamp(hw, 1u, 4u);
}

std::string fixed(double value, int decimals) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*f", decimals, value);
  return buffer;
}

double percentNumber(Percent p) { return static_cast<double>(p.hundredths()) / 100.0; }

fs::path requireFile(const std::string& path, const std::string& role) {
  if (path.empty()) throw UsageError(role + " is required");
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw IoError(role + " not found: " + path);
  return path;
}

void ensureDirectory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void writeText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

/// JSON envelope shared by every command: tool identity, input digests,
/// parameters, method identifiers, then the command's results.
class Report {
 public:
  explicit Report(std::string command) {
    doc_["tool"] = {{"name", "mapxtab"}, {"version", std::string(toolVersion())}};
    doc_["command"] = std::move(command);
    doc_["generated_at"] = utcTimestamp();
    doc_["inputs"] = json::array();
    doc_["parameters"] = json::object();
    doc_["methods"] = json::object();
    doc_["results"] = json::object();
  }

  void input(const std::string& role, const fs::path& path) {
    doc_["inputs"].push_back(
        {{"role", role}, {"path", path.generic_string()}, {"sha256", sha256File(path)}});
  }
  json& parameters() { return doc_["parameters"]; }
  json& methods() { return doc_["methods"]; }
  json& results() { return doc_["results"]; }

  std::string dump() const { return doc_.dump(2) + "\n"; }
  void write(const fs::path& path) const { writeText(path, dump()); }

 private:
  json doc_ = json::object();
};

// Shared option groups -------------------------------------------------------

struct RunOptions {
  std::uint32_t tileSize = kDefaultTileSize;
  unsigned threads = defaultThreads();
  std::string outDir = ".";

  void attach(CLI::App* app, bool withOutput = true) {
    app->add_option("--tile-size", tileSize, "Tile edge length in pixels")
        ->check(CLI::Range(1u, 1u << 16));
    app->add_option("--threads", threads, "Worker thread cap")->check(CLI::Range(1u, 256u));
    if (withOutput) app->add_option("--out", outDir, "Output directory");
  }
  void record(Report& report) const {
    report.parameters()["tile_size"] = tileSize;
    report.parameters()["threads"] = threads;
  }
  StreamOptions stream() const { return StreamOptions{tileSize, tileSize, threads}; }
};

struct MapOptions {
  std::string test;
  std::string reference;
  std::string testLegend;
  std::string referenceLegend;
  std::string strata;
  std::string strataLegend;
  std::string aggregateTest;
  std::string aggregateTestLegend;
  std::string aggregateReference;
  std::string aggregateReferenceLegend;

  void attach(CLI::App* app, bool withStrata) {
    app->add_option("--test", test, "Test map (CMAP or CMAPA)");
    app->add_option("--reference", reference, "Reference map (CMAP or CMAPA)");
    app->add_option("--test-legend", testLegend, "Test legend CSV")->required();
    app->add_option("--reference-legend", referenceLegend, "Reference legend CSV")->required();
    if (withStrata) {
      app->add_option("--strata", strata, "Stratum map");
      app->add_option("--strata-legend", strataLegend, "Stratum legend CSV");
    }
    app->add_option("--aggregate-test", aggregateTest, "Aggregation CSV applied to test rows");
    app->add_option("--aggregate-test-legend", aggregateTestLegend,
                    "Target legend of --aggregate-test");
    app->add_option("--aggregate-reference", aggregateReference,
                    "Aggregation CSV applied to reference columns");
    app->add_option("--aggregate-reference-legend", aggregateReferenceLegend,
                    "Target legend of --aggregate-reference");
  }
};

struct LoadedLegends {
  LegendPtr test;
  LegendPtr reference;
  std::optional<AggregationMap> aggTest;
  std::optional<AggregationMap> aggReference;

  const AggregationMap* rows() const { return aggTest ? &*aggTest : nullptr; }
  const AggregationMap* cols() const { return aggReference ? &*aggReference : nullptr; }
  LegendPtr finalTest() const { return aggTest ? aggTest->targetPtr() : test; }
  LegendPtr finalReference() const { return aggReference ? aggReference->targetPtr() : reference; }
};

LoadedLegends loadLegends(const MapOptions& m, Report& report) {
  LoadedLegends out;
  const auto testLegendPath = requireFile(m.testLegend, "--test-legend");
  const auto refLegendPath = requireFile(m.referenceLegend, "--reference-legend");
  out.test = loadLegend(testLegendPath);
  out.reference = loadLegend(refLegendPath);
  report.input("test_legend", testLegendPath);
  report.input("reference_legend", refLegendPath);

  const auto loadAgg = [&](const std::string& file, const std::string& legendFile,
                           const LegendPtr& source, const std::string& role) {
    if (file.empty() != legendFile.empty())
      throw UsageError("--" + role + " and --" + role + "-legend go together");
    if (file.empty()) return std::optional<AggregationMap>{};
    const auto aggPath = requireFile(file, "--" + role);
    const auto targetPath = requireFile(legendFile, "--" + role + "-legend");
    report.input(role, aggPath);
    report.input(role + "_legend", targetPath);
    return std::optional<AggregationMap>(loadAggregation(aggPath, source, loadLegend(targetPath)));
  };
  out.aggTest = loadAgg(m.aggregateTest, m.aggregateTestLegend, out.test, "aggregate-test");
  out.aggReference = loadAgg(m.aggregateReference, m.aggregateReferenceLegend, out.reference,
                             "aggregate-reference");
  return out;
}

CrossTab applyAggregations(const CrossTab& ct, const LoadedLegends& legends) {
  if (!legends.rows() && !legends.cols()) return ct;
  return aggregateCrossTab(ct, legends.rows(), legends.cols());
}

json crossTabSummary(const CrossTab& ct) {
  return {{"rows", ct.test().id()},
          {"columns", ct.reference().id()},
          {"valid_total", ct.validTotal()},
          {"excluded_total", ct.excludedTotal()}};
}

std::string safeName(const std::string& acronym) {
  std::string out = acronym;
  for (auto& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') c = '_';
  return out;
}

void writeTables(const fs::path& dir, const std::string& stem, const CrossTab& ct, bool percent) {
  writeCrossTabCsv(dir / (stem + ".csv"), ct, false);
  if (percent) writeCrossTabCsv(dir / (stem + ".percent.csv"), ct, true);
}

// crosstab / stratify --------------------------------------------------------

struct CrosstabArgs {
  MapOptions maps;
  RunOptions run;
  bool percent = false;
  bool noStrata = false;
  std::string relation;
  // stratify only
  std::string referenceClass;
  std::string quartileRule = "type7";
};

int runCrosstab(const CrosstabArgs& a, bool stratifyMode, std::ostream& out) {
  const std::string command = stratifyMode ? "stratify" : "crosstab";
  Report report(command);
  a.run.record(report);

  const auto legends = loadLegends(a.maps, report);
  const auto testPath = requireFile(a.maps.test, "--test");
  const auto refPath = requireFile(a.maps.reference, "--reference");
  report.input("test", testPath);
  report.input("reference", refPath);

  std::optional<BinaryRelation> relation;
  if (!a.relation.empty()) {
    const auto relationPath = requireFile(a.relation, "--relation");
    report.input("relation", relationPath);
    relation = loadRelation(relationPath, legends.finalTest(), legends.finalReference());
  }

  const bool useStrata = !a.noStrata && !a.maps.strata.empty();
  if (stratifyMode && !a.noStrata && a.maps.strata.empty())
    throw UsageError("stratify needs --strata (or --no-strata for the total only)");
  if (useStrata && a.maps.strataLegend.empty())
    throw UsageError("--strata needs --strata-legend");

  const auto testMap = openRaster(testPath, legends.test);
  const auto refMap = openRaster(refPath, legends.reference);
  std::optional<StratumSet> strata;
  if (useStrata) {
    const auto strataPath = requireFile(a.maps.strata, "--strata");
    const auto strataLegendPath = requireFile(a.maps.strataLegend, "--strata-legend");
    report.input("strata", strataPath);
    report.input("strata_legend", strataLegendPath);
    const auto strataLegend = loadLegend(strataLegendPath);
    strata = StratumSet{openRaster(strataPath, strataLegend), strataLegend};
  }

  const auto result = crosstabStreamed(testMap, refMap, strata ? &*strata : nullptr, a.run.stream());
  const fs::path outDir = a.run.outDir;
  ensureDirectory(outDir);

  const CrossTab total = applyAggregations(result.total, legends);
  writeTables(outDir, "crosstab", total, a.percent);
  report.methods()["tally"] = "tile-streamed exact integer counts";
  report.methods()["percent_rounding"] = "half-up, 2 decimals";
  report.results()["tiles_processed"] = result.tilesProcessed;
  report.results()["total"] = crossTabSummary(total);
  report.results()["total"]["csv"] = "crosstab.csv";
  if (relation) {
    const auto oa = overallAgreement(total, *relation);
    report.results()["overall_agreement"] = {{"percent", percentNumber(oa.rounded)},
                                             {"uncertainty", percentNumber(oa.uncertainty)}};
  }
  out << "total: " << total.validTotal() << " valid, " << total.excludedTotal()
      << " excluded pixels -> " << (outDir / "crosstab.csv").generic_string() << "\n";

  std::vector<CrossTab> perStratum;
  if (result.strata) {
    const fs::path strataDir = outDir / "strata";
    ensureDirectory(strataDir);
    const auto& strataLegend = *strata->legend;
    json list = json::array();
    for (std::size_t k = 0; k < result.strata->perStratum.size(); ++k) {
      perStratum.push_back(applyAggregations(result.strata->perStratum[k], legends));
      const std::string stem = safeName(strataLegend[k].acronym);
      writeTables(strataDir, stem, perStratum.back(), a.percent);
      auto entry = crossTabSummary(perStratum.back());
      entry["stratum"] = strataLegend[k].acronym;
      entry["csv"] = "strata/" + stem + ".csv";
      list.push_back(std::move(entry));
    }
    const CrossTab nodataStratum = applyAggregations(result.strata->nodataStratum, legends);
    writeTables(strataDir, "_nodata", nodataStratum, a.percent);
    auto entry = crossTabSummary(nodataStratum);
    entry["stratum"] = nullptr;
    entry["csv"] = "strata/_nodata.csv";
    list.push_back(std::move(entry));
    report.results()["strata"] = std::move(list);
    out << "strata: " << perStratum.size() << " tables -> "
        << strataDir.generic_string() << "\n";
  }

  if (stratifyMode && !a.referenceClass.empty()) {
    if (perStratum.empty()) throw UsageError("--reference-class needs --strata");
    const auto rule = parseQuartileRule(a.quartileRule);
    const auto refIndex = total.reference().requireAcronym(a.referenceClass);
    const auto boxes = stratumBoxplots(perStratum, refIndex, rule);
    const auto& strataLegend = *strata->legend;

    std::string longCsv = "class,stratum,statistic,value\n";
    for (std::size_t t = 0; t < total.rows(); ++t)
      for (std::size_t i = 0; i < boxes.usedStrata.size(); ++i)
        longCsv += csv::joinRow({total.test()[t].acronym,
                                 strataLegend[boxes.usedStrata[i]].acronym,
                                 "p_test_given_reference", fixed(boxes.samples[t][i], 6)}) +
                   "\n";
    writeText(outDir / "boxplot_samples.csv", longCsv);

    std::string summary =
        "class,n,min,q1,median,q3,max,lower_whisker,upper_whisker,outliers\n";
    json boxJson = json::array();
    for (std::size_t t = 0; t < boxes.perTestClass.size(); ++t) {
      const auto& b = boxes.perTestClass[t];
      std::string outliers;
      for (const double v : b.outliers) outliers += (outliers.empty() ? "" : " ") + fixed(v, 6);
      summary += csv::joinRow({total.test()[t].acronym, std::to_string(b.n), fixed(b.min, 6),
                               fixed(b.q1, 6), fixed(b.median, 6), fixed(b.q3, 6),
                               fixed(b.max, 6), fixed(b.lowerWhisker, 6),
                               fixed(b.upperWhisker, 6), outliers}) +
                 "\n";
      boxJson.push_back({{"class", total.test()[t].acronym},
                         {"n", b.n},
                         {"min", b.min},
                         {"q1", b.q1},
                         {"median", b.median},
                         {"q3", b.q3},
                         {"max", b.max},
                         {"lower_whisker", b.lowerWhisker},
                         {"upper_whisker", b.upperWhisker},
                         {"outliers", b.outliers}});
    }
    writeText(outDir / "boxplot_summary.csv", summary);
    report.methods()["quartile_rule"] = quartileRuleId(rule);
    report.methods()["whisker_rule"] = "1.5 IQR";
    report.results()["boxplots"] = {{"reference_class", a.referenceClass},
                                    {"strata_used", boxes.usedStrata.size()},
                                    {"strata_skipped", boxes.skippedStrata},
                                    {"classes", std::move(boxJson)}};
    out << "boxplots: " << boxes.usedStrata.size() << " strata used, " << boxes.skippedStrata
        << " skipped\n";
  }

  report.write(outDir / (command + ".json"));
  return kOk;
}

// metrics --------------------------------------------------------------------

struct MetricsArgs {
  MapOptions maps;
  RunOptions run;
  std::string crosstab;
  std::string relation;
  std::vector<std::string> associations{"cramers-v"};
  std::string plugin;
  std::size_t topK = 5;
};

std::string conditionalCsv(const ConditionalTable& table) {
  csv::Row header{""};
  for (const auto& c : table.reference->classes()) header.push_back(c.acronym);
  std::string text = csv::joinRow(header) + "\n";
  for (std::size_t t = 0; t < table.rows(); ++t) {
    csv::Row row{(*table.test)[t].acronym};
    for (std::size_t r = 0; r < table.cols(); ++r) row.push_back(fixed(table.at(t, r), 4));
    text += csv::joinRow(row) + "\n";
  }
  return text;
}

std::pair<std::string, json> topKReport(const ConditionalTable& table, std::size_t k) {
  std::string text = "conditioning,rank,partner,probability\n";
  json rows = json::array();
  for (const auto& row : topKMatches(table, k)) {
    const auto& name = table.conditioningLegend()[row.conditioning].acronym;
    json matches = json::array();
    for (std::size_t i = 0; i < row.matches.size(); ++i) {
      const auto& partner = table.partnerLegend()[row.matches[i].partner].acronym;
      text += csv::joinRow({name, std::to_string(i + 1), partner,
                            fixed(row.matches[i].probability, 4)}) +
              "\n";
      matches.push_back({{"partner", partner}, {"probability", row.matches[i].probability}});
    }
    rows.push_back(
        {{"conditioning", name}, {"zero_marginal", row.zeroMarginal}, {"matches", matches}});
  }
  return {text, rows};
}

int runMetrics(const MetricsArgs& a, std::ostream& out) {
  Report report("metrics");
  a.run.record(report);
  const auto legends = loadLegends(a.maps, report);

  CrossTab ct = CrossTab::zero(legends.test, legends.reference);
  if (!a.crosstab.empty()) {
    if (!a.maps.test.empty() || !a.maps.reference.empty())
      throw UsageError("give either --crosstab or --test/--reference, not both");
    const auto path = requireFile(a.crosstab, "--crosstab");
    report.input("crosstab", path);
    ct = readCrossTabCsv(path, legends.test, legends.reference);
  } else {
    const auto testPath = requireFile(a.maps.test, "--test");
    const auto refPath = requireFile(a.maps.reference, "--reference");
    report.input("test", testPath);
    report.input("reference", refPath);
    ct = crosstabStreamed(openRaster(testPath, legends.test),
                          openRaster(refPath, legends.reference), nullptr, a.run.stream())
             .total;
  }
  ct = applyAggregations(ct, legends);

  const auto relationPath = requireFile(a.relation, "--relation");
  report.input("relation", relationPath);
  const auto relation = loadRelation(relationPath, ct.testPtr(), ct.referencePtr());

  const fs::path outDir = a.run.outDir;
  ensureDirectory(outDir);

  const auto oa = overallAgreement(ct, relation);
  report.methods()["overall_agreement"] = "relation-guided, wall-to-wall";
  report.results()["crosstab"] = crossTabSummary(ct);
  report.results()["overall_agreement"] = {{"percent", percentNumber(oa.rounded)},
                                           {"exact_percent", oa.exact},
                                           {"uncertainty", percentNumber(oa.uncertainty)},
                                           {"agreeing_pixels", oa.agreeing},
                                           {"relation_pairs", relation.size()}};
  out << "OA = " << oa.rounded.str() << "% \xC2\xB1" << oa.uncertainty.str() << "%\n";

  const auto registry = AssociationRegistry::builtin(a.plugin);
  if (!a.plugin.empty()) report.input("association_plugin", requireFile(a.plugin, "--plugin"));
  json assoc = json::array();
  std::string assocCsv = "method,value,semantic_gap,definition\n";
  for (const auto& method : a.associations) {
    const auto result = registry.compute(method, ct, relation);
    const double gap = semanticGap(result);
    assoc.push_back({{"method", result.method},
                     {"value", result.value},
                     {"semantic_gap", gap},
                     {"definition", result.definition}});
    assocCsv += csv::joinRow({result.method, fixed(result.value, 4), fixed(gap, 4),
                              result.definition}) +
                "\n";
    out << result.method << " = " << fixed(result.value, 4) << " (semantic gap "
        << fixed(gap, 4) << ")\n";
  }
  report.methods()["association"] = a.associations;
  report.results()["association"] = std::move(assoc);
  writeText(outDir / "association.csv", assocCsv);

  const auto givenRef = conditionalGivenReference(ct);
  const auto givenTest = conditionalGivenTest(ct);
  writeText(outDir / "conditional_given_reference.csv", conditionalCsv(givenRef));
  writeText(outDir / "conditional_given_test.csv", conditionalCsv(givenTest));
  auto [topRefCsv, topRefJson] = topKReport(givenRef, a.topK);
  auto [topTestCsv, topTestJson] = topKReport(givenTest, a.topK);
  writeText(outDir / "topk_given_reference.csv", topRefCsv);
  writeText(outDir / "topk_given_test.csv", topTestCsv);
  report.methods()["top_k"] = {{"k", a.topK}, {"ties", "legend order"}};
  report.results()["top_k_given_reference"] = std::move(topRefJson);
  report.results()["top_k_given_test"] = std::move(topTestJson);

  std::string summary = "metric,value\n";
  summary += "overall_agreement_percent," + oa.rounded.str() + "\n";
  summary += "overall_agreement_uncertainty_percent," + oa.uncertainty.str() + "\n";
  writeText(outDir / "metrics.csv", summary);
  report.write(outDir / "metrics.json");
  return kOk;
}

// bounds ---------------------------------------------------------------------

struct BoundsArgs {
  std::string oaTestRef;
  std::string oaRefTruth;
  std::string substitute;
};

json intervalJson(const Interval& iv) {
  return {{"lower", percentNumber(iv.lower)},
          {"upper", percentNumber(iv.upper)},
          {"raw_lower", percentNumber(iv.rawLower)},
          {"raw_upper", percentNumber(iv.rawUpper)},
          {"lower_clamped", iv.lowerClamped},
          {"upper_clamped", iv.upperClamped}};
}

int runBounds(const BoundsArgs& a, std::ostream& out) {
  const Percent oaTest = Percent::parse(a.oaTestRef);
  const auto refTruth = RefTruthAccuracy::parse(a.oaRefTruth);

  Report report("bounds");
  report.methods()["propagation"] = "superposition worst case, fixed-point hundredths";
  report.parameters()["oa_test_ref"] = percentNumber(oaTest);
  report.parameters()["oa_test_ref_uncertainty"] = 0.0;
  report.parameters()["oa_ref_truth"] = a.oaRefTruth;

  if (!refTruth.atLeast) {
    if (!a.substitute.empty()) throw UsageError("--xx applies only to a '>=' reference accuracy");
    report.results()["interval"] = intervalJson(propagateInterval(oaTest, *refTruth.value));
  } else {
    const auto symbolic = propagateSymbolic(oaTest);
    report.results()["symbolic"] = {{"expression", symbolic.str()},
                                    {"half_width", percentNumber(symbolic.halfWidth)},
                                    {"reference_accuracy_at_least",
                                     refTruth.value ? json(percentNumber(*refTruth.value))
                                                    : json(symbolic.symbol)}};
    // Substitution only on request; a lower bound is never silently
    // promoted to a value.
    if (!a.substitute.empty()) {
      const Percent xx = Percent::parse(a.substitute);
      if (refTruth.value && xx < *refTruth.value)
        throw ValidationError("--xx is below the stated lower bound " + refTruth.value->str());
      report.results()["evaluated"] = {{"xx", percentNumber(xx)},
                                       {"interval", intervalJson(symbolic.evaluate(xx))}};
    }
  }
  out << report.dump();
  return kOk;
}

// temporal -------------------------------------------------------------------

struct TemporalArgs {
  RunOptions run;
  std::string legend;
  std::vector<std::string> epochs;
  std::vector<std::string> labels;
  std::string frequencies;
  std::string groups;
};

/// Frequency table: `class,<epoch>...` with percentages. Columns named mean
/// or std and rows whose class starts with "group:" are summary lines and
/// are skipped.
std::vector<EpochFrequencies> readFrequencyTable(const fs::path& path, const LegendPtr& legend) {
  const auto rows = csv::readFile(path);
  if (rows.empty() || rows.front().empty() || rows.front().front() != "class")
    throw ValidationError(path.string() + ": expected a header starting with 'class'");
  std::vector<std::size_t> columns;
  std::vector<EpochFrequencies> epochs;
  for (std::size_t j = 1; j < rows.front().size(); ++j) {
    const auto& name = rows.front()[j];
    if (name == "mean" || name == "std") continue;
    columns.push_back(j);
    epochs.push_back({name, legend, std::vector<double>(legend->size(), 0.0)});
  }
  std::vector<bool> seen(legend->size(), false);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.front().rfind("group:", 0) == 0) continue;
    if (row.size() != rows.front().size()) throw ValidationError(path.string() + ": ragged row");
    const auto c = legend->requireAcronym(row.front());
    seen[c] = true;
    for (std::size_t e = 0; e < columns.size(); ++e) {
      const auto& text = row[columns[e]];
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
      if (ec != std::errc{} || ptr != text.data() + text.size())
        throw ValidationError(path.string() + ": '" + text + "' is not a number");
      epochs[e].values[c] = value;
    }
  }
  for (std::size_t c = 0; c < seen.size(); ++c)
    if (!seen[c]) throw ValidationError(path.string() + ": no row for class " + (*legend)[c].acronym);
  return epochs;
}

int runTemporal(const TemporalArgs& a, std::ostream& out) {
  Report report("temporal");
  a.run.record(report);
  const auto legendPath = requireFile(a.legend, "--legend");
  report.input("legend", legendPath);
  const auto legend = loadLegend(legendPath);

  std::vector<EpochFrequencies> epochs;
  if (!a.frequencies.empty()) {
    if (!a.epochs.empty()) throw UsageError("give either --frequencies or --epoch, not both");
    const auto path = requireFile(a.frequencies, "--frequencies");
    report.input("frequencies", path);
    epochs = readFrequencyTable(path, legend);
  } else {
    if (!a.labels.empty() && a.labels.size() != a.epochs.size())
      throw UsageError("--label must be given once per --epoch");
    for (std::size_t e = 0; e < a.epochs.size(); ++e) {
      const auto path = requireFile(a.epochs[e], "--epoch");
      report.input("epoch", path);
      const auto freq = classFrequencies(openRaster(path, legend), a.run.tileSize);
      std::vector<double> percents;
      for (const double p : freq.proportions()) percents.push_back(100.0 * p);
      epochs.push_back(
          {a.labels.empty() ? path.stem().string() : a.labels[e], legend, std::move(percents)});
    }
  }
  if (epochs.size() < 2) throw UsageError("temporal needs at least two epochs");

  std::vector<ClassGroup> groups;
  if (!a.groups.empty()) {
    const auto path = requireFile(a.groups, "--groups");
    report.input("groups", path);
    groups = loadGroups(path, *legend);
  }
  const auto stats = temporalConsistency(epochs, groups);

  const fs::path outDir = a.run.outDir;
  ensureDirectory(outDir);
  csv::Row header{"class"};
  for (const auto& e : stats.epochs) header.push_back(e);
  header.push_back("mean");
  header.push_back("std");
  std::string text = csv::joinRow(header) + "\n";
  json rows = json::array();
  const auto emit = [&](const TemporalRow& row, bool group) {
    csv::Row line{group ? "group:" + row.label : row.label};
    for (const double v : row.series) line.push_back(fixed(v, 2));
    line.push_back(fixed(row.mean, 4));
    line.push_back(fixed(row.stddev, 4));
    text += csv::joinRow(line) + "\n";
    rows.push_back({{"label", row.label},
                    {"group", group},
                    {"series", row.series},
                    {"mean", row.mean},
                    {"std", row.stddev}});
  };
  for (const auto& row : stats.classes) emit(row, false);
  for (const auto& row : stats.groups) emit(row, true);
  writeText(outDir / "temporal.csv", text);
  report.methods()["std"] = "sample, n-1 denominator";
  report.results()["epochs"] = stats.epochs;
  report.results()["rows"] = std::move(rows);
  report.write(outDir / "temporal.json");
  out << stats.classes.size() << " classes, " << stats.groups.size() << " groups over "
      << stats.epochs.size() << " epochs -> " << (outDir / "temporal.csv").generic_string()
      << "\n";
  return kOk;
}

// synth ----------------------------------------------------------------------

struct SynthArgs {
  RunOptions run;
  std::string spec;
  std::string sidecar;
  std::string testLegend;
  std::string referenceLegend;
  std::string encoding = "binary";
};

RasterEncoding parseEncoding(const std::string& name) {
  if (name == "binary" || name == "cmap") return RasterEncoding::Binary;
  if (name == "ascii" || name == "cmapa") return RasterEncoding::Ascii;
  throw UsageError("unknown encoding '" + name + "' (use binary or ascii)");
}

int runSynth(const SynthArgs& a, std::ostream& out) {
  Report report("synth");
  const auto specPath = requireFile(a.spec, "--spec");
  const auto sidecarPath = requireFile(a.sidecar, "--sidecar");
  const auto testLegendPath = requireFile(a.testLegend, "--test-legend");
  const auto refLegendPath = requireFile(a.referenceLegend, "--reference-legend");
  for (const auto& [role, path] : {std::pair{"spec", specPath}, {"sidecar", sidecarPath},
                                   {"test_legend", testLegendPath},
                                   {"reference_legend", refLegendPath}})
    report.input(role, path);
  const auto encoding = parseEncoding(a.encoding);

  const auto spec =
      loadJointSpec(specPath, sidecarPath, loadLegend(testLegendPath), loadLegend(refLegendPath));
  const auto pair = generatePair(spec);

  const fs::path outDir = a.run.outDir;
  ensureDirectory(outDir);
  const std::string ext = encoding == RasterEncoding::Binary ? ".cmap" : ".cmapa";
  writeRaster(outDir / ("test" + ext), pair.test, encoding);
  writeRaster(outDir / ("reference" + ext), pair.reference, encoding);
  writeCrossTabCsv(outDir / "expected.csv", pair.expected, false);

  report.methods()["generator"] = std::string(kGeneratorId);
  report.methods()["apportionment"] = "largest remainder";
  report.parameters()["total_pixels"] = spec.totalPixels;
  report.parameters()["seed"] = spec.seed;
  report.results()["width"] = pair.test.width();
  report.results()["height"] = pair.test.height();
  report.results()["test_nodata"] = pair.test.nodata();
  report.results()["reference_nodata"] = pair.reference.nodata();
  report.results()["files"] = {"test" + ext, "reference" + ext, "expected.csv"};
  report.write(outDir / "synth.json");
  out << pair.test.width() << "x" << pair.test.height() << " pair -> " << outDir.generic_string()
      << "\n";
  return kOk;
}

// convert --------------------------------------------------------------------

struct ConvertArgs {
  std::string input;
  std::string output;
  std::string to = "ascii";
  std::string legend;
};

int runConvert(const ConvertArgs& a, std::ostream& out) {
  const auto inputPath = requireFile(a.input, "--input");
  if (a.output.empty()) throw UsageError("--output is required");
  LegendPtr legend;
  if (!a.legend.empty()) legend = loadLegend(requireFile(a.legend, "--legend"));
  const auto raster = openRaster(inputPath, legend);
  writeRaster(a.output, raster, parseEncoding(a.to));
  out << raster.width() << "x" << raster.height() << " -> " << a.output << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Wall-to-wall comparison of categorical maps with different legends", "mapxtab"};
  app.set_version_flag("--version", std::string(toolVersion()));
  app.require_subcommand(1);
  app.set_config("--config", "", "Plain `key = value` file for the subcommand's options");
  app.config_formatter(std::make_shared<SubcommandConfig>(&app));
  app.allow_config_extras(CLI::config_extras_mode::error);

  CrosstabArgs crosstabArgs;
  auto* crosstab = app.add_subcommand("crosstab", "Stream two maps into an overlapping-area matrix");
  crosstabArgs.maps.attach(crosstab, true);
  crosstabArgs.run.attach(crosstab);
  crosstab->add_flag("--percent", crosstabArgs.percent, "Also write 2-decimal percentage tables");
  crosstab->add_option("--relation", crosstabArgs.relation, "Relation CSV; adds OA to the report");

  CrosstabArgs stratifyArgs;
  auto* stratify = app.add_subcommand("stratify", "Per-stratum matrices and boxplot summaries");
  stratifyArgs.maps.attach(stratify, true);
  stratifyArgs.run.attach(stratify);
  stratify->add_flag("--percent", stratifyArgs.percent, "Also write percentage tables");
  stratify->add_flag("--no-strata", stratifyArgs.noStrata, "Ignore strata; total only");
  stratify->add_option("--relation", stratifyArgs.relation, "Relation CSV");
  stratify->add_option("--reference-class", stratifyArgs.referenceClass,
                       "Reference acronym whose p(t|r) is summarized across strata");
  stratify->add_option("--quartile-rule", stratifyArgs.quartileRule, "type7 or tukey-hinges");

  MetricsArgs metricsArgs;
  auto* metrics = app.add_subcommand("metrics", "Agreement, association and conditional tables");
  metricsArgs.maps.attach(metrics, false);
  metricsArgs.run.attach(metrics);
  metrics->add_option("--crosstab", metricsArgs.crosstab, "Count CSV instead of maps");
  metrics->add_option("--relation", metricsArgs.relation, "Relation CSV")->required();
  metrics->add_option("--association", metricsArgs.associations, "Association method(s)");
  metrics->add_option("--plugin", metricsArgs.plugin, "Shared object for cvpai2-plugin");
  metrics->add_option("--top-k", metricsArgs.topK, "Matches per class")->check(CLI::PositiveNumber);

  BoundsArgs boundsArgs;
  auto* bounds = app.add_subcommand("bounds", "Propagate accuracy into a test-versus-truth interval");
  bounds->add_option("--oa-test-ref", boundsArgs.oaTestRef, "OA of test vs reference (%)")
      ->required();
  bounds->add_option("--oa-ref-truth", boundsArgs.oaRefTruth,
                     "OA of reference vs truth (%), or '>=XX' / '>=84'")
      ->required();
  bounds->add_option("--xx", boundsArgs.substitute, "Value substituted into a symbolic bound");

  TemporalArgs temporalArgs;
  auto* temporal = app.add_subcommand("temporal", "Per-class mean and std across epochs");
  temporalArgs.run.attach(temporal);
  temporal->add_option("--legend", temporalArgs.legend, "Legend shared by every epoch")->required();
  temporal->add_option("--epoch", temporalArgs.epochs, "Epoch map (repeat)");
  temporal->add_option("--label", temporalArgs.labels, "Epoch label (repeat, same order)");
  temporal->add_option("--frequencies", temporalArgs.frequencies, "Per-epoch percentage table");
  temporal->add_option("--groups", temporalArgs.groups, "group,class CSV");

  SynthArgs synthArgs;
  auto* synth = app.add_subcommand("synth", "Generate a map pair realizing a joint distribution");
  synthArgs.run.attach(synth);
  synth->add_option("--spec", synthArgs.spec, "Joint weights CSV")->required();
  synth->add_option("--sidecar", synthArgs.sidecar, "total_pixels / seed file")->required();
  synth->add_option("--test-legend", synthArgs.testLegend, "Test legend CSV")->required();
  synth->add_option("--reference-legend", synthArgs.referenceLegend, "Reference legend CSV")
      ->required();
  synth->add_option("--encoding", synthArgs.encoding, "binary or ascii");

  ConvertArgs convertArgs;
  auto* convert = app.add_subcommand("convert", "Convert between CMAP and CMAPA");
  convert->add_option("--input", convertArgs.input, "Source map")->required();
  convert->add_option("--output", convertArgs.output, "Destination map")->required();
  convert->add_option("--to", convertArgs.to, "binary or ascii");
  convert->add_option("--legend", convertArgs.legend, "Validate codes against this legend");

  // CLI11 reads --config only before the subcommand; accept it anywhere.
  std::vector<std::string> argv(args.begin() + (args.empty() ? 0 : 1), args.end());
  for (std::size_t i = 0; i + 1 < argv.size(); ++i) {
    if (argv[i] == "--config") {
      const std::string path = argv[i + 1];
      argv.erase(argv.begin() + static_cast<std::ptrdiff_t>(i),
                 argv.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      argv.insert(argv.begin(), {"--config", path});
      break;
    }
  }
  std::reverse(argv.begin(), argv.end());

  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << toolVersion() << "\n";
    return kOk;
  } catch (const CLI::FileError& e) {
    err << "mapxtab: " << e.what() << "\n";
    return kIo;
  } catch (const CLI::ParseError& e) {
    err << "mapxtab: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*crosstab) return runCrosstab(crosstabArgs, false, out);
    if (*stratify) return runCrosstab(stratifyArgs, true, out);
    if (*metrics) return runMetrics(metricsArgs, out);
    if (*bounds) return runBounds(boundsArgs, out);
    if (*temporal) return runTemporal(temporalArgs, out);
    if (*synth) return runSynth(synthArgs, out);
    if (*convert) return runConvert(convertArgs, out);
  } catch (const Error& e) {
    err << "mapxtab: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    err << "mapxtab: " << e.what() << "\n";
    return kValidation;
  }
  return kUsage;
}

}  // namespace mapxtab::cli
