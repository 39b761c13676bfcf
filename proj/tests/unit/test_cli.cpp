#include <cmath>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "doctest.h"
#include "json.hpp"
#include "mapxtab/crosstab.hpp"
#include "mapxtab/metrics.hpp"
#include "mapxtab/synth.hpp"
#include "oracles.hpp"
#include "published.hpp"
#include "tempdir.hpp"

using namespace mapxtab;
using json = nlohmann::json;
using testsupport::dataFile;
using testsupport::TempDir;
using testsupport::TestRng;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome runCli(std::vector<std::string> args) {
  args.insert(args.begin(), "mapxtab");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json readJson(const std::filesystem::path& path) { return json::parse(slurp(path)); }

std::string data(const std::string& relative) { return dataFile(relative).string(); }

// Random pair on the two published legends, written to disk.
void writeRandomPair(const TempDir& tmp, std::uint64_t seed) {
  TestRng rng(seed);
  const auto siam = loadLegend(dataFile("legends/siam19.csv"));
  const auto nlcd = loadLegend(dataFile("legends/nlcd16.csv"));
  const std::uint32_t w = 61, h = 47;
  std::vector<ClassCode> t(w * h), r(w * h);
  for (auto& c : t) c = rng.below(15) == 0 ? 0 : (*siam)[rng.below(siam->size())].code;
  for (auto& c : r) c = rng.below(15) == 0 ? 0 : (*nlcd)[rng.below(nlcd->size())].code;
  writeRaster(tmp / "test.cmap", CategoricalRaster::fromCodes(w, h, 0, 1, t, siam),
              RasterEncoding::Binary);
  writeRaster(tmp / "ref.cmapa", CategoricalRaster::fromCodes(w, h, 0, 1, r, nlcd),
              RasterEncoding::Ascii);
}

std::vector<std::string> mapArgs(const TempDir& tmp) {
  return {"--test", (tmp / "test.cmap").string(), "--reference", (tmp / "ref.cmapa").string(),
          "--test-legend", data("legends/siam19.csv"), "--reference-legend",
          data("legends/nlcd16.csv")};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("cli: bounds prints the interval as JSON") {
  auto r = runCli({"bounds", "--oa-test-ref", "96.88", "--oa-ref-truth", "78"});
  REQUIRE(r.code == 0);
  auto doc = json::parse(r.out);
  CHECK(doc["results"]["interval"]["lower"] == 74.88);
  CHECK(doc["results"]["interval"]["upper"] == 81.12);
  CHECK(doc["results"]["interval"]["lower_clamped"] == false);

  r = runCli({"bounds", "--oa-test-ref", "100", "--oa-ref-truth", "84"});
  doc = json::parse(r.out);
  CHECK(doc["results"]["interval"]["lower"] == 84.0);
  CHECK(doc["results"]["interval"]["upper"] == 84.0);

  r = runCli({"bounds", "--oa-test-ref", "93.09", "--oa-ref-truth", ">=84"});
  REQUIRE(r.code == 0);
  doc = json::parse(r.out);
  CHECK(doc["results"]["symbolic"]["expression"] == "[XX - 6.91, XX + 6.91]");
  CHECK(doc["results"]["symbolic"]["half_width"] == 6.91);
  CHECK_FALSE(doc["results"].contains("evaluated"));

  r = runCli({"bounds", "--oa-test-ref", "93.09", "--oa-ref-truth", ">=84", "--xx", "84"});
  doc = json::parse(r.out);
  CHECK(doc["results"]["evaluated"]["interval"]["lower"] == 77.09);
  CHECK(doc["results"]["evaluated"]["interval"]["upper"] == 90.91);
  CHECK(runCli({"bounds", "--oa-test-ref", "93.09", "--oa-ref-truth", ">=84", "--xx", "80"}).code == 3);
}

TEST_CASE("cli: exit codes") {
  CHECK(runCli({}).code == 1);
  CHECK(runCli({"nonsense"}).code == 1);
  CHECK(runCli({"bounds", "--oa-test-ref", "96.88"}).code == 1);
  CHECK(runCli({"bounds", "--oa-test-ref", "96.88", "--oa-ref-truth", "78", "--bogus"}).code == 1);
  CHECK(runCli({"bounds", "--oa-test-ref", "abc", "--oa-ref-truth", "78"}).code == 3);
  CHECK(runCli({"bounds", "--oa-test-ref", "120", "--oa-ref-truth", "78"}).code == 3);
  CHECK(runCli({"--version"}).code == 0);

  TempDir tmp;
  writeRandomPair(tmp, 1);
  auto args = mapArgs(tmp);
  args[5] = (tmp / "absent.csv").string();
  const auto missingLegend = runCli(concat({"crosstab"}, concat(args, {"--out", (tmp / "o").string()})));
  CHECK(missingLegend.code == 2);
  CHECK(missingLegend.err.find("not found") != std::string::npos);

  const auto missingRelation =
      runCli(concat({"metrics"}, concat(mapArgs(tmp), {"--relation", (tmp / "none.csv").string(),
                                                    "--out", (tmp / "o").string()})));
  CHECK(missingRelation.code == 2);

  // Test map read against the wrong legend: codes fall outside it.
  auto swapped = mapArgs(tmp);
  std::swap(swapped[5], swapped[7]);
  CHECK(runCli(concat({"crosstab"}, concat(swapped, {"--out", (tmp / "o").string()}))).code == 3);
}

TEST_CASE("cli: config file stands in for flags and flags override it") {
  TempDir tmp;
  std::ofstream(tmp / "bounds.conf") << "# batch settings\noa-test-ref = 10\noa-ref-truth = 78\n";
  auto r = runCli({"bounds", "--config", (tmp / "bounds.conf").string()});
  REQUIRE(r.code == 0);
  auto doc = json::parse(r.out);
  CHECK(doc["results"]["interval"]["lower"] == 0.0);
  CHECK(doc["results"]["interval"]["upper"] == 100.0);
  CHECK(doc["results"]["interval"]["lower_clamped"] == true);
  CHECK(doc["results"]["interval"]["upper_clamped"] == true);

  r = runCli({"--config", (tmp / "bounds.conf").string(), "bounds", "--oa-test-ref", "100"});
  REQUIRE(r.code == 0);
  doc = json::parse(r.out);
  CHECK(doc["results"]["interval"]["lower"] == 78.0);
  CHECK(doc["results"]["interval"]["upper"] == 78.0);

  std::ofstream(tmp / "typo.conf") << "oa-test-rf = 10\noa-ref-truth = 78\n";
  CHECK(runCli({"bounds", "--config", (tmp / "typo.conf").string(), "--oa-test-ref", "1"}).code == 1);
  CHECK(runCli({"bounds", "--config", (tmp / "missing.conf").string()}).code == 2);
}

TEST_CASE("cli: crosstab on identical maps writes a diagonal table") {
  TempDir tmp;
  writeRandomPair(tmp, 2);
  const auto out = (tmp / "out").string();
  const auto r = runCli({"crosstab", "--test", (tmp / "test.cmap").string(), "--reference",
                      (tmp / "test.cmap").string(), "--test-legend", data("legends/siam19.csv"),
                      "--reference-legend", data("legends/siam19.csv"), "--out", out,
                      "--tile-size", "16", "--percent"});
  REQUIRE(r.code == 0);
  const auto siam = loadLegend(dataFile("legends/siam19.csv"));
  const auto ct = readCrossTabCsv(tmp / "out" / "crosstab.csv", siam, siam);
  for (std::size_t t = 0; t < ct.rows(); ++t)
    for (std::size_t c = 0; c < ct.cols(); ++c)
      if (t != c) CHECK(ct.count(t, c) == 0);
  CHECK(std::filesystem::exists(tmp / "out" / "crosstab.percent.csv"));
  const auto doc = readJson(tmp / "out" / "crosstab.json");
  CHECK(doc["parameters"]["tile_size"] == 16);
  CHECK(doc["inputs"][0]["sha256"].get<std::string>().size() == 64);
}

TEST_CASE("cli: metrics matches library-level calls") {
  TempDir tmp;
  writeRandomPair(tmp, 3);
  const auto out = (tmp / "m").string();
  const auto r = runCli(concat({"metrics"}, concat(mapArgs(tmp),
                                                {"--relation",
                                                 data("relations/siam19_nlcd16.reconstructed.csv"),
                                                 "--plugin", MAPXTAB_TEST_PLUGIN, "--association",
                                                 "cramers-v", "--association", "cvpai2-plugin",
                                                 "--out", out, "--threads", "3"})));
  REQUIRE(r.code == 0);

  const auto siam = loadLegend(dataFile("legends/siam19.csv"));
  const auto nlcd = loadLegend(dataFile("legends/nlcd16.csv"));
  const auto ct = crosstabStreamed(openRaster(tmp / "test.cmap", siam),
                                   openRaster(tmp / "ref.cmapa", nlcd))
                      .total;
  const auto rel = loadRelation(dataFile("relations/siam19_nlcd16.reconstructed.csv"), siam, nlcd);
  const auto oa = overallAgreement(ct, rel);
  CHECK(r.out.find("OA = " + oa.rounded.str() + "% \xC2\xB1" "0.00%") != std::string::npos);

  const auto doc = readJson(tmp / "m" / "metrics.json");
  CHECK(doc["results"]["overall_agreement"]["percent"] == oa.rounded.value());
  CHECK(doc["results"]["overall_agreement"]["uncertainty"] == 0.0);
  CHECK(doc["results"]["overall_agreement"]["agreeing_pixels"] == oa.agreeing);
  CHECK(doc["results"]["association"][0]["method"] == "cramers-v");
  CHECK(doc["results"]["association"][0]["value"].get<double>() ==
        doctest::Approx(cramersV(ct)).epsilon(1e-12));
  CHECK(doc["results"]["association"][1]["value"].get<double>() ==
        doctest::Approx(oa.exact / 100).epsilon(1e-12));

  const auto top = topKMatches(conditionalGivenReference(ct), 5);
  const auto& first = doc["results"]["top_k_given_reference"][0];
  CHECK(first["conditioning"] == (*nlcd)[0].acronym);
  for (std::size_t i = 0; i < top[0].matches.size(); ++i)
    CHECK(first["matches"][i]["partner"] == (*siam)[top[0].matches[i].partner].acronym);

  const auto printed = testsupport::readTopK(tmp / "m" / "topk_given_test.csv");
  CHECK(printed.size() == siam->size());
  CHECK(std::filesystem::exists(tmp / "m" / "conditional_given_reference.csv"));
  CHECK(std::filesystem::exists(tmp / "m" / "association.csv"));

  // The plugin slot refuses to run without a definition.
  CHECK(runCli(concat({"metrics"}, concat(mapArgs(tmp), {"--relation",
                                                      data("relations/siam19_nlcd16.one_to_one.csv"),
                                                      "--association", "cvpai2-plugin", "--out",
                                                      out})))
            .code == 3);
}

TEST_CASE("cli: metrics from the joint fixture and an empty relation") {
  TempDir tmp;
  std::ofstream(tmp / "empty.csv") << "test_acronym,reference_acronym\n";
  const std::vector<std::string> base{"metrics", "--crosstab",
                                      data("fixtures/siam19_nlcd16_conus2006.counts.csv"),
                                      "--test-legend", data("legends/siam19.csv"),
                                      "--reference-legend", data("legends/nlcd16.csv"), "--out",
                                      (tmp / "m").string()};
  auto r = runCli(concat(base, {"--relation", (tmp / "empty.csv").string()}));
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("OA = 0.00% \xC2\xB1" "0.00%", 0) == 0);

  r = runCli(concat(base, {"--relation", data("relations/siam19_nlcd16.reconstructed.csv")}));
  REQUIRE(r.code == 0);
  const auto printed = testsupport::readTopK(tmp / "m" / "topk_given_reference.csv");
  CHECK(printed.at("OW").at(0).first == "WA");
  CHECK(std::abs(printed.at("OW").at(0).second - 0.64) <= 0.01);
}

TEST_CASE("cli: reports are byte-identical apart from the timestamp") {
  TempDir tmp;
  writeRandomPair(tmp, 4);
  const auto runOnce = [&](const std::string& dir) {
    const auto r = runCli(concat({"crosstab"}, concat(mapArgs(tmp), {"--out", (tmp / dir).string(),
                                                                  "--relation",
                                                                  data("relations/siam19_nlcd16.one_to_one.csv"),
                                                                  "--threads", "2"})));
    REQUIRE(r.code == 0);
    auto text = slurp(tmp / dir / "crosstab.json");
    const auto at = text.find("\"generated_at\"");
    REQUIRE(at != std::string::npos);
    text.erase(at, text.find('\n', at) - at);
    return text;
  };
  CHECK(runOnce("a") == runOnce("b"));
  CHECK(slurp(tmp / "a" / "crosstab.csv") == slurp(tmp / "b" / "crosstab.csv"));
}

TEST_CASE("cli: temporal") {
  TempDir tmp;
  const auto r = runCli({"temporal", "--legend", data("legends/siam19.csv"), "--frequencies",
                      data("published/siam19_annual_frequencies_2006_2009.csv"), "--groups",
                      data("groups/siam19_groups.csv"), "--out", tmp.path().string()});
  REQUIRE(r.code == 0);
  const auto table = testsupport::readTemporal(tmp / "temporal.csv");
  const auto published =
      testsupport::readTemporal(dataFile("published/siam19_annual_frequencies_2006_2009.csv"));
  for (const auto& name : published.order) {
    INFO(name);
    REQUIRE(table.rows.count(name) == 1);
    CHECK(std::abs(table.rows.at(name).mean - published.rows.at(name).mean) <= 0.01);
    CHECK(std::abs(table.rows.at(name).std - published.rows.at(name).std) <= 0.01);
  }

  writeRandomPair(tmp, 5);
  CHECK(runCli({"temporal", "--legend", data("legends/siam19.csv"), "--epoch",
             (tmp / "test.cmap").string(), "--out", tmp.path().string()})
            .code == 1);
  const auto constant = runCli({"temporal", "--legend", data("legends/siam19.csv"), "--epoch",
                             (tmp / "test.cmap").string(), "--epoch", (tmp / "test.cmap").string(),
                             "--label", "2006", "--label", "2007", "--out", (tmp / "c").string()});
  REQUIRE(constant.code == 0);
  for (const auto& [name, row] : testsupport::readTemporal(tmp / "c" / "temporal.csv").rows)
    CHECK(row.std == 0.0);
}

TEST_CASE("cli: synth, crosstab and convert round trip") {
  TempDir tmp;
  std::ofstream(tmp / "joint.csv") << ",C1,C2\nC1,3,1\nC2,0,4\n";
  std::ofstream(tmp / "joint.conf") << "total_pixels = 1000\nseed = 7\n";
  std::ofstream(tmp / "legend.csv") << "code,acronym,name\n1,C1,one\n2,C2,two\n";
  const auto legend = (tmp / "legend.csv").string();
  auto r = runCli({"synth", "--spec", (tmp / "joint.csv").string(), "--sidecar",
                (tmp / "joint.conf").string(), "--test-legend", legend, "--reference-legend",
                legend, "--out", (tmp / "s").string()});
  REQUIRE(r.code == 0);
  CHECK(readJson(tmp / "s" / "synth.json")["methods"]["generator"] == std::string(kGeneratorId));

  r = runCli({"convert", "--input", (tmp / "s" / "test.cmap").string(), "--output",
           (tmp / "s" / "test.cmapa").string(), "--to", "ascii", "--legend", legend});
  REQUIRE(r.code == 0);
  r = runCli({"crosstab", "--test", (tmp / "s" / "test.cmapa").string(), "--reference",
           (tmp / "s" / "reference.cmap").string(), "--test-legend", legend, "--reference-legend",
           legend, "--out", (tmp / "x").string()});
  REQUIRE(r.code == 0);
  CHECK(slurp(tmp / "x" / "crosstab.csv") == slurp(tmp / "s" / "expected.csv"));
  CHECK(slurp(tmp / "s" / "expected.csv") == ",C1,C2\nC1,375,125\nC2,0,500\n");
}

TEST_CASE("cli: stratify reproduces the ecoregion table in its stratum") {
  const auto siam = loadLegend(dataFile("legends/siam19.csv"));
  const auto nlcd = loadLegend(dataFile("legends/nlcd16.csv"));
  const auto specOf = [&](const char* fixture, std::uint64_t seed) {
    const auto ct = readCrossTabCsv(dataFile(fixture), siam, nlcd);
    JointSpec spec{siam, nlcd, {}, 1000000, seed};
    for (const auto c : ct.counts()) spec.joint.push_back(static_cast<double>(c) / ct.validTotal());
    return spec;
  };
  // Stratum WB on top realizes the ecoregion fixture; stratum REST below it
  // realizes the national one.
  const auto basin = generatePair(specOf("fixtures/siam19_nlcd16_wyoming_basin2006.counts.csv", 1));
  const auto rest = generatePair(specOf("fixtures/siam19_nlcd16_conus2006.counts.csv", 2));
  REQUIRE(basin.test.width() == rest.test.width());
  const auto stack = [](const CategoricalRaster& top, const CategoricalRaster& bottom) {
    auto codes = top.readAll();
    const auto more = bottom.readAll();
    codes.insert(codes.end(), more.begin(), more.end());
    return CategoricalRaster::fromCodes(top.width(), top.height() + bottom.height(), top.nodata(),
                                        top.codeWidth(), std::move(codes), top.legend());
  };
  TempDir tmp;
  writeRaster(tmp / "test.cmap", stack(basin.test, rest.test), RasterEncoding::Binary);
  writeRaster(tmp / "ref.cmap", stack(basin.reference, rest.reference), RasterEncoding::Binary);
  std::ofstream(tmp / "eco.csv") << "code,acronym,name\n1,WB,Wyoming Basin\n2,REST,Elsewhere\n";
  const auto eco = loadLegend(tmp / "eco.csv");
  std::vector<ClassCode> mask(std::size_t{basin.test.width()} * basin.test.height() * 2, 2);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(mask.size() / 2), 1);
  writeRaster(tmp / "eco.cmap",
              CategoricalRaster::fromCodes(basin.test.width(), basin.test.height() * 2, 0, 1, mask,
                                           eco),
              RasterEncoding::Binary);

  const std::vector<std::string> base{
      "stratify", "--test", (tmp / "test.cmap").string(), "--reference",
      (tmp / "ref.cmap").string(), "--test-legend", data("legends/siam19.csv"),
      "--reference-legend", data("legends/nlcd16.csv"), "--percent", "--tile-size", "512"};
  const auto r = runCli(concat(base, {"--strata", (tmp / "eco.cmap").string(), "--strata-legend",
                                   (tmp / "eco.csv").string(), "--reference-class", "SS", "--out",
                                   (tmp / "out").string()}));
  REQUIRE(r.code == 0);

  const auto wb = testsupport::readPercentTable([&] {
    // The percent CSV has no total column; append one so the printed-table
    // reader can parse it.
    std::ifstream in(tmp / "out" / "strata" / "WB.percent.csv");
    std::ofstream fixed(tmp / "wb.csv");
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      fixed << line << (header ? ",total\n" : ",0\n");
      header = false;
    }
    return tmp / "wb.csv";
  }());
  CHECK(std::abs(wb.cells[wb.row("smS_1")][wb.col("SS")] - 32.71) <= 0.01);

  const auto total = readCrossTabCsv(tmp / "out" / "crosstab.csv", siam, nlcd);
  const auto a = readCrossTabCsv(tmp / "out" / "strata" / "WB.csv", siam, nlcd);
  const auto b = readCrossTabCsv(tmp / "out" / "strata" / "REST.csv", siam, nlcd);
  const auto n = readCrossTabCsv(tmp / "out" / "strata" / "_nodata.csv", siam, nlcd);
  for (std::size_t i = 0; i < total.counts().size(); ++i)
    CHECK(a.counts()[i] + b.counts()[i] + n.counts()[i] == total.counts()[i]);
  CHECK(n.validTotal() == 0);

  const auto samples = slurp(tmp / "out" / "boxplot_samples.csv");
  CHECK(samples.rfind("class,stratum,statistic,value\n", 0) == 0);
  CHECK(samples.find("smS_1,WB,p_test_given_reference,") != std::string::npos);
  const auto doc = readJson(tmp / "out" / "stratify.json");
  CHECK(doc["results"]["boxplots"]["strata_used"] == 2);
  CHECK(doc["methods"]["quartile_rule"] == "type7");

  const auto totalOnly = runCli(concat(base, {"--no-strata", "--out", (tmp / "t").string()}));
  REQUIRE(totalOnly.code == 0);
  CHECK_FALSE(std::filesystem::exists(tmp / "t" / "strata"));
  CHECK(runCli(concat(base, {"--out", (tmp / "u").string()})).code == 1);
}
