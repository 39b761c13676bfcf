#include "mapxtab/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "mapxtab/csv.hpp"
#include "mapxtab/error.hpp"

namespace mapxtab {

std::uint64_t SeededRng::below(std::uint64_t bound) {
  if (bound == 0) throw ValidationError("bounded draw needs a positive bound");
  __extension__ using u128 = unsigned __int128;
  u128 product = static_cast<u128>(next()) * bound;
  auto low = static_cast<std::uint64_t>(product);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      product = static_cast<u128>(next()) * bound;
      low = static_cast<std::uint64_t>(product);
    }
  }
  return static_cast<std::uint64_t>(product >> 64);
}

// Joint specifications -------------------------------------------------------

void validateJointSpec(const JointSpec& spec) {
  if (!spec.test || !spec.reference) throw ValidationError("joint spec: legends are required");
  if (spec.joint.size() != spec.test->size() * spec.reference->size())
    throw ValidationError("joint spec: expected one proportion per legend pair");
  double sum = 0.0;
  for (const double p : spec.joint) {
    if (!(p >= 0.0) || !std::isfinite(p))
      throw ValidationError("joint spec: proportions must be finite and non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw ValidationError("joint spec: proportions sum to " + std::to_string(sum) + ", not 1");
}

namespace {

std::uint64_t parseUnsigned(const std::string& text, const std::string& what) {
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw ValidationError(what + ": '" + text + "' is not a non-negative integer");
  return value;
}

double parseWeight(const std::string& text, const std::string& where) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !(value >= 0.0) ||
      !std::isfinite(value))
    throw ValidationError(where + ": '" + text + "' is not a non-negative number");
  return value;
}

}  // namespace

JointSpec loadJointSpec(const std::filesystem::path& csvPath,
                        const std::filesystem::path& sidecarPath, LegendPtr test,
                        LegendPtr reference) {
  const auto rows = csv::readFile(csvPath);
  const std::string where = csvPath.string();
  if (rows.size() != test->size() + 1 || rows.front().size() != reference->size() + 1)
    throw ValidationError(where + ": expected a " + std::to_string(test->size()) + " x " +
                          std::to_string(reference->size()) + " table with header");
  std::vector<std::size_t> colIndex;
  for (std::size_t j = 1; j < rows.front().size(); ++j)
    colIndex.push_back(reference->requireAcronym(rows.front()[j]));

  JointSpec spec{test, reference, std::vector<double>(test->size() * reference->size(), 0.0), 0, 0};
  std::vector<bool> seen(test->size(), false);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != rows.front().size()) throw ValidationError(where + ": ragged row");
    const auto t = test->requireAcronym(row[0]);
    if (seen[t]) throw ValidationError(where + ": duplicate row '" + row[0] + "'");
    seen[t] = true;
    for (std::size_t j = 1; j < row.size(); ++j)
      spec.joint[t * reference->size() + colIndex[j - 1]] = parseWeight(row[j], where);
  }
  const double sum = std::accumulate(spec.joint.begin(), spec.joint.end(), 0.0);
  if (!(sum > 0.0)) throw ValidationError(where + ": all weights are zero");
  for (auto& p : spec.joint) p /= sum;

  const auto kv = csv::readKeyValues(sidecarPath);
  for (const auto& [key, value] : kv) {
    if (key == "total_pixels")
      spec.totalPixels = parseUnsigned(value, "total_pixels");
    else if (key == "seed")
      spec.seed = parseUnsigned(value, "seed");
    else
      throw ValidationError(sidecarPath.string() + ": unknown key '" + key + "'");
  }
  if (!kv.count("total_pixels") || !kv.count("seed"))
    throw ValidationError(sidecarPath.string() + ": total_pixels and seed are required");
  return spec;
}

std::vector<std::uint64_t> apportion(std::span<const double> weights, std::uint64_t total) {
  long double sum = 0;
  for (const double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw ValidationError("apportionment: weights must be finite and non-negative");
    sum += w;
  }
  if (!(sum > 0)) throw ValidationError("apportionment: all weights are zero");

  std::vector<std::uint64_t> counts(weights.size(), 0);
  std::vector<long double> remainders(weights.size(), 0);
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const long double quota = static_cast<long double>(weights[i]) * total / sum;
    const auto whole = static_cast<std::uint64_t>(std::floor(quota));
    counts[i] = whole;
    remainders[i] = quota - static_cast<long double>(whole);
    assigned += whole;
  }
  if (assigned > total) throw ValidationError("apportionment: rounding overflow");

  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::uint64_t k = 0; k < total - assigned; ++k) ++counts[order[k % order.size()]];
  return counts;
}

std::vector<std::uint64_t> apportion(std::span<const std::uint64_t> weights, std::uint64_t total) {
  __extension__ using u128 = unsigned __int128;
  u128 sum = 0;
  for (const auto w : weights) sum += w;
  if (sum == 0) throw ValidationError("apportionment: all weights are zero");

  std::vector<std::uint64_t> counts(weights.size());
  std::vector<u128> remainders(weights.size());
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const u128 scaled = static_cast<u128>(weights[i]) * total;
    counts[i] = static_cast<std::uint64_t>(scaled / sum);
    remainders[i] = scaled % sum;
    assigned += counts[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::uint64_t k = 0; k < total - assigned; ++k) ++counts[order[k]];
  return counts;
}

ClassCode chooseNodata(const Legend& legend) {
  ClassCode code = 0;
  while (legend.indexOfCode(code)) ++code;
  return code;
}

unsigned codeWidthFor(ClassCode maxCode) {
  if (maxCode <= 0xFFu) return 1;
  if (maxCode <= 0xFFFFu) return 2;
  return 4;
}

std::pair<std::uint32_t, std::uint32_t> squarestShape(std::uint64_t pixels) {
  if (pixels == 0) throw ValidationError("synthetic raster needs at least one pixel");
  auto width = static_cast<std::uint64_t>(std::sqrt(static_cast<long double>(pixels)));
  while (width * width > pixels) --width;
  while (pixels % width != 0) --width;
  const std::uint64_t height = pixels / width;
  if (height > 0xFFFFFFFFull)
    throw ValidationError("synthetic raster: " + std::to_string(pixels) +
                          " pixels do not factor into a representable grid");
  return {static_cast<std::uint32_t>(width), static_cast<std::uint32_t>(height)};
}

namespace {

ClassCode maxCodeOf(const Legend& legend, ClassCode nodata) {
  ClassCode maxCode = nodata;
  for (const auto& c : legend.classes()) maxCode = std::max(maxCode, c.code);
  return maxCode;
}

}  // namespace

// Generation -----------------------------------------------------------------

SyntheticPair generatePair(const JointSpec& spec) {
  validateJointSpec(spec);
  const auto nonzero = static_cast<std::uint64_t>(
      std::count_if(spec.joint.begin(), spec.joint.end(), [](double p) { return p > 0.0; }));
  if (spec.totalPixels < nonzero)
    throw ValidationError("infeasible apportionment: " + std::to_string(spec.totalPixels) +
                          " pixels for " + std::to_string(nonzero) + " nonzero cells");

  const auto counts = apportion(spec.joint, spec.totalPixels);
  const auto [width, height] = squarestShape(spec.totalPixels);
  const std::size_t cols = spec.reference->size();

  // One cell index per pixel, laid out cell by cell and then shuffled.
  std::vector<std::uint32_t> cells;
  cells.reserve(spec.totalPixels);
  for (std::size_t c = 0; c < counts.size(); ++c)
    cells.insert(cells.end(), counts[c], static_cast<std::uint32_t>(c));
  SeededRng rng(spec.seed);
  for (std::size_t i = cells.size(); i > 1; --i) std::swap(cells[i - 1], cells[rng.below(i)]);

  std::vector<ClassCode> testCodes(cells.size());
  std::vector<ClassCode> refCodes(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    testCodes[i] = (*spec.test)[cells[i] / cols].code;
    refCodes[i] = (*spec.reference)[cells[i] % cols].code;
  }

  const ClassCode testNodata = chooseNodata(*spec.test);
  const ClassCode refNodata = chooseNodata(*spec.reference);
  return SyntheticPair{
      CategoricalRaster::fromCodes(width, height, testNodata,
                                   codeWidthFor(maxCodeOf(*spec.test, testNodata)),
                                   std::move(testCodes), spec.test),
      CategoricalRaster::fromCodes(width, height, refNodata,
                                   codeWidthFor(maxCodeOf(*spec.reference, refNodata)),
                                   std::move(refCodes), spec.reference),
      CrossTab(spec.test, spec.reference, counts)};
}

CategoricalRaster generateTruth(std::uint32_t width, std::uint32_t height, LegendPtr legend,
                                std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<ClassCode> codes(std::uint64_t{width} * height);
  for (auto& code : codes) code = (*legend)[rng.below(legend->size())].code;
  const ClassCode nodata = chooseNodata(*legend);
  const unsigned codeWidth = codeWidthFor(maxCodeOf(*legend, nodata));
  return CategoricalRaster::fromCodes(width, height, nodata, codeWidth, std::move(codes),
                                      std::move(legend));
}

void writeUniformRaster(const std::filesystem::path& path, std::uint32_t width,
                        std::uint32_t height, LegendPtr legend, std::uint64_t seed,
                        RasterEncoding encoding) {
  // A strip source that draws each row on demand keeps memory at one strip.
  constexpr std::uint32_t kStripRows = 64;
  const ClassCode nodata = chooseNodata(*legend);
  const unsigned codeWidth = codeWidthFor(maxCodeOf(*legend, nodata));

  RasterHeader header;
  header.encoding = encoding;
  header.width = width;
  header.height = height;
  header.nodata = nodata;
  header.codeWidth = codeWidth;
  if (width == 0 || height == 0) throw ValidationError("zero dimension");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << header.line();

  SeededRng rng(seed);
  std::vector<ClassCode> strip;
  std::string text;
  std::vector<unsigned char> bytes;
  for (std::uint32_t y = 0; y < height; y += kStripRows) {
    const std::uint32_t rows = std::min(kStripRows, height - y);
    strip.resize(std::size_t{rows} * width);
    for (auto& code : strip) code = (*legend)[rng.below(legend->size())].code;
    if (encoding == RasterEncoding::Binary) {
      bytes.resize(strip.size() * codeWidth);
      for (std::size_t i = 0; i < strip.size(); ++i)
        for (unsigned b = 0; b < codeWidth; ++b)
          bytes[i * codeWidth + b] = static_cast<unsigned char>(strip[i] >> (8 * b));
      out.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
    } else {
      text.clear();
      for (std::uint32_t r = 0; r < rows; ++r) {
        for (std::uint32_t c = 0; c < width; ++c) {
          if (c) text += ' ';
          text += std::to_string(strip[std::size_t{r} * width + c]);
        }
        text += '\n';
      }
      out << text;
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

// Perturbation ---------------------------------------------------------------

Confusion Confusion::identity(LegendPtr legend) {
  const std::size_t k = legend->size();
  Confusion c{std::move(legend), std::vector<double>(k * k, 0.0)};
  for (std::size_t i = 0; i < k; ++i) c.matrix[i * k + i] = 1.0;
  return c;
}

Confusion Confusion::uniform(LegendPtr legend) {
  const std::size_t k = legend->size();
  return Confusion{std::move(legend), std::vector<double>(k * k, 1.0 / static_cast<double>(k))};
}

CategoricalRaster perturb(const CategoricalRaster& truth, const Confusion& confusion,
                          std::uint64_t seed) {
  if (!truth.legend() || !confusion.legend || !truth.legend()->sameClasses(*confusion.legend))
    throw ValidationError("perturb: confusion legend differs from the raster legend");
  const Legend& legend = *confusion.legend;
  const std::size_t k = legend.size();
  if (confusion.matrix.size() != k * k) throw ValidationError("perturb: confusion must be k x k");

  std::vector<double> cumulative(k * k);
  for (std::size_t i = 0; i < k; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = confusion.matrix[i * k + j];
      if (!(p >= 0.0) || !std::isfinite(p))
        throw ValidationError("perturb: non-stochastic matrix (negative or non-finite entry)");
      sum += p;
      cumulative[i * k + j] = sum;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ValidationError("perturb: non-stochastic matrix (row " + legend[i].acronym +
                            " sums to " + std::to_string(sum) + ")");
  }

  const CodeLookup lookup(legend);
  SeededRng rng(seed);
  auto codes = truth.readAll();
  for (auto& code : codes) {
    if (code == truth.nodata()) continue;
    const auto row = static_cast<std::size_t>(lookup(code));
    const double* cum = &cumulative[row * k];
    const double u = rng.unit() * cum[k - 1];
    std::size_t j = static_cast<std::size_t>(std::upper_bound(cum, cum + k, u) - cum);
    // Guard against u landing on the final cumulative value by rounding.
    while (j >= k || confusion.matrix[row * k + j] == 0.0) j = j >= k ? k - 1 : j - 1;
    code = legend[j].code;
  }
  return CategoricalRaster::fromCodes(truth.width(), truth.height(), truth.nodata(),
                                      truth.codeWidth(), std::move(codes), truth.legend());
}

// Oracle ---------------------------------------------------------------------

CrossTab bruteForceCrossTab(std::span<const ClassCode> test, std::span<const ClassCode> reference,
                            LegendPtr testLegend, LegendPtr referenceLegend,
                            ClassCode testNodata, ClassCode referenceNodata) {
  if (test.size() != reference.size()) throw ValidationError("brute force: shape mismatch");
  const auto find = [](const Legend& legend, ClassCode code) {
    for (std::size_t i = 0; i < legend.size(); ++i)
      if (legend[i].code == code) return i;
    throw ValidationError("brute force: code " + std::to_string(code) + " outside legend '" +
                          legend.id() + "'");
  };
  std::vector<std::uint64_t> counts(testLegend->size() * referenceLegend->size(), 0);
  std::uint64_t excluded = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test[i] == testNodata || reference[i] == referenceNodata) {
      ++excluded;
      continue;
    }
    const auto t = find(*testLegend, test[i]);
    const auto r = find(*referenceLegend, reference[i]);
    ++counts[t * referenceLegend->size() + r];
  }
  return CrossTab(std::move(testLegend), std::move(referenceLegend), std::move(counts), excluded);
}

CrossTab bruteForceCrossTab(const CategoricalRaster& test, const CategoricalRaster& reference) {
  if (test.width() != reference.width() || test.height() != reference.height())
    throw ValidationError("brute force: shape mismatch");
  const auto a = test.readAll();
  const auto b = reference.readAll();
  return bruteForceCrossTab(a, b, test.legend(), reference.legend(), test.nodata(),
                            reference.nodata());
}

}  // namespace mapxtab
