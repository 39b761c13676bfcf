#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mapxtab/crosstab.hpp"
#include "mapxtab/legend.hpp"
#include "mapxtab/raster.hpp"

namespace mapxtab {

/// Recorded in every output that depends on generated pixels.
inline constexpr std::string_view kGeneratorId = "mt19937_64/lemire-bounded/fisher-yates";

/// The one random source used by synthesis. Bounded draws use Lemire's
/// multiply-and-reject method rather than std::uniform_int_distribution,
/// whose algorithm differs between standard libraries.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, bound); bound > 0.
  std::uint64_t below(std::uint64_t bound);
  /// Uniform in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

/// Target joint distribution of a synthetic pair.
struct JointSpec {
  LegendPtr test;
  LegendPtr reference;
  std::vector<double> joint;  // rows x cols proportions summing to 1
  std::uint64_t totalPixels = 0;
  std::uint64_t seed = 0;
};

/// Throws ValidationError unless proportions are non-negative and sum to 1
/// within 1e-12.
void validateJointSpec(const JointSpec& spec);

/// Loads the weights from a cross-tab shaped CSV (any non-negative numbers,
/// normalized on load) and `total_pixels` / `seed` from a key=value sidecar.
JointSpec loadJointSpec(const std::filesystem::path& csvPath,
                        const std::filesystem::path& sidecarPath, LegendPtr test,
                        LegendPtr reference);

/// Largest-remainder apportionment of `total` over normalized weights. The
/// result always sums to `total`; equal remainders favour the lower index.
std::vector<std::uint64_t> apportion(std::span<const double> weights, std::uint64_t total);
/// Exact integer variant: remainders are compared as integers, so equal
/// remainders are recognised as ties.
std::vector<std::uint64_t> apportion(std::span<const std::uint64_t> weights, std::uint64_t total);

/// 0 when the legend does not use it, otherwise the smallest unused code.
ClassCode chooseNodata(const Legend& legend);

/// Smallest of 1, 2, 4 bytes that holds `maxCode`.
unsigned codeWidthFor(ClassCode maxCode);

/// Width and height with width * height = pixels and width the largest
/// divisor not above sqrt(pixels).
std::pair<std::uint32_t, std::uint32_t> squarestShape(std::uint64_t pixels);

struct SyntheticPair {
  CategoricalRaster test;
  CategoricalRaster reference;
  /// Exact cross-tab the pair realizes.
  CrossTab expected;
};

/// Cell counts are the apportioned joint; placement is a seeded shuffle.
SyntheticPair generatePair(const JointSpec& spec);

/// Independent uniform draws over the legend classes (no nodata pixels).
CategoricalRaster generateTruth(std::uint32_t width, std::uint32_t height, LegendPtr legend,
                                std::uint64_t seed);

/// Same distribution as generateTruth, streamed to disk a strip at a time so
/// large fixtures never sit in memory.
void writeUniformRaster(const std::filesystem::path& path, std::uint32_t width,
                        std::uint32_t height, LegendPtr legend, std::uint64_t seed,
                        RasterEncoding encoding = RasterEncoding::Binary);

/// Row-stochastic matrix over one legend: entry (i, j) is the probability
/// that a pixel of class i is relabelled j.
struct Confusion {
  LegendPtr legend;
  std::vector<double> matrix;

  static Confusion identity(LegendPtr legend);
  static Confusion uniform(LegendPtr legend);
};

/// Resamples every non-nodata pixel from its confusion row.
CategoricalRaster perturb(const CategoricalRaster& truth, const Confusion& confusion,
                          std::uint64_t seed);

/// Reference semantics for the streaming tally: one loop over whole arrays
/// with a linear legend search per pixel.
CrossTab bruteForceCrossTab(std::span<const ClassCode> test, std::span<const ClassCode> reference,
                            LegendPtr testLegend, LegendPtr referenceLegend,
                            ClassCode testNodata, ClassCode referenceNodata);

CrossTab bruteForceCrossTab(const CategoricalRaster& test, const CategoricalRaster& reference);

}  // namespace mapxtab
