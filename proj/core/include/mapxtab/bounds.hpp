#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "mapxtab/percent.hpp"

namespace mapxtab {

/// Closed percentage range. The raw endpoints are kept next to the clamped
/// ones so a report can show which clamp was active.
struct Interval {
  Percent lower;
  Percent upper;
  Percent rawLower;
  Percent rawUpper;
  bool lowerClamped = false;
  bool upperClamped = false;

  Percent width() const { return upper - lower; }
  bool contains(Percent p) const { return lower <= p && p <= upper; }
};

/// Reference-versus-truth accuracy: a number, or only a lower bound ">= XX"
/// whose value may be unknown.
struct RefTruthAccuracy {
  std::optional<Percent> value;
  bool atLeast = false;

  /// Accepts "78", "78%", ">=84", ">= XX" and the same with the Unicode sign.
  static RefTruthAccuracy parse(const std::string& text);
};

struct AccuracyInput {
  Percent oaTestVsRef;
  /// Sampling uncertainty of oaTestVsRef; zero for wall-to-wall counts.
  Percent uncertainty;
  RefTruthAccuracy oaRefVsTruth;
};

/// Worst-case test-versus-truth interval:
/// [max(0, oa_t - (100 - oa_r)), min(100, oa_r + (100 - oa_t))].
/// Throws ValidationError for inputs outside [0, 100].
Interval propagateInterval(Percent oaTestVsRef, Percent oaRefVsTruth);
Interval propagateInterval(const AccuracyInput& input);

/// [XX - h, XX + h] with h = 100 - oa_t, kept symbolic in XX.
struct SymbolicInterval {
  Percent halfWidth;
  std::string symbol = "XX";

  /// Substitutes a value for XX and clamps to [0, 100].
  Interval evaluate(Percent xx) const;
  /// "[XX - 6.91, XX + 6.91]"
  std::string str() const;
};

SymbolicInterval propagateSymbolic(Percent oaTestVsRef);

/// True iff accuracy never decreases as legends coarsen. Entries are
/// (legend cardinality, accuracy) ordered by strictly decreasing
/// cardinality; a violated order throws ValidationError.
bool legendCoarseningCheck(std::span<const std::pair<std::size_t, Percent>> entries);

}  // namespace mapxtab
