#include "mapxtab/bounds.hpp"

#include <algorithm>
#include <cctype>

#include "mapxtab/error.hpp"

namespace mapxtab {

namespace {

constexpr Percent kZero = Percent::whole(0);
constexpr Percent kHundred = Percent::whole(100);

void requireRange(Percent p, const char* what) {
  if (p < kZero || p > kHundred)
    throw ValidationError(std::string(what) + " must lie in [0, 100], got " + p.str());
}

Interval clampInterval(Percent lower, Percent upper) {
  Interval out;
  out.rawLower = lower;
  out.rawUpper = upper;
  out.lowerClamped = lower < kZero;
  out.upperClamped = upper > kHundred;
  out.lower = std::max(lower, kZero);
  out.upper = std::min(upper, kHundred);
  return out;
}

std::string trim(std::string s) {
  const auto notSpace = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), notSpace));
  s.erase(std::find_if(s.rbegin(), s.rend(), notSpace).base(), s.end());
  return s;
}

}  // namespace

RefTruthAccuracy RefTruthAccuracy::parse(const std::string& text) {
  std::string s = trim(text);
  RefTruthAccuracy out;
  for (const std::string prefix : {">=", "\xE2\x89\xA5"}) {
    if (s.rfind(prefix, 0) == 0) {
      out.atLeast = true;
      s = trim(s.substr(prefix.size()));
      break;
    }
  }
  if (s.empty()) throw ValidationError("reference accuracy is empty");
  if (out.atLeast && std::isalpha(static_cast<unsigned char>(s.front()))) return out;
  out.value = Percent::parse(s);
  requireRange(*out.value, "reference accuracy");
  return out;
}

Interval propagateInterval(Percent oaTestVsRef, Percent oaRefVsTruth) {
  requireRange(oaTestVsRef, "test-versus-reference accuracy");
  requireRange(oaRefVsTruth, "reference-versus-truth accuracy");
  const Percent mismatchRef = kHundred - oaRefVsTruth;
  const Percent mismatchTest = kHundred - oaTestVsRef;
  return clampInterval(oaTestVsRef - mismatchRef, oaRefVsTruth + mismatchTest);
}

Interval propagateInterval(const AccuracyInput& input) {
  if (!input.oaRefVsTruth.value)
    throw ValidationError("reference accuracy is symbolic; use the symbolic propagation");
  if (input.uncertainty != kZero)
    throw ValidationError("nonzero sampling uncertainty is not supported");
  return propagateInterval(input.oaTestVsRef, *input.oaRefVsTruth.value);
}

Interval SymbolicInterval::evaluate(Percent xx) const {
  requireRange(xx, symbol.c_str());
  return clampInterval(xx - halfWidth, xx + halfWidth);
}

std::string SymbolicInterval::str() const {
  return "[" + symbol + " - " + halfWidth.str() + ", " + symbol + " + " + halfWidth.str() + "]";
}

SymbolicInterval propagateSymbolic(Percent oaTestVsRef) {
  requireRange(oaTestVsRef, "test-versus-reference accuracy");
  return SymbolicInterval{kHundred - oaTestVsRef};
}

bool legendCoarseningCheck(std::span<const std::pair<std::size_t, Percent>> entries) {
  for (std::size_t i = 1; i < entries.size(); ++i)
    if (entries[i].first >= entries[i - 1].first)
      throw ValidationError("legend coarsening: cardinalities must strictly decrease");
  for (std::size_t i = 1; i < entries.size(); ++i)
    if (entries[i].second < entries[i - 1].second) return false;
  return true;
}

}  // namespace mapxtab
