#include "mapxtab/percent.hpp"

#include <cmath>
#include <cstdlib>

#include "mapxtab/error.hpp"

namespace mapxtab {

Percent Percent::parse(std::string_view text) {
  const std::string original(text);
  bool negative = false;
  if (!text.empty() && (text.front() == '-' || text.front() == '+')) {
    negative = text.front() == '-';
    text.remove_prefix(1);
  }
  if (!text.empty() && text.back() == '%') text.remove_suffix(1);
  std::int64_t whole = 0;
  std::int64_t frac = 0;
  int fracDigits = 0;
  bool seenDot = false;
  bool seenDigit = false;
  for (char c : text) {
    if (c == '.' && !seenDot) {
      seenDot = true;
    } else if (c >= '0' && c <= '9') {
      seenDigit = true;
      if (seenDot) {
        if (++fracDigits > 2)
          throw ValidationError("percentage '" + original + "' has more than two decimals");
        frac = frac * 10 + (c - '0');
      } else {
        whole = whole * 10 + (c - '0');
        if (whole > 1'000'000'000) throw ValidationError("percentage '" + original + "' too large");
      }
    } else {
      throw ValidationError("invalid percentage '" + original + "'");
    }
  }
  if (!seenDigit) throw ValidationError("invalid percentage '" + original + "'");
  if (fracDigits == 1) frac *= 10;
  const std::int64_t h = whole * 100 + frac;
  return fromHundredths(negative ? -h : h);
}

Percent Percent::ofRatio(std::uint64_t numerator, std::uint64_t denominator) {
  if (denominator == 0) throw ValidationError("percentage of an empty total");
  __extension__ using u128 = unsigned __int128;
  const u128 scaled = u128{numerator} * 20000u + denominator;
  return fromHundredths(static_cast<std::int64_t>(scaled / (u128{denominator} * 2u)));
}

Percent Percent::fromDouble(double percent) {
  // The small bias absorbs binary representation error at exact half
  // hundredths (e.g. 0.125 stored as 0.12499999...).
  return fromHundredths(static_cast<std::int64_t>(std::floor(percent * 100.0 + 0.5 + 1e-9)));
}

std::string Percent::str() const {
  const std::int64_t magnitude = std::llabs(hundredths_);
  std::string frac = std::to_string(magnitude % 100);
  if (frac.size() < 2) frac.insert(0, "0");
  return (hundredths_ < 0 ? "-" : "") + std::to_string(magnitude / 100) + "." + frac;
}

std::string formatFixed2(double value) { return Percent::fromDouble(value).str(); }

}  // namespace mapxtab
