#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace mapxtab {

/// Exact percentage in hundredths of a percent (96.88% is 9688). Printed
/// percentages round half-up to two decimals.
class Percent {
 public:
  constexpr Percent() = default;

  static constexpr Percent fromHundredths(std::int64_t hundredths) {
    Percent p;
    p.hundredths_ = hundredths;
    return p;
  }
  static constexpr Percent whole(std::int64_t percent) { return fromHundredths(percent * 100); }

  /// Accepts an optional sign, digits, and at most two decimals ("96.88",
  /// "78", "0.5"). Throws ValidationError otherwise.
  static Percent parse(std::string_view text);

  /// 100 * numerator / denominator, half-up to hundredths. Denominator > 0.
  static Percent ofRatio(std::uint64_t numerator, std::uint64_t denominator);

  /// Half-up rounding of a floating percentage.
  static Percent fromDouble(double percent);

  constexpr std::int64_t hundredths() const noexcept { return hundredths_; }
  constexpr double value() const noexcept { return static_cast<double>(hundredths_) / 100.0; }

  /// Two decimals, e.g. "74.88", "-12.00".
  std::string str() const;

  constexpr Percent operator+(Percent o) const { return fromHundredths(hundredths_ + o.hundredths_); }
  constexpr Percent operator-(Percent o) const { return fromHundredths(hundredths_ - o.hundredths_); }
  constexpr auto operator<=>(const Percent&) const = default;

 private:
  std::int64_t hundredths_ = 0;
};

/// Two-decimal half-up rendering of an arbitrary double, for report tables.
std::string formatFixed2(double value);

}  // namespace mapxtab
