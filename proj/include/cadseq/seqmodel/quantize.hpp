#pragma once

#include <cstddef>
#include <optional>

namespace cadseq::seq {

// Continuous interval for a quantized parameter, or a small discrete set whose
// members are stored directly as levels 0..count-1.
struct ParamRange {
  double lo = 0.0;
  double hi = 1.0;
  bool discrete = false;
  int count = 0;

  static constexpr ParamRange continuous(double lo, double hi) { return {lo, hi, false, 0}; }
  static constexpr ParamRange enumeration(int n) { return {0.0, static_cast<double>(n - 1), true, n}; }
};

inline constexpr double kRangeTolerance = 1e-9;

// Range of each of the 16 slots, in slot order.
const ParamRange& param_range(std::size_t slot);

// level = round((value - lo) / (hi - lo) * 255), ties away from zero.
// Throws OutOfRange when value lies outside [lo, hi] by more than kRangeTolerance.
int quantize_param(double value, const ParamRange& range);

// lo + level / 255 * (hi - lo). Returns nullopt for the unused marker -1.
// Throws BadLevel for anything else outside 0..255.
std::optional<double> dequantize_param(int level, const ParamRange& range);

// Dequantize a level known to be used; throws BadLevel on -1 as well.
double level_value(int level, const ParamRange& range);

}  // namespace cadseq::seq
