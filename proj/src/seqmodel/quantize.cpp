#include "cadseq/seqmodel/quantize.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "cadseq/error.hpp"
#include "cadseq/seqmodel/command.hpp"

namespace cadseq::seq {
namespace {

constexpr double kPi = std::numbers::pi;

const std::array<ParamRange, kNumParams> kRanges = {
    ParamRange::continuous(0.0, 1.0),        // x
    ParamRange::continuous(0.0, 1.0),        // y
    ParamRange::continuous(0.0, 2.0 * kPi),  // alpha
    ParamRange::enumeration(2),              // f
    ParamRange::continuous(0.0, 1.0),        // r
    ParamRange::continuous(-kPi, kPi),       // theta
    ParamRange::continuous(-kPi, kPi),       // phi
    ParamRange::continuous(-kPi, kPi),       // gamma
    ParamRange::continuous(-1.0, 1.0),       // px
    ParamRange::continuous(-1.0, 1.0),       // py
    ParamRange::continuous(-1.0, 1.0),       // pz
    ParamRange::continuous(0.0, 2.0),        // s
    ParamRange::continuous(-1.0, 1.0),       // e1
    ParamRange::continuous(-1.0, 1.0),       // e2
    ParamRange::enumeration(4),              // b
    ParamRange::enumeration(3),              // u
};

}  // namespace

const ParamRange& param_range(std::size_t slot) { return kRanges.at(slot); }

int quantize_param(double value, const ParamRange& range) {
  if (!std::isfinite(value) || value < range.lo - kRangeTolerance || value > range.hi + kRangeTolerance) {
    throw Error(ErrorCode::OutOfRange, "value " + std::to_string(value) + " outside [" +
                                           std::to_string(range.lo) + ", " + std::to_string(range.hi) + "]");
  }
  if (range.discrete) {
    const double level = std::round(value);
    if (std::abs(level - value) > kRangeTolerance) {
      throw Error(ErrorCode::OutOfRange, "discrete parameter must be an integer, got " + std::to_string(value));
    }
    return static_cast<int>(level);
  }
  const double t = (value - range.lo) / (range.hi - range.lo) * (kNumLevels - 1);
  const double level = std::round(t);  // std::round rounds halfway cases away from zero
  return static_cast<int>(std::clamp(level, 0.0, static_cast<double>(kNumLevels - 1)));
}

std::optional<double> dequantize_param(int level, const ParamRange& range) {
  if (level == kUnused) return std::nullopt;
  return level_value(level, range);
}

double level_value(int level, const ParamRange& range) {
  if (level < 0 || level >= kNumLevels) {
    throw Error(ErrorCode::BadLevel, "level " + std::to_string(level) + " outside 0..255");
  }
  if (range.discrete) return static_cast<double>(level);
  return range.lo + static_cast<double>(level) / (kNumLevels - 1) * (range.hi - range.lo);
}

}  // namespace cadseq::seq
