#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace cadseq::seq {

inline constexpr std::size_t kMaxCommands = 256;
inline constexpr std::size_t kNumParams = 16;
inline constexpr std::size_t kNumCommandTypes = 6;
inline constexpr int kNumLevels = 256;
inline constexpr int kUnused = -1;

enum class CommandType : std::uint8_t { SOL = 0, Line = 1, Arc = 2, Circle = 3, Extrude = 4, EOS = 5 };

// Slot order of the 16-entry parameter vector.
enum class Slot : std::uint8_t {
  X = 0, Y, Alpha, Flag, Radius, Theta, Phi, Gamma, Px, Py, Pz, Scale, E1, E2, Boolean, Extent
};

inline constexpr std::size_t slot_index(Slot s) { return static_cast<std::size_t>(s); }
inline constexpr std::size_t type_index(CommandType t) { return static_cast<std::size_t>(t); }

enum class BooleanOp : std::uint8_t { NewBody = 0, Union = 1, Cut = 2, Intersect = 3 };
enum class ExtentType : std::uint8_t { OneSided = 0, Symmetric = 1, TwoSided = 2 };
enum class ArcDirection : std::uint8_t { CounterClockwise = 0, Clockwise = 1 };

// Short tag used in the sequence file format ("SOL", "L", "A", "R", "E", "EOS").
std::string_view type_tag(CommandType t) noexcept;
std::optional<CommandType> type_from_tag(std::string_view tag) noexcept;
std::string_view type_name(CommandType t) noexcept;
std::string_view slot_name(std::size_t slot) noexcept;

using ApplicabilityRow = std::array<bool, kNumParams>;

// applicability()[type][slot] is true iff commands of that type carry the slot.
const std::array<ApplicabilityRow, kNumCommandTypes>& applicability() noexcept;

inline bool uses_slot(CommandType t, std::size_t slot) { return applicability()[type_index(t)][slot]; }

using ParamVector = std::array<std::int16_t, kNumParams>;

inline constexpr ParamVector unused_params() {
  ParamVector p{};
  p.fill(static_cast<std::int16_t>(kUnused));
  return p;
}

struct CadCommand {
  CommandType type = CommandType::EOS;
  ParamVector params = unused_params();

  bool operator==(const CadCommand&) const = default;

  static CadCommand eos() { return {}; }
  static CadCommand sol() { return {CommandType::SOL, unused_params()}; }
  static CadCommand line(int x, int y);
  static CadCommand arc(int x, int y, int alpha, ArcDirection dir);
  static CadCommand circle(int x, int y, int r);
  static CadCommand extrude(int theta, int phi, int gamma, int px, int py, int pz, int scale,
                            int e1, int e2, BooleanOp op, ExtentType extent);

  int param(Slot s) const { return params[slot_index(s)]; }
};

// A model padded to exactly 256 commands. true_length counts through the first
// EOS, so positions [true_length, 256) are padding.
struct CadSequence {
  std::array<CadCommand, kMaxCommands> commands{};
  std::size_t true_length = 1;

  bool operator==(const CadSequence&) const = default;

  // Content commands followed by one EOS; the tail is padded. Does not validate.
  static CadSequence from_content(const std::vector<CadCommand>& content);
  // Every slot as stored, without truncation (used for decoded predictions).
  static CadSequence from_raw(const std::array<CadCommand, kMaxCommands>& raw);

  std::size_t content_length() const { return true_length - 1; }
};

}  // namespace cadseq::seq
