#include "cadseq/seqmodel/command.hpp"

#include <algorithm>

namespace cadseq::seq {
namespace {

constexpr std::array<std::string_view, kNumCommandTypes> kTags = {"SOL", "L", "A", "R", "E", "EOS"};
constexpr std::array<std::string_view, kNumCommandTypes> kNames = {"SOL",    "Line",    "Arc",
                                                                    "Circle", "Extrude", "EOS"};
constexpr std::array<std::string_view, kNumParams> kSlotNames = {
    "x", "y", "alpha", "f", "r", "theta", "phi", "gamma", "px", "py", "pz", "s", "e1", "e2", "b", "u"};

constexpr ApplicabilityRow make_row(std::initializer_list<Slot> slots) {
  ApplicabilityRow row{};
  for (Slot s : slots) row[slot_index(s)] = true;
  return row;
}

constexpr std::array<ApplicabilityRow, kNumCommandTypes> kApplicability = {
    make_row({}),
    make_row({Slot::X, Slot::Y}),
    make_row({Slot::X, Slot::Y, Slot::Alpha, Slot::Flag}),
    make_row({Slot::X, Slot::Y, Slot::Radius}),
    make_row({Slot::Theta, Slot::Phi, Slot::Gamma, Slot::Px, Slot::Py, Slot::Pz, Slot::Scale, Slot::E1,
              Slot::E2, Slot::Boolean, Slot::Extent}),
    make_row({}),
};

std::int16_t lv(int v) { return static_cast<std::int16_t>(v); }

}  // namespace

std::string_view type_tag(CommandType t) noexcept { return kTags[type_index(t)]; }
std::string_view type_name(CommandType t) noexcept { return kNames[type_index(t)]; }
std::string_view slot_name(std::size_t slot) noexcept { return slot < kNumParams ? kSlotNames[slot] : "?"; }

std::optional<CommandType> type_from_tag(std::string_view tag) noexcept {
  const auto it = std::find(kTags.begin(), kTags.end(), tag);
  if (it == kTags.end()) return std::nullopt;
  return static_cast<CommandType>(it - kTags.begin());
}

const std::array<ApplicabilityRow, kNumCommandTypes>& applicability() noexcept { return kApplicability; }

CadCommand CadCommand::line(int x, int y) {
  CadCommand c{CommandType::Line, unused_params()};
  c.params[slot_index(Slot::X)] = lv(x);
  c.params[slot_index(Slot::Y)] = lv(y);
  return c;
}

CadCommand CadCommand::arc(int x, int y, int alpha, ArcDirection dir) {
  CadCommand c{CommandType::Arc, unused_params()};
  c.params[slot_index(Slot::X)] = lv(x);
  c.params[slot_index(Slot::Y)] = lv(y);
  c.params[slot_index(Slot::Alpha)] = lv(alpha);
  c.params[slot_index(Slot::Flag)] = lv(static_cast<int>(dir));
  return c;
}

CadCommand CadCommand::circle(int x, int y, int r) {
  CadCommand c{CommandType::Circle, unused_params()};
  c.params[slot_index(Slot::X)] = lv(x);
  c.params[slot_index(Slot::Y)] = lv(y);
  c.params[slot_index(Slot::Radius)] = lv(r);
  return c;
}

CadCommand CadCommand::extrude(int theta, int phi, int gamma, int px, int py, int pz, int scale, int e1,
                               int e2, BooleanOp op, ExtentType extent) {
  CadCommand c{CommandType::Extrude, unused_params()};
  auto& p = c.params;
  p[slot_index(Slot::Theta)] = lv(theta);
  p[slot_index(Slot::Phi)] = lv(phi);
  p[slot_index(Slot::Gamma)] = lv(gamma);
  p[slot_index(Slot::Px)] = lv(px);
  p[slot_index(Slot::Py)] = lv(py);
  p[slot_index(Slot::Pz)] = lv(pz);
  p[slot_index(Slot::Scale)] = lv(scale);
  p[slot_index(Slot::E1)] = lv(e1);
  p[slot_index(Slot::E2)] = lv(e2);
  p[slot_index(Slot::Boolean)] = lv(static_cast<int>(op));
  p[slot_index(Slot::Extent)] = lv(static_cast<int>(extent));
  return c;
}

CadSequence CadSequence::from_content(const std::vector<CadCommand>& content) {
  CadSequence seq;
  const std::size_t n = std::min(content.size(), kMaxCommands - 1);
  std::copy_n(content.begin(), n, seq.commands.begin());
  seq.true_length = n + 1;
  return seq;
}

CadSequence CadSequence::from_raw(const std::array<CadCommand, kMaxCommands>& raw) {
  CadSequence seq;
  seq.commands = raw;
  const auto it = std::find_if(raw.begin(), raw.end(),
                               [](const CadCommand& c) { return c.type == CommandType::EOS; });
  seq.true_length = it == raw.end() ? kMaxCommands : static_cast<std::size_t>(it - raw.begin()) + 1;
  return seq;
}

}  // namespace cadseq::seq
