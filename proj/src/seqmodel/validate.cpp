#include "cadseq/seqmodel/validate.hpp"

#include <string>

#include "cadseq/seqmodel/quantize.hpp"

namespace cadseq::seq {
namespace {

Violation make(std::size_t pos, std::string rule, std::string detail) {
  return Violation{pos, std::move(rule), std::move(detail)};
}

bool is_curve(CommandType t) {
  return t == CommandType::Line || t == CommandType::Arc || t == CommandType::Circle;
}

}  // namespace

std::optional<Violation> check_command(const CadCommand& cmd, std::size_t position) {
  for (std::size_t s = 0; s < kNumParams; ++s) {
    const int level = cmd.params[s];
    const bool used = uses_slot(cmd.type, s);
    if (level != kUnused && (level < 0 || level >= kNumLevels)) {
      return make(position, "level_range", "slot " + std::string(slot_name(s)) + " = " + std::to_string(level));
    }
    if (used != (level != kUnused)) {
      return make(position, "applicability",
                  std::string(type_name(cmd.type)) + (used ? " requires " : " must not set ") + "slot " +
                      std::string(slot_name(s)));
    }
    if (used) {
      const ParamRange& range = param_range(s);
      if (range.discrete && level >= range.count) {
        return make(position, "level_range",
                    "slot " + std::string(slot_name(s)) + " = " + std::to_string(level) + " exceeds " +
                        std::to_string(range.count - 1));
      }
    }
  }
  return std::nullopt;
}

ValidationReport validate_sequence(const CadSequence& seq) {
  auto fail = [](Violation v) { return ValidationReport{false, std::move(v)}; };

  bool in_loop = false;
  std::size_t curves_in_loop = 0;
  std::size_t loops_since_extrude = 0;
  std::size_t sol_position = 0;

  for (std::size_t i = 0; i < kMaxCommands; ++i) {
    const CadCommand& cmd = seq.commands[i];
    if (auto v = check_command(cmd, i)) return fail(std::move(*v));

    if (in_loop && curves_in_loop == 0 && !is_curve(cmd.type)) {
      return fail(make(sol_position, "empty_loop", "SOL without curves"));
    }

    switch (cmd.type) {
      case CommandType::SOL:
        in_loop = true;
        curves_in_loop = 0;
        sol_position = i;
        break;
      case CommandType::Line:
      case CommandType::Arc:
      case CommandType::Circle:
        if (!in_loop) return fail(make(i, "orphan_curve", "curve outside a loop"));
        if (++curves_in_loop == 1) ++loops_since_extrude;
        break;
      case CommandType::Extrude:
        if (loops_since_extrude == 0) return fail(make(i, "extrude_without_loop", "no loop since last extrude"));
        loops_since_extrude = 0;
        in_loop = false;
        break;
      case CommandType::EOS: {
        if (i == 0) return fail(make(0, "empty", "sequence has no content"));
        if (loops_since_extrude > 0) return fail(make(i, "dangling_sketch", "loops after the last extrude"));
        for (std::size_t j = i + 1; j < kMaxCommands; ++j) {
          if (!(seq.commands[j] == CadCommand::eos())) {
            return fail(make(j, "padding", "non-EOS or non-empty command after the first EOS"));
          }
        }
        if (seq.true_length != i + 1) {
          return fail(make(i, "padding", "true_length " + std::to_string(seq.true_length) +
                                             " does not match first EOS at " + std::to_string(i)));
        }
        return ValidationReport{};
      }
    }
  }
  return fail(make(kMaxCommands - 1, "unterminated", "no EOS within 256 commands"));
}

}  // namespace cadseq::seq
