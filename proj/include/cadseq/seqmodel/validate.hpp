#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "cadseq/seqmodel/command.hpp"

namespace cadseq::seq {

struct Violation {
  std::size_t position = 0;
  // One of: "level_range", "applicability", "padding", "unterminated", "empty",
  // "orphan_curve", "empty_loop", "extrude_without_loop", "dangling_sketch".
  std::string rule;
  std::string detail;
};

struct ValidationReport {
  bool ok = true;
  std::optional<Violation> first_violation;
};

ValidationReport validate_sequence(const CadSequence& seq);

// Checks a single command's applicability and level ranges only.
std::optional<Violation> check_command(const CadCommand& cmd, std::size_t position);

}  // namespace cadseq::seq
