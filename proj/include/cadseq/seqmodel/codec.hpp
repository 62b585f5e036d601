#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cadseq/seqmodel/command.hpp"

namespace cadseq::seq {

struct SequenceRecord {
  std::string id;
  CadSequence sequence;
};

enum class ParseMode {
  // Reject anything that fails validate_sequence (GrammarError).
  Strict,
  // Accept any well-typed record; used to read back decoder predictions.
  Lenient,
};

// One JSON-lines record: {"id": ..., "commands": [{"t": ..., "p": [16 ints]}]}.
// A record without a trailing EOS is terminated implicitly.
// Throws SyntaxError, GrammarError or LengthError.
SequenceRecord parse_record(std::string_view line, ParseMode mode = ParseMode::Strict);
CadSequence parse_sequence(std::string_view line, ParseMode mode = ParseMode::Strict);

// Canonical compact record holding exactly true_length commands.
std::string serialize_sequence(const CadSequence& seq, std::string_view id = {});

// Identity key used for duplicate detection: the record with an empty id.
std::string canonical_key(const CadSequence& seq);

std::vector<SequenceRecord> read_sequence_file(const std::filesystem::path& path,
                                               ParseMode mode = ParseMode::Strict);
void write_sequence_file(const std::filesystem::path& path, const std::vector<SequenceRecord>& records);

}  // namespace cadseq::seq
