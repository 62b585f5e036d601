#include "cadseq/seqmodel/codec.hpp"

#include <fstream>
#include <json.hpp>

#include "cadseq/error.hpp"
#include "cadseq/seqmodel/validate.hpp"

namespace cadseq::seq {
namespace {

using nlohmann::json;

CadCommand parse_command(const json& j, std::size_t index) {
  const auto where = " (command " + std::to_string(index) + ")";
  if (!j.is_object() || !j.contains("t") || !j.contains("p") || j.size() != 2) {
    throw Error(ErrorCode::SyntaxError, "command must be an object with keys t, p" + where);
  }
  const json& t = j["t"];
  const json& p = j["p"];
  if (!t.is_string()) throw Error(ErrorCode::SyntaxError, "t must be a string" + where);
  const auto type = type_from_tag(t.get_ref<const std::string&>());
  if (!type) throw Error(ErrorCode::SyntaxError, "unknown command tag '" + t.get<std::string>() + "'" + where);
  if (!p.is_array() || p.size() != kNumParams) {
    throw Error(ErrorCode::SyntaxError, "p must be an array of 16 integers" + where);
  }
  CadCommand cmd{*type, unused_params()};
  for (std::size_t s = 0; s < kNumParams; ++s) {
    if (!p[s].is_number_integer()) throw Error(ErrorCode::SyntaxError, "non-integer parameter" + where);
    const auto v = p[s].get<std::int64_t>();
    if (v < kUnused || v >= kNumLevels) {
      throw Error(ErrorCode::SyntaxError, "parameter " + std::to_string(v) + " outside -1..255" + where);
    }
    cmd.params[s] = static_cast<std::int16_t>(v);
  }
  return cmd;
}

void append_json_string(std::string& out, std::string_view s) {
  out += json(std::string(s)).dump();
}

}  // namespace

SequenceRecord parse_record(std::string_view line, ParseMode mode) {
  json j;
  try {
    j = json::parse(line.begin(), line.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SyntaxError, e.what());
  }
  if (!j.is_object() || !j.contains("id") || !j.contains("commands") || j.size() != 2) {
    throw Error(ErrorCode::SyntaxError, "record must be an object with keys id, commands");
  }
  if (!j["id"].is_string()) throw Error(ErrorCode::SyntaxError, "id must be a string");
  const json& cmds = j["commands"];
  if (!cmds.is_array()) throw Error(ErrorCode::SyntaxError, "commands must be an array");

  SequenceRecord rec;
  rec.id = j["id"].get<std::string>();
  if (cmds.empty()) throw Error(ErrorCode::GrammarError, "empty command list");
  if (cmds.size() > kMaxCommands) {
    throw Error(ErrorCode::LengthError, std::to_string(cmds.size()) + " commands exceed 256");
  }

  std::array<CadCommand, kMaxCommands> raw{};
  for (std::size_t i = 0; i < cmds.size(); ++i) raw[i] = parse_command(cmds[i], i);
  CadSequence seq = CadSequence::from_raw(raw);

  // A trailing EOS may be left implicit, but nothing may follow the first one.
  for (std::size_t i = seq.true_length; i < cmds.size(); ++i) {
    if (!(raw[i] == CadCommand::eos())) {
      throw Error(ErrorCode::GrammarError, "command " + std::to_string(i) + " follows EOS");
    }
  }
  if (mode == ParseMode::Strict) {
    const auto report = validate_sequence(seq);
    if (!report.ok) {
      const auto& v = *report.first_violation;
      throw Error(ErrorCode::GrammarError,
                  v.rule + " at position " + std::to_string(v.position) + ": " + v.detail);
    }
  }
  rec.sequence = seq;
  return rec;
}

CadSequence parse_sequence(std::string_view line, ParseMode mode) { return parse_record(line, mode).sequence; }

std::string serialize_sequence(const CadSequence& seq, std::string_view id) {
  std::string out;
  out.reserve(64 + seq.true_length * 72);
  out += "{\"id\":";
  append_json_string(out, id);
  out += ",\"commands\":[";
  for (std::size_t i = 0; i < seq.true_length; ++i) {
    const CadCommand& c = seq.commands[i];
    if (i) out += ',';
    out += "{\"t\":\"";
    out += type_tag(c.type);
    out += "\",\"p\":[";
    for (std::size_t s = 0; s < kNumParams; ++s) {
      if (s) out += ',';
      out += std::to_string(c.params[s]);
    }
    out += "]}";
  }
  out += "]}";
  return out;
}

std::string canonical_key(const CadSequence& seq) { return serialize_sequence(seq, ""); }

std::vector<SequenceRecord> read_sequence_file(const std::filesystem::path& path, ParseMode mode) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<SequenceRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      records.push_back(parse_record(line, mode));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return records;
}

void write_sequence_file(const std::filesystem::path& path, const std::vector<SequenceRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& r : records) out << serialize_sequence(r.sequence, r.id) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace cadseq::seq
