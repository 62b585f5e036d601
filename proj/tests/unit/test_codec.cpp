#include <doctest.h>

#include <set>
#include <string>

#include "cadseq/error.hpp"
#include "cadseq/seqmodel/codec.hpp"
#include "cadseq/seqmodel/quantize.hpp"
#include "cadseq/seqmodel/sketch.hpp"
#include "cadseq/seqmodel/synth.hpp"
#include "cadseq/seqmodel/validate.hpp"

using namespace cadseq;
using namespace cadseq::seq;

namespace {

CadCommand box_extrude() {
  return CadCommand::extrude(128, 128, 128, 128, 128, 128, 128, 160, 128, BooleanOp::NewBody,
                             ExtentType::Symmetric);
}

std::string record(const std::string& commands) { return "{\"id\":\"m\",\"commands\":[" + commands + "]}"; }

std::string cmd(const CadCommand& c) {
  std::string s = "{\"t\":\"" + std::string(type_tag(c.type)) + "\",\"p\":[";
  for (std::size_t i = 0; i < kNumParams; ++i) s += (i ? "," : "") + std::to_string(c.params[i]);
  return s + "]}";
}

ErrorCode code_of(const std::string& line) {
  try {
    parse_sequence(line);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("parse counts the implicit terminating EOS") {
  const std::string line =
      record(cmd(CadCommand::sol()) + "," + cmd(CadCommand::circle(128, 128, 64)) + "," + cmd(box_extrude()));
  const CadSequence seq = parse_sequence(line);
  CHECK(seq.true_length == 4);
  CHECK(seq.commands[3] == CadCommand::eos());
  CHECK(seq.commands[255] == CadCommand::eos());
}

TEST_CASE("parse rejects malformed and ungrammatical records") {
  CHECK(code_of(record("")) == ErrorCode::GrammarError);
  CHECK(code_of(record(cmd(box_extrude()))) == ErrorCode::GrammarError);
  CHECK(code_of("{\"id\":\"m\",\"commands\":[") == ErrorCode::SyntaxError);
  CHECK(code_of("{\"id\":3,\"commands\":[]}") == ErrorCode::SyntaxError);
  CHECK(code_of(record("{\"t\":\"Q\",\"p\":[-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1]}")) ==
        ErrorCode::SyntaxError);
  CHECK(code_of(record("{\"t\":\"SOL\",\"p\":[-1]}")) == ErrorCode::SyntaxError);
  CHECK(code_of(record("{\"t\":\"L\",\"p\":[300,1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1]}")) ==
        ErrorCode::SyntaxError);

  std::string many;
  for (int i = 0; i < 257; ++i) many += (i ? "," : "") + cmd(CadCommand::eos());
  CHECK(code_of(record(many)) == ErrorCode::LengthError);

  const std::string after_eos = record(cmd(CadCommand::sol()) + "," + cmd(CadCommand::circle(128, 128, 64)) +
                                       "," + cmd(box_extrude()) + "," + cmd(CadCommand::eos()) + "," +
                                       cmd(CadCommand::sol()));
  CHECK(code_of(after_eos) == ErrorCode::GrammarError);
}

TEST_CASE("lenient parse keeps ungrammatical predictions") {
  const std::string line = record(cmd(box_extrude()));
  const CadSequence seq = parse_sequence(line, ParseMode::Lenient);
  CHECK(seq.true_length == 2);
  CHECK_FALSE(validate_sequence(seq).ok);
  CHECK(parse_sequence(serialize_sequence(seq, "m"), ParseMode::Lenient) == seq);
}

TEST_CASE("validate reports the first violated rule") {
  CadSequence good = CadSequence::from_content({CadCommand::sol(), CadCommand::line(200, 128),
                                                CadCommand::line(200, 200), CadCommand::line(128, 128),
                                                box_extrude()});
  CHECK(validate_sequence(good).ok);

  CadSequence bad_param = good;
  bad_param.commands[1].params[slot_index(Slot::Radius)] = 10;
  auto report = validate_sequence(bad_param);
  REQUIRE_FALSE(report.ok);
  CHECK(report.first_violation->rule == "applicability");
  CHECK(report.first_violation->position == 1);

  CadSequence unterminated;
  for (std::size_t i = 0; i < kMaxCommands; ++i) unterminated.commands[i] = i % 2 ? CadCommand::line(3, 4) : CadCommand::sol();
  unterminated.true_length = kMaxCommands;
  report = validate_sequence(unterminated);
  REQUIRE_FALSE(report.ok);
  CHECK(report.first_violation->rule == "unterminated");

  CadSequence orphan = CadSequence::from_content({CadCommand::line(1, 2)});
  CHECK(validate_sequence(orphan).first_violation->rule == "orphan_curve");

  CadSequence empty_loop = CadSequence::from_content({CadCommand::sol(), box_extrude()});
  CHECK(validate_sequence(empty_loop).first_violation->rule == "empty_loop");

  CadSequence dangling = CadSequence::from_content({CadCommand::sol(), CadCommand::circle(128, 128, 40)});
  CHECK(validate_sequence(dangling).first_violation->rule == "dangling_sketch");

  CadSequence empty = CadSequence::from_content({});
  CHECK(validate_sequence(empty).first_violation->rule == "empty");

  CadSequence bad_bool = good;
  bad_bool.commands[4].params[slot_index(Slot::Boolean)] = 9;
  CHECK(validate_sequence(bad_bool).first_violation->rule == "level_range");

  CadSequence dirty_pad = good;
  dirty_pad.commands[100] = CadCommand::sol();
  CHECK(validate_sequence(dirty_pad).first_violation->rule == "padding");
}

TEST_CASE("serialization round-trips and separates a synthetic corpus") {
  std::set<std::string> texts;
  std::set<std::string> canon;
  Rng rng(11);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const CadSequence s = synthesize_sequence(seed, sample_length_target(rng));
    const std::string text = serialize_sequence(s, "x");
    CHECK(parse_sequence(text) == s);
    // Exactly true_length commands on disk.
    std::size_t tags = 0;
    for (std::size_t pos = text.find("\"t\":"); pos != std::string::npos; pos = text.find("\"t\":", pos + 1)) ++tags;
    CHECK(tags == s.true_length);
    texts.insert(text);
    canon.insert(canonical_key(s));
  }
  CHECK(texts.size() == 200);
  CHECK(canon.size() == 200);
}

TEST_CASE("loop tracing closes squares and rejects open chains") {
  const std::vector<CadCommand> square = {CadCommand::line(200, 128), CadCommand::line(200, 200),
                                          CadCommand::line(128, 200), CadCommand::line(128, 128)};
  const auto poly = trace_loop(square);
  CHECK(poly.size() == 5);
  CHECK(poly.front().x == poly.back().x);
  CHECK(poly.front().y == poly.back().y);
  CHECK(is_simple(poly));
  CHECK(signed_area(poly) > 0);

  const std::vector<CadCommand> open = {CadCommand::line(200, 128), CadCommand::line(200, 200),
                                        CadCommand::line(128, 200)};
  try {
    trace_loop(open);
    FAIL("open chain accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OpenLoop);
  }

  const std::vector<CadCommand> bowtie = {CadCommand::line(200, 200), CadCommand::line(200, 128),
                                          CadCommand::line(128, 200), CadCommand::line(128, 128)};
  CHECK_FALSE(is_simple(trace_loop(bowtie)));
}
