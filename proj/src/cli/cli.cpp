#include "cadseq/cli/cli.hpp"

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "cadseq/diffusion/sampler.hpp"
#include "cadseq/error.hpp"
#include "cadseq/metrics/metrics.hpp"
#include "cadseq/numcore/batch.hpp"
#include "cadseq/pipeline/config.hpp"
#include "cadseq/seqmodel/codec.hpp"
#include "cadseq/seqmodel/synth.hpp"
#include "cadseq/seqmodel/validate.hpp"

namespace cadseq::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void setup_logging() {
  static auto logger = [] {
    auto l = spdlog::stderr_logger_st("cadseq");
    l->set_pattern("[%l] %v");
    return l;
  }();
  spdlog::set_default_logger(logger);
  const char* env = std::getenv("CADSEQ_LOG");
  const std::string level = env && *env ? env : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "info") {
    spdlog::set_level(spdlog::level::info);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
    throw Error(ErrorCode::ConfigError, "CADSEQ_LOG must be error, info or debug, got '" + level + "'");
  }
}

struct Globals {
  std::string config;
  std::string profile;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool deterministic = false;
  std::vector<std::string> sets;
};

// "a.b.c=value" where value is JSON, or a bare string.
json parse_set(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::ConfigError, "--set expects key=value, got '" + s + "'");
  json value;
  try {
    value = json::parse(s.substr(eq + 1));
  } catch (const json::parse_error&) {
    value = s.substr(eq + 1);
  }
  json root = json::object();
  json* cur = &root;
  std::string key = s.substr(0, eq);
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw Error(ErrorCode::ConfigError, "--set has an empty key segment in '" + key + "'");
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      break;
    }
    cur = &(*cur)[part];
    start = dot + 1;
  }
  return root;
}

pipeline::RunConfig resolve_config(const Globals& g) {
  json file = json::object();
  if (!g.config.empty()) file = pipeline::read_config_json(g.config);
  std::string base = "paper";
  if (file.contains("profile")) {
    if (!file["profile"].is_string()) throw Error(ErrorCode::ConfigError, "key 'profile' expects string");
    base = file["profile"].get<std::string>();
  }
  if (!g.profile.empty()) base = g.profile;
  file.erase("profile");
  pipeline::RunConfig c = pipeline::profile_config(base);
  pipeline::apply_overlay(c, file);
  for (const auto& s : g.sets) pipeline::apply_overlay(c, parse_set(s));
  if (g.seed) c.seed = *g.seed;
  if (g.threads) c.threads = *g.threads;
  if (g.deterministic) c.deterministic = true;
  pipeline::check_config(c);
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit_report(const json& report, const std::string& path) {
  const std::string text = report.dump(2) + "\n";
  if (!path.empty()) write_text(path, text);
  std::cout << text;
}

std::vector<seq::CadSequence> sequences_of(const std::vector<seq::SequenceRecord>& recs) {
  std::vector<seq::CadSequence> out;
  out.reserve(recs.size());
  for (const auto& r : recs) out.push_back(r.sequence);
  return out;
}

std::string format_step(const pipeline::StepRecord& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%llu\t%.9g\t%.9g", static_cast<unsigned long long>(r.step), r.loss, r.lr);
  return buf;
}

// Append-only step log. On resume, rows past the checkpoint step (written after
// the last save of an interrupted run) are dropped before appending.
class StepLog {
 public:
  StepLog(const fs::path& path, bool resume, std::uint64_t resume_step) : path_(path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::string kept = "step\tloss\tlr\n";
    if (resume && fs::exists(path)) {
      std::istringstream in(read_text(path));
      std::string line;
      kept.clear();
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("step", 0) == 0) {
          kept += line + "\n";
          continue;
        }
        if (std::stoull(line.substr(0, line.find('\t'))) <= resume_step) kept += line + "\n";
      }
      if (kept.empty()) kept = "step\tloss\tlr\n";
    }
    write_text(path, kept);
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) throw Error(ErrorCode::IoError, "cannot append to '" + path.string() + "'");
  }

  void add(const pipeline::StepRecord& r) {
    const std::string line = format_step(r);
    out_ << line << '\n';
    out_.flush();
    std::cout << line << '\n';
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

bool is_checkpoint(const fs::path& dir) { return fs::exists(dir / "manifest.json"); }

int cmd_synth(const pipeline::RunConfig& c, std::size_t count, const std::string& out) {
  const auto recs = seq::synthesize_records(count, c.seed);
  seq::write_sequence_file(out, recs);
  spdlog::info("wrote {} sequences to {}", recs.size(), out);
  return kExitOk;
}

int cmd_validate(const std::string& in, const std::string& report_path) {
  const auto recs = seq::read_sequence_file(in, seq::ParseMode::Lenient);
  std::size_t valid = 0;
  json bad = json::array();
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto rep = seq::validate_sequence(recs[i].sequence);
    if (rep.ok) {
      ++valid;
      continue;
    }
    const auto& v = *rep.first_violation;
    bad.push_back({{"record", i}, {"id", recs[i].id}, {"rule", v.rule}, {"position", v.position}, {"detail", v.detail}});
    spdlog::info("record {} ({}): {} at position {}: {}", i, recs[i].id, v.rule, v.position, v.detail);
  }
  emit_report({{"records", recs.size()}, {"valid", valid}, {"invalid", recs.size() - valid}, {"violations", bad}},
              report_path);
  return valid == recs.size() ? kExitOk : kExitInvalid;
}

struct TrainFlags {
  std::string log;
  bool resume = false;
  std::uint64_t until = 0;
  std::uint64_t every = 0;
};

int cmd_train_ae(const pipeline::RunConfig& c, const std::string& data_path, const std::string& out,
                 const TrainFlags& f) {
  auto data = sequences_of(seq::read_sequence_file(data_path));
  const unsigned threads = c.effective_threads();
  std::optional<pipeline::AeTrainer> tr;
  if (f.resume && is_checkpoint(out)) {
    tr.emplace(pipeline::AeTrainer::load(out, std::move(data), threads));
    spdlog::info("resuming from {} at step {}", out, tr->steps_done());
  } else {
    tr.emplace(c.ae, c.ae_train, std::move(data), c.seed, threads);
  }
  StepLog log(f.log.empty() ? fs::path(out) / "loss.tsv" : fs::path(f.log), f.resume, tr->steps_done());
  const json snapshot = to_json(c);
  const std::uint64_t stop = f.until ? std::min(f.until, tr->total_steps()) : tr->total_steps();
  while (!tr->targets_met() && tr->steps_done() < stop) {
    const std::uint64_t next = f.every ? std::min(stop, (tr->steps_done() / f.every + 1) * f.every) : stop;
    tr->run([&](const pipeline::StepRecord& r) { log.add(r); },
            [](const pipeline::AccuracyRecord& a) {
              spdlog::info("step {} training acc_c {:.4f} acc_p {:.4f}", a.step, a.acc_c, a.acc_p);
            },
            next);
    tr->save(out, snapshot);
  }
  if (!is_checkpoint(out)) tr->save(out, snapshot);
  spdlog::info("autoencoder checkpoint at step {} written to {}", tr->steps_done(), out);
  return kExitOk;
}

ae::AutoEncoder<float> load_autoencoder(const std::string& dir) {
  const auto b = nc::load_bundle(dir);
  if (!b.meta.contains("ae_config")) throw Error(ErrorCode::CorruptCheckpoint, "'" + dir + "' is not an autoencoder checkpoint");
  ae::AutoEncoder<float> m(b.meta.at("ae_config").get<ae::AeConfig>(), 0);
  m.load_bundle(b);
  return m;
}

int cmd_eval_ae(const pipeline::RunConfig& c, const std::string& data_path, const std::string& ckpt,
                const std::string& report, const std::string& pred_path, bool geometry) {
  const auto recs = seq::read_sequence_file(data_path);
  const auto gt = sequences_of(recs);
  const auto model = load_autoencoder(ckpt);
  std::vector<seq::CadSequence> pred(gt.size());
  nc::parallel_for(gt.size(), c.effective_threads(), [&](std::size_t i) { pred[i] = model.predict(model.encode_array(gt[i])); });
  metrics::ReconOptions opt;
  opt.cloud_points = c.eval.cloud_points;
  opt.resolution = c.eval.resolution;
  opt.seed = c.seed;
  opt.geometry = geometry;
  opt.threads = c.effective_threads();
  opt.variant = c.eval.chamfer;
  const auto r = metrics::reconstruction_metrics(pred, gt, opt);
  if (!pred_path.empty()) {
    std::vector<seq::SequenceRecord> out;
    for (std::size_t i = 0; i < pred.size(); ++i) out.push_back({recs[i].id, pred[i]});
    seq::write_sequence_file(pred_path, out);
  }
  spdlog::info("\n{}", metrics::table(r));
  emit_report(metrics::to_json(r), report);
  return kExitOk;
}

int cmd_encode(const pipeline::RunConfig& c, const std::string& data_path, const std::string& ckpt,
               const std::string& out) {
  const auto data = sequences_of(seq::read_sequence_file(data_path));
  if (data.empty()) throw Error(ErrorCode::EmptySet, "'" + data_path + "' holds no sequences");
  const auto model = load_autoencoder(ckpt);
  std::vector<nc::Array<float>> z(data.size());
  nc::parallel_for(data.size(), c.effective_threads(), [&](std::size_t i) { z[i] = model.encode_array(data[i]); });
  pipeline::save_latents(out, z, {{"source", "encode"}, {"count", z.size()}});
  spdlog::info("wrote {} latents to {}", z.size(), out);
  return kExitOk;
}

int cmd_train_diff(const pipeline::RunConfig& c, const std::string& latents, const std::string& out,
                   const TrainFlags& f) {
  auto z = pipeline::load_latents(latents);
  const unsigned threads = c.effective_threads();
  std::optional<pipeline::DiffTrainer> tr;
  if (f.resume && is_checkpoint(out)) {
    tr.emplace(pipeline::DiffTrainer::load(out, std::move(z), threads));
    spdlog::info("resuming from {} at step {}", out, tr->steps_done());
  } else {
    tr.emplace(c.diff, c.diff_train, std::move(z), c.seed, threads);
  }
  StepLog log(f.log.empty() ? fs::path(out) / "loss.tsv" : fs::path(f.log), f.resume, tr->steps_done());
  const json snapshot = to_json(c);
  const std::uint64_t stop = f.until ? std::min(f.until, tr->total_steps()) : tr->total_steps();
  while (tr->steps_done() < stop) {
    const std::uint64_t next = f.every ? std::min(stop, (tr->steps_done() / f.every + 1) * f.every) : stop;
    tr->run([&](const pipeline::StepRecord& r) { log.add(r); }, next);
    tr->save(out, snapshot);
  }
  if (!is_checkpoint(out)) tr->save(out, snapshot);
  spdlog::info("diffusion checkpoint at step {} written to {}", tr->steps_done(), out);
  return kExitOk;
}

int cmd_sample(const pipeline::RunConfig& c, const std::string& ckpt, const std::string& out) {
  const auto b = nc::load_bundle(ckpt);
  if (!b.meta.contains("diff_config")) throw Error(ErrorCode::CorruptCheckpoint, "'" + ckpt + "' is not a diffusion checkpoint");
  const auto dc = b.meta.at("diff_config").get<diff::DiffConfig>();
  diff::Denoiser<float> den(dc, 0);
  den.load_bundle(b);
  const double scale = pipeline::latent_scale_of(b);
  const std::size_t steps = c.sample.steps ? c.sample.steps : dc.steps;
  const auto sched = diff::build_schedule(steps, c.sample.mode);
  spdlog::info("sampling {} latents, {} steps, {} mode", c.sample.count, steps, diff::mode_name(c.sample.mode));
  auto z = diff::sample_latents<float>(
      c.sample.count, {dc.positions, dc.latent_dim}, sched,
      [&](const nc::Array<float>& x, std::size_t t) { return den.predict_array(x, t); }, c.sample.mode, c.seed,
      c.effective_threads());
  const float s = static_cast<float>(scale);
  for (auto& x : z) {
    for (auto& v : x.values()) v *= s;
  }
  pipeline::save_latents(out, z,
                         {{"source", "sample"},
                          {"count", z.size()},
                          {"mode", std::string(diff::mode_name(c.sample.mode))},
                          {"steps", steps},
                          {"seed", c.seed}});
  spdlog::info("wrote {} latents to {}", z.size(), out);
  return kExitOk;
}

int cmd_decode(const pipeline::RunConfig& c, const std::string& ckpt, const std::string& latents,
               const std::string& out, const std::string& report) {
  const auto model = load_autoencoder(ckpt);
  const auto z = pipeline::load_latents(latents);
  std::vector<seq::CadSequence> pred(z.size());
  nc::parallel_for(z.size(), c.effective_threads(), [&](std::size_t i) { pred[i] = model.predict(z[i]); });
  std::vector<seq::SequenceRecord> recs;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "gen-%06zu", i);
    const auto rep = seq::validate_sequence(pred[i]);
    if (rep.ok) {
      ++valid;
    } else {
      spdlog::debug("{} is invalid: {} at position {}", id, rep.first_violation->rule, rep.first_violation->position);
    }
    recs.push_back({id, pred[i]});
  }
  seq::write_sequence_file(out, recs);
  spdlog::info("decoded {} sequences, {} valid, {} invalid", pred.size(), valid, pred.size() - valid);
  emit_report({{"decoded", pred.size()}, {"valid", valid}, {"invalid", pred.size() - valid}}, report);
  return kExitOk;
}

int cmd_eval_gen(const pipeline::RunConfig& c, const std::string& gen_path, const std::string& ref_path,
                 const std::string& train_path, const std::string& report) {
  const auto gen = sequences_of(seq::read_sequence_file(gen_path, seq::ParseMode::Lenient));
  const auto ref = sequences_of(seq::read_sequence_file(ref_path));
  const auto train = train_path.empty() ? ref : sequences_of(seq::read_sequence_file(train_path));
  metrics::GenOptions opt;
  opt.cloud_points = c.eval.cloud_points;
  opt.resolution = c.eval.resolution;
  opt.seed = c.seed;
  opt.threads = c.effective_threads();
  opt.variant = c.eval.chamfer;
  const auto r = metrics::generation_report(gen, ref, train, opt);
  spdlog::info("\n{}", metrics::table(r));
  emit_report(metrics::to_json(r), report);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  try {
    setup_logging();
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kExitError;
  }

  CLI::App app{"Command-sequence CAD generation pipeline", "cadseq"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON run configuration");
  app.add_option("--profile", g.profile, "Base profile: paper, desk or tiny");
  app.add_option("--seed", g.seed, "Seed for this subcommand");
  app.add_option("--threads", g.threads, "Worker threads");
  app.add_flag("--deterministic", g.deterministic, "Force serial execution");
  app.add_option("--set", g.sets, "Override a config key, e.g. ae_train.max_steps=100");

  std::optional<std::size_t> count, steps;
  std::string in, out, data, ckpt, latents, report, preds, gen, ref, train, mode, chamfer;
  bool no_geometry = false;
  TrainFlags tf;

  auto* synth = app.add_subcommand("synth", "Write synthetic valid sequences");
  synth->add_option("--count", count, "Number of sequences");
  synth->add_option("--out", out, "Output sequence file")->required();

  auto* validate = app.add_subcommand("validate", "Check every record of a sequence file");
  validate->add_option("--in", in, "Sequence file")->required();
  validate->add_option("--report", report, "JSON report path");

  auto add_train = [&](CLI::App* s) {
    s->add_option("--out", out, "Checkpoint directory")->required();
    s->add_option("--log", tf.log, "Step log (default <out>/loss.tsv)");
    s->add_flag("--resume", tf.resume, "Continue from the checkpoint in --out");
    s->add_option("--until", tf.until, "Stop after this step in this invocation");
    s->add_option("--checkpoint-every", tf.every, "Save every n steps");
  };
  auto* train_ae = app.add_subcommand("train-ae", "Train the autoencoder");
  train_ae->add_option("--data", data, "Training sequence file")->required();
  add_train(train_ae);

  auto* eval_ae = app.add_subcommand("eval-ae", "Reconstruction metrics of an autoencoder");
  eval_ae->add_option("--data", data, "Sequence file")->required();
  eval_ae->add_option("--ckpt", ckpt, "Autoencoder checkpoint")->required();
  eval_ae->add_option("--report", report, "JSON report path");
  eval_ae->add_option("--predictions", preds, "Write reconstructed sequences here");
  eval_ae->add_option("--chamfer", chamfer, "squared or unsquared");
  eval_ae->add_flag("--no-geometry", no_geometry, "Skip MCD, IR and SR-proxy");

  auto* encode = app.add_subcommand("encode", "Encode sequences to latent blocks");
  encode->add_option("--data", data, "Sequence file")->required();
  encode->add_option("--ckpt", ckpt, "Autoencoder checkpoint")->required();
  encode->add_option("--out", out, "Latent directory")->required();

  auto* train_diff = app.add_subcommand("train-diff", "Train the latent denoiser");
  train_diff->add_option("--latents", latents, "Latent directory")->required();
  add_train(train_diff);

  auto* sample = app.add_subcommand("sample", "Draw latent blocks from a trained denoiser");
  sample->add_option("--ckpt", ckpt, "Diffusion checkpoint")->required();
  sample->add_option("--out", out, "Latent directory")->required();
  sample->add_option("--count", count, "Number of latents");
  sample->add_option("--mode", mode, "standard or paper-literal");
  sample->add_option("--steps", steps, "Reverse steps (default: trained T)");

  auto* decode = app.add_subcommand("decode", "Decode latent blocks to sequences");
  decode->add_option("--ckpt", ckpt, "Autoencoder checkpoint")->required();
  decode->add_option("--latents", latents, "Latent directory")->required();
  decode->add_option("--out", out, "Output sequence file")->required();
  decode->add_option("--report", report, "JSON report path");

  auto* eval_gen = app.add_subcommand("eval-gen", "Generation metrics");
  eval_gen->add_option("--gen", gen, "Generated sequence file")->required();
  eval_gen->add_option("--ref", ref, "Reference sequence file")->required();
  eval_gen->add_option("--train", train, "Training sequence file for novelty (default: --ref)");
  eval_gen->add_option("--report", report, "JSON report path");
  eval_gen->add_option("--chamfer", chamfer, "squared or unsquared");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    pipeline::RunConfig c = resolve_config(g);
    if (count && *count == 0) throw Error(ErrorCode::ConfigError, "--count must be positive");
    if (count && sample->parsed()) c.sample.count = *count;
    if (steps) c.sample.steps = *steps;
    if (!mode.empty()) c.sample.mode = diff::mode_from_name(mode);
    if (!chamfer.empty()) c.eval.chamfer = pipeline::chamfer_from_name(chamfer);
    spdlog::debug("config: {}", to_json(c).dump());

    if (synth->parsed()) return cmd_synth(c, count ? *count : c.synth_count, out);
    if (validate->parsed()) return cmd_validate(in, report);
    if (train_ae->parsed()) return cmd_train_ae(c, data, out, tf);
    if (eval_ae->parsed()) return cmd_eval_ae(c, data, ckpt, report, preds, !no_geometry);
    if (encode->parsed()) return cmd_encode(c, data, ckpt, out);
    if (train_diff->parsed()) return cmd_train_diff(c, latents, out, tf);
    if (sample->parsed()) return cmd_sample(c, ckpt, out);
    if (decode->parsed()) return cmd_decode(c, ckpt, latents, out, report);
    if (eval_gen->parsed()) return cmd_eval_gen(c, gen, ref, train, report);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kExitError;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitError;
  }
  return kExitError;
}

}  // namespace cadseq::cli
