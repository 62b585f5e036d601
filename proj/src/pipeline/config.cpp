#include "cadseq/pipeline/config.hpp"

#include <fstream>
#include <sstream>

#include "cadseq/error.hpp"

namespace cadseq::pipeline {

namespace {

RunConfig desk() {
  RunConfig c;
  c.profile = "desk";
  c.ae.d_embed = 128;
  c.ae.enc_blocks = 2;
  c.ae.latent_dim = 64;
  c.ae.d_dec = 128;
  c.ae.dec_blocks = 2;
  c.ae.heads = 8;
  c.ae.ffn = 512;
  c.ae.dropout = 0.0;
  c.ae_train.lr = 1e-3;
  c.ae_train.warmup = 200;
  c.ae_train.batch = 16;
  c.ae_train.max_steps = 2000;
  c.ae_train.eval_every = 50;
  c.ae_train.stop_acc_c = 0.999;
  c.ae_train.stop_acc_p = 0.995;
  c.diff.embed = 256;
  c.diff.layers = 4;
  c.diff.heads = 8;
  c.diff.ffn = 512;
  c.diff.dropout = 0.0;
  c.diff.steps = 100;
  c.diff_train.lr = 5e-4;
  c.diff_train.warmup = 100;
  c.diff_train.decay_at = 0;
  c.diff_train.clip = 1.0;
  c.diff_train.batch = 2;
  c.diff_train.iters = 3000;
  return c;
}

RunConfig tiny() {
  RunConfig c;
  c.profile = "tiny";
  c.synth_count = 6;
  c.ae.d_embed = 16;
  c.ae.enc_blocks = 1;
  c.ae.state_size = 4;
  c.ae.latent_dim = 8;
  c.ae.d_dec = 16;
  c.ae.dec_blocks = 1;
  c.ae.heads = 2;
  c.ae.ffn = 32;
  c.ae.dropout = 0.0;
  c.ae_train.warmup = 2;
  c.ae_train.batch = 3;
  c.ae_train.max_steps = 20;
  c.diff.latent_dim = 8;
  c.diff.embed = 16;
  c.diff.layers = 1;
  c.diff.heads = 2;
  c.diff.ffn = 32;
  c.diff.dropout = 0.0;
  c.diff.steps = 10;
  c.diff_train.lr = 1e-3;
  c.diff_train.decay_at = 0;
  c.diff_train.clip = 1.0;
  c.diff_train.batch = 2;
  c.diff_train.iters = 20;
  c.sample.count = 4;
  c.eval.cloud_points = 200;
  c.eval.resolution = 32;
  return c;
}

std::string type_label(const nlohmann::json& j) {
  if (j.is_number_unsigned()) return "non-negative integer";
  if (j.is_number_integer()) return "integer";
  return j.type_name();
}

// A leaf is compatible when it can be read back as the base type without loss.
bool compatible(const nlohmann::json& base, const nlohmann::json& v) {
  if (base.is_number_unsigned()) return v.is_number_unsigned();
  if (base.is_number_integer()) return v.is_number_integer();
  if (base.is_number_float()) return v.is_number();
  return base.type() == v.type();
}

void merge(nlohmann::json& base, const nlohmann::json& over, const std::string& prefix) {
  if (!over.is_object()) throw Error(ErrorCode::ConfigError, (prefix.empty() ? "config" : prefix) + " must be an object");
  for (const auto& [k, v] : over.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    auto it = base.find(k);
    if (it == base.end()) throw Error(ErrorCode::ConfigError, "unknown key '" + key + "'");
    if (it->is_object()) {
      merge(*it, v, key);
    } else if (!compatible(*it, v)) {
      throw Error(ErrorCode::ConfigError, "key '" + key + "' expects " + type_label(*it) + ", got " + type_label(v));
    } else {
      *it = v;
    }
  }
}

template <typename T>
T section(const nlohmann::json& j, const char* name) {
  try {
    return j.at(name).get<T>();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, std::string("in '") + name + "': " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("in '") + name + "': " + e.what());
  }
}

RunConfig from_json(const nlohmann::json& j) {
  RunConfig c;
  c.profile = j.at("profile").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.threads = j.at("threads").get<unsigned>();
  c.deterministic = j.at("deterministic").get<bool>();
  c.synth_count = j.at("synth_count").get<std::size_t>();
  c.ae = section<ae::AeConfig>(j, "ae");
  c.ae_train = section<AeTrainConfig>(j, "ae_train");
  c.diff = section<diff::DiffConfig>(j, "diff");
  c.diff_train = section<DiffTrainConfig>(j, "diff_train");
  const auto& s = j.at("sample");
  c.sample.count = s.at("count").get<std::size_t>();
  try {
    c.sample.mode = diff::mode_from_name(s.at("mode").get<std::string>());
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, std::string("in 'sample.mode': ") + e.what());
  }
  c.sample.steps = s.at("steps").get<std::size_t>();
  const auto& e = j.at("eval");
  c.eval.cloud_points = e.at("cloud_points").get<std::size_t>();
  c.eval.resolution = e.at("resolution").get<int>();
  c.eval.chamfer = chamfer_from_name(e.at("chamfer").get<std::string>());
  return c;
}

}  // namespace

std::vector<std::string> profile_names() { return {"paper", "desk", "tiny"}; }

RunConfig profile_config(std::string_view name) {
  if (name == "paper") return RunConfig{};
  if (name == "desk") return desk();
  if (name == "tiny") return tiny();
  throw Error(ErrorCode::ConfigError, "unknown profile '" + std::string(name) + "' (paper, desk, tiny)");
}

std::string_view chamfer_name(geom::ChamferVariant v) {
  return v == geom::ChamferVariant::Squared ? "squared" : "unsquared";
}

geom::ChamferVariant chamfer_from_name(std::string_view name) {
  if (name == "squared") return geom::ChamferVariant::Squared;
  if (name == "unsquared") return geom::ChamferVariant::Unsquared;
  throw Error(ErrorCode::ConfigError, "unknown chamfer variant '" + std::string(name) + "' (squared, unsquared)");
}

nlohmann::json to_json(const RunConfig& c) {
  return {{"profile", c.profile},
          {"seed", c.seed},
          {"threads", c.threads},
          {"deterministic", c.deterministic},
          {"synth_count", c.synth_count},
          {"ae", c.ae},
          {"ae_train", c.ae_train},
          {"diff", c.diff},
          {"diff_train", c.diff_train},
          {"sample", {{"count", c.sample.count}, {"mode", std::string(diff::mode_name(c.sample.mode))}, {"steps", c.sample.steps}}},
          {"eval",
           {{"cloud_points", c.eval.cloud_points},
            {"resolution", c.eval.resolution},
            {"chamfer", std::string(chamfer_name(c.eval.chamfer))}}}};
}

void apply_overlay(RunConfig& c, const nlohmann::json& overlay) {
  nlohmann::json j = to_json(c);
  merge(j, overlay, "");
  c = from_json(j);
}

nlohmann::json read_config_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, "config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config '" + path.string() + "' must be a JSON object");
  return j;
}

RunConfig load_run_config(const std::filesystem::path& path, std::string_view profile) {
  nlohmann::json j = read_config_json(path);
  std::string base(profile);
  if (auto it = j.find("profile"); it != j.end()) {
    if (!it->is_string()) throw Error(ErrorCode::ConfigError, "key 'profile' expects string");
    base = it->get<std::string>();
  }
  RunConfig c = profile_config(base);
  j.erase("profile");
  apply_overlay(c, j);
  return c;
}

void check_config(const RunConfig& c) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, m); };
  if (c.ae.latent_dim != c.diff.latent_dim) {
    fail("'diff.latent_dim' (" + std::to_string(c.diff.latent_dim) + ") must equal 'ae.latent_dim' (" +
         std::to_string(c.ae.latent_dim) + ")");
  }
  if (c.ae.positions != c.diff.positions) {
    fail("'diff.positions' (" + std::to_string(c.diff.positions) + ") must equal 'ae.positions' (" +
         std::to_string(c.ae.positions) + ")");
  }
  if (c.ae_train.batch == 0) fail("'ae_train.batch' must be positive");
  if (c.diff_train.batch == 0) fail("'diff_train.batch' must be positive");
  if (c.diff.steps == 0) fail("'diff.steps' must be positive");
  if (c.sample.count == 0) fail("'sample.count' must be positive");
  if (c.eval.cloud_points == 0) fail("'eval.cloud_points' must be positive");
  if (c.eval.resolution < 2) fail("'eval.resolution' must be at least 2");
}

}  // namespace cadseq::pipeline
