#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "cadseq/autoencoder/model.hpp"
#include "cadseq/diffusion/denoiser.hpp"
#include "cadseq/geom/chamfer.hpp"
#include "cadseq/pipeline/ae_trainer.hpp"
#include "cadseq/pipeline/diff_trainer.hpp"

namespace cadseq::pipeline {

struct SampleConfig {
  std::size_t count = 32;
  diff::DiffusionMode mode = diff::DiffusionMode::Standard;
  std::size_t steps = 0;  // 0 keeps the step count the denoiser was trained with

  bool operator==(const SampleConfig&) const = default;
};

struct EvalConfig {
  std::size_t cloud_points = geom::kDefaultCloudSize;
  int resolution = geom::kDefaultResolution;
  geom::ChamferVariant chamfer = geom::ChamferVariant::Squared;

  bool operator==(const EvalConfig&) const = default;
};

struct RunConfig {
  std::string profile = "paper";
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool deterministic = false;
  std::size_t synth_count = 64;
  ae::AeConfig ae;
  AeTrainConfig ae_train;
  diff::DiffConfig diff;
  DiffTrainConfig diff_train;
  SampleConfig sample;
  EvalConfig eval;

  // Threads actually used: 1 under --deterministic.
  unsigned effective_threads() const { return deterministic ? 1u : (threads ? threads : 1u); }
  bool operator==(const RunConfig&) const = default;
};

std::vector<std::string> profile_names();

// "paper" holds the published training setup; "desk" is the laptop-scale
// setup used by the acceptance run; "tiny" finishes in seconds.
// Throws ConfigError for an unknown name.
RunConfig profile_config(std::string_view name);

nlohmann::json to_json(const RunConfig& c);

// Overlays a partial JSON document onto c. Every key must already exist in
// the configuration and keep its type; otherwise ConfigError names the key.
void apply_overlay(RunConfig& c, const nlohmann::json& overlay);

// Parses a config file into a JSON object. Throws IoError or ConfigError.
nlohmann::json read_config_json(const std::filesystem::path& path);

// Reads a config file. A top-level "profile" selects the base, else `profile`.
// Throws IoError or ConfigError.
RunConfig load_run_config(const std::filesystem::path& path, std::string_view profile = "paper");

// Cross-stage consistency (latent shapes, positive sizes). Throws ConfigError.
void check_config(const RunConfig& c);

std::string_view chamfer_name(geom::ChamferVariant v);
geom::ChamferVariant chamfer_from_name(std::string_view name);

}  // namespace cadseq::pipeline
