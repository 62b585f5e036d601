#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <vector>

#include "cadseq/diffusion/denoiser.hpp"
#include "cadseq/numcore/optim.hpp"
#include "cadseq/pipeline/ae_trainer.hpp"
#include "cadseq/rng.hpp"

namespace cadseq::pipeline {

struct DiffTrainConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  std::uint64_t warmup = 0;
  std::uint64_t decay_at = 100000;
  double decay_factor = 0.1;
  double clip = 0.0;  // 0 disables clipping
  std::size_t batch = 64;
  std::size_t iters = 200000;
  bool normalize = true;  // train on latents divided by their global standard deviation

  bool operator==(const DiffTrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const DiffTrainConfig& c);
void from_json(const nlohmann::json& j, DiffTrainConfig& c);

// n latent blocks stored as one [n x rows x cols] tensor named "latents".
void save_latents(const std::filesystem::path& dir, const std::vector<nc::Array<float>>& latents,
                  const nlohmann::json& meta = nlohmann::json::object());
std::vector<nc::Array<float>> load_latents(const std::filesystem::path& dir, nlohmann::json* meta = nullptr);

class DiffTrainer {
 public:
  DiffTrainer(const diff::DiffConfig& model_cfg, const DiffTrainConfig& train_cfg, std::vector<nc::Array<float>> latents,
              std::uint64_t seed, unsigned threads = 1);

  StepRecord step();
  // Steps to the iteration budget, or to step `until` when nonzero.
  std::vector<StepRecord> run(const std::function<void(const StepRecord&)>& on_step = {}, std::uint64_t until = 0);
  std::uint64_t total_steps() const { return cfg_.iters; }

  std::uint64_t steps_done() const { return optim_.step; }
  // Latents are divided by this before training, and samples multiplied by it.
  double latent_scale() const { return scale_; }
  diff::Denoiser<float>& model() { return model_; }
  const diff::Denoiser<float>& model() const { return model_; }
  const DiffTrainConfig& train_config() const { return cfg_; }
  void set_threads(unsigned t) { threads_ = t; }

  // Mean loss over every training latent at fixed (t, eps) draws from seed, in eval mode.
  double evaluate(std::uint64_t seed, std::size_t draws = 1) const;

  void save(const std::filesystem::path& dir, const nlohmann::json& run_config = nullptr) const;
  static DiffTrainer load(const std::filesystem::path& dir, std::vector<nc::Array<float>> latents, unsigned threads = 1);

 private:
  DiffTrainConfig cfg_;
  diff::Denoiser<float> model_;
  nc::OptimState<float> optim_;
  std::vector<nc::Array<float>> data_;
  std::uint64_t seed_;
  unsigned threads_;
  Rng rng_;
  double scale_ = 1.0;
};

// Scale recorded in a saved trainer or sampler bundle.
double latent_scale_of(const nc::TensorBundle& b);

}  // namespace cadseq::pipeline
