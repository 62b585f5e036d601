#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <string>
#include <vector>

#include "cadseq/autoencoder/model.hpp"
#include "cadseq/metrics/metrics.hpp"
#include "cadseq/numcore/optim.hpp"
#include "cadseq/rng.hpp"

namespace cadseq::pipeline {

struct AeTrainConfig {
  double lr = 1e-3;
  std::uint64_t warmup = 2000;
  double weight_decay = 1e-4;
  double clip = 1.0;
  std::size_t batch = 32;
  std::size_t epochs = 100;
  std::size_t max_steps = 0;  // 0 derives the step count from epochs
  std::uint64_t decay_at = 0;  // 0 disables the step decay
  double decay_factor = 0.1;
  std::size_t eval_every = 0;  // 0 disables periodic evaluation
  double stop_acc_c = 0.0;  // early stop once both training accuracies reach these; 0 disables
  double stop_acc_p = 0.0;

  bool operator==(const AeTrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const AeTrainConfig& c);
void from_json(const nlohmann::json& j, AeTrainConfig& c);

struct StepRecord {
  std::uint64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct AccuracyRecord {
  std::uint64_t step = 0;
  double acc_c = 0.0;
  double acc_p = 0.0;
};

// Greedy reconstruction accuracy of the model over a set, in eval mode.
metrics::AccuracyCounts training_accuracy(const ae::AutoEncoder<float>& model, const std::vector<seq::CadSequence>& data,
                                          unsigned threads = 1);

class AeTrainer {
 public:
  AeTrainer(const ae::AeConfig& model_cfg, const AeTrainConfig& train_cfg, std::vector<seq::CadSequence> data,
            std::uint64_t seed, unsigned threads = 1);

  // One optimizer step on the next minibatch.
  StepRecord step();
  // Steps until the budget or the accuracy targets are met, or until step `until` when nonzero.
  std::vector<StepRecord> run(const std::function<void(const StepRecord&)>& on_step = {},
                              const std::function<void(const AccuracyRecord&)>& on_eval = {},
                              std::uint64_t until = 0);

  std::uint64_t steps_done() const { return optim_.step; }
  std::uint64_t total_steps() const;
  bool targets_met() const { return targets_met_; }
  const std::vector<AccuracyRecord>& evaluations() const { return evals_; }

  ae::AutoEncoder<float>& model() { return model_; }
  const ae::AutoEncoder<float>& model() const { return model_; }
  const ae::AeConfig& model_config() const { return model_.config(); }
  const AeTrainConfig& train_config() const { return cfg_; }
  void set_threads(unsigned t) { threads_ = t; }

  // Weights, optimizer moments, sampler state and configuration.
  void save(const std::filesystem::path& dir, const nlohmann::json& run_config = nullptr) const;
  static AeTrainer load(const std::filesystem::path& dir, std::vector<seq::CadSequence> data, unsigned threads = 1);

 private:
  std::vector<std::size_t> next_batch();
  AccuracyRecord evaluate();

  AeTrainConfig cfg_;
  ae::AutoEncoder<float> model_;
  nc::OptimState<float> optim_;
  std::vector<seq::CadSequence> data_;
  std::uint64_t seed_;
  unsigned threads_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  bool targets_met_ = false;
  std::vector<AccuracyRecord> evals_;
};

}  // namespace cadseq::pipeline
