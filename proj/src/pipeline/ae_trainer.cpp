#include "cadseq/pipeline/ae_trainer.hpp"

#include <algorithm>
#include <cmath>

#include "cadseq/error.hpp"
#include "cadseq/numcore/batch.hpp"
#include "cadseq/numcore/checkpoint.hpp"

namespace cadseq::pipeline {

void to_json(nlohmann::json& j, const AeTrainConfig& c) {
  j = {{"lr", c.lr},
       {"warmup", c.warmup},
       {"weight_decay", c.weight_decay},
       {"clip", c.clip},
       {"batch", c.batch},
       {"epochs", c.epochs},
       {"max_steps", c.max_steps},
       {"decay_at", c.decay_at},
       {"decay_factor", c.decay_factor},
       {"eval_every", c.eval_every},
       {"stop_acc_c", c.stop_acc_c},
       {"stop_acc_p", c.stop_acc_p}};
}

void from_json(const nlohmann::json& j, AeTrainConfig& c) {
  const AeTrainConfig d;
  c.lr = j.value("lr", d.lr);
  c.warmup = j.value("warmup", d.warmup);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.clip = j.value("clip", d.clip);
  c.batch = j.value("batch", d.batch);
  c.epochs = j.value("epochs", d.epochs);
  c.max_steps = j.value("max_steps", d.max_steps);
  c.decay_at = j.value("decay_at", d.decay_at);
  c.decay_factor = j.value("decay_factor", d.decay_factor);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.stop_acc_c = j.value("stop_acc_c", d.stop_acc_c);
  c.stop_acc_p = j.value("stop_acc_p", d.stop_acc_p);
}

metrics::AccuracyCounts training_accuracy(const ae::AutoEncoder<float>& model, const std::vector<seq::CadSequence>& data,
                                          unsigned threads) {
  std::vector<metrics::AccuracyCounts> per(data.size());
  nc::parallel_for(data.size(), threads, [&](std::size_t i) {
    per[i] = metrics::command_accuracy(model.predict(model.encode_array(data[i])), data[i]);
  });
  metrics::AccuracyCounts total;
  for (const auto& c : per) total += c;
  return total;
}

namespace {

nc::AdamConfig adam_for(const AeTrainConfig& c) {
  nc::AdamConfig a;
  a.lr = c.lr;
  a.weight_decay = c.weight_decay;
  return a;
}

}  // namespace

AeTrainer::AeTrainer(const ae::AeConfig& model_cfg, const AeTrainConfig& train_cfg, std::vector<seq::CadSequence> data,
                     std::uint64_t seed, unsigned threads)
    : cfg_(train_cfg),
      model_(model_cfg, seed),
      optim_(model_.params(), adam_for(train_cfg)),
      data_(std::move(data)),
      seed_(seed),
      threads_(threads),
      rng_(seed ^ 0x5bd1e995ull) {
  if (data_.empty()) throw Error(ErrorCode::ConfigError, "training set is empty");
  if (cfg_.batch == 0) throw Error(ErrorCode::ConfigError, "ae_train.batch must be positive");
}

std::uint64_t AeTrainer::total_steps() const {
  if (cfg_.max_steps) return cfg_.max_steps;
  const std::size_t per_epoch = (data_.size() + cfg_.batch - 1) / cfg_.batch;
  return static_cast<std::uint64_t>(per_epoch * cfg_.epochs);
}

std::vector<std::size_t> AeTrainer::next_batch() {
  std::vector<std::size_t> out;
  while (out.size() < std::min(cfg_.batch, data_.size())) {
    if (cursor_ >= order_.size()) {
      order_.resize(data_.size());
      for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
      for (std::size_t i = order_.size(); i > 1; --i) {
        std::swap(order_[i - 1], order_[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
      }
      cursor_ = 0;
    }
    out.push_back(order_[cursor_++]);
  }
  return out;
}

StepRecord AeTrainer::step() {
  const auto idx = next_batch();
  const double lr = nc::lr_schedule(optim_.step + 1, cfg_.lr, cfg_.warmup, cfg_.decay_at ? cfg_.decay_at : ~0ull,
                                    cfg_.decay_factor);
  auto res = nc::run_batch<float>(
      model_.params(), idx.size(),
      [&](nc::Tape<float>& t, std::size_t i) { return model_.sequence_loss(t, data_[idx[i]]); },
      seed_ + 0x2545f4914f6cdd1dull * (optim_.step + 1), threads_, true);
  if (!std::isfinite(res.loss)) {
    throw Error(ErrorCode::NonFinite, "autoencoder loss is not finite at step " + std::to_string(optim_.step));
  }
  if (cfg_.clip > 0) nc::clip_gradients(res.grads, cfg_.clip);
  nc::optimizer_step(model_.params(), res.grads, optim_, lr);
  return {optim_.step, res.loss, lr};
}

AccuracyRecord AeTrainer::evaluate() {
  const auto c = training_accuracy(model_, data_, threads_);
  AccuracyRecord r{optim_.step, c.acc_c(), c.acc_p()};
  evals_.push_back(r);
  if ((cfg_.stop_acc_c > 0 || cfg_.stop_acc_p > 0) && r.acc_c >= cfg_.stop_acc_c && r.acc_p >= cfg_.stop_acc_p) {
    targets_met_ = true;
  }
  return r;
}

std::vector<StepRecord> AeTrainer::run(const std::function<void(const StepRecord&)>& on_step,
                                       const std::function<void(const AccuracyRecord&)>& on_eval,
                                       std::uint64_t until) {
  std::vector<StepRecord> log;
  const std::uint64_t total = total_steps();
  const std::uint64_t last = until ? std::min(until, total) : total;
  while (!targets_met_ && optim_.step < last) {
    const auto rec = step();
    log.push_back(rec);
    if (on_step) on_step(rec);
    if (cfg_.eval_every && (optim_.step % cfg_.eval_every == 0 || optim_.step == total)) {
      const auto acc = evaluate();
      if (on_eval) on_eval(acc);
    }
  }
  return log;
}

void AeTrainer::save(const std::filesystem::path& dir, const nlohmann::json& run_config) const {
  nc::TensorBundle b = model_.to_bundle();
  const auto& store = model_.params();
  for (std::size_t i = 0; i < store.size(); ++i) {
    b.tensors.push_back({"opt.m." + store[i].name, optim_.m[i]});
    b.tensors.push_back({"opt.v." + store[i].name, optim_.v[i]});
  }
  nlohmann::json evals = nlohmann::json::array();
  for (const auto& e : evals_) evals.push_back({e.step, e.acc_c, e.acc_p});
  b.meta["kind"] = "ae-trainer";
  b.meta["train_config"] = cfg_;
  b.meta["seed"] = seed_;
  b.meta["step"] = optim_.step;
  b.meta["rng"] = rng_.state();
  b.meta["order"] = order_;
  b.meta["cursor"] = cursor_;
  b.meta["targets_met"] = targets_met_;
  b.meta["evals"] = evals;
  if (!run_config.is_null()) b.meta["run_config"] = run_config;
  nc::save_bundle(dir, b);
}

AeTrainer AeTrainer::load(const std::filesystem::path& dir, std::vector<seq::CadSequence> data, unsigned threads) {
  const nc::TensorBundle b = nc::load_bundle(dir);
  try {
    AeTrainer t(b.meta.at("ae_config").get<ae::AeConfig>(), b.meta.at("train_config").get<AeTrainConfig>(),
                std::move(data), b.meta.at("seed").get<std::uint64_t>(), threads);
    t.model_.load_bundle(b);
    const auto& store = t.model_.params();
    for (std::size_t i = 0; i < store.size(); ++i) {
      t.optim_.m[i] = b.get("opt.m." + store[i].name);
      t.optim_.v[i] = b.get("opt.v." + store[i].name);
    }
    t.optim_.step = b.meta.at("step").get<std::uint64_t>();
    t.rng_.set_state(b.meta.at("rng").get<std::string>());
    t.order_ = b.meta.at("order").get<std::vector<std::size_t>>();
    t.cursor_ = b.meta.at("cursor").get<std::size_t>();
    t.targets_met_ = b.meta.at("targets_met").get<bool>();
    for (const auto& e : b.meta.at("evals")) t.evals_.push_back({e[0].get<std::uint64_t>(), e[1].get<double>(), e[2].get<double>()});
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptCheckpoint, dir.string() + ": " + e.what());
  }
}

}  // namespace cadseq::pipeline
