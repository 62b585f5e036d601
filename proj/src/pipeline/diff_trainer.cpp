#include "cadseq/pipeline/diff_trainer.hpp"

#include <algorithm>
#include <cmath>

#include "cadseq/error.hpp"
#include "cadseq/numcore/batch.hpp"
#include "cadseq/numcore/checkpoint.hpp"

namespace cadseq::pipeline {

void to_json(nlohmann::json& j, const DiffTrainConfig& c) {
  j = {{"lr", c.lr},       {"beta1", c.beta1}, {"warmup", c.warmup}, {"decay_at", c.decay_at},
       {"decay_factor", c.decay_factor}, {"clip", c.clip}, {"batch", c.batch}, {"iters", c.iters},
       {"normalize", c.normalize}};
}

void from_json(const nlohmann::json& j, DiffTrainConfig& c) {
  const DiffTrainConfig d;
  c.lr = j.value("lr", d.lr);
  c.beta1 = j.value("beta1", d.beta1);
  c.warmup = j.value("warmup", d.warmup);
  c.decay_at = j.value("decay_at", d.decay_at);
  c.decay_factor = j.value("decay_factor", d.decay_factor);
  c.clip = j.value("clip", d.clip);
  c.batch = j.value("batch", d.batch);
  c.iters = j.value("iters", d.iters);
  c.normalize = j.value("normalize", d.normalize);
}

void save_latents(const std::filesystem::path& dir, const std::vector<nc::Array<float>>& latents,
                  const nlohmann::json& meta) {
  if (latents.empty()) throw Error(ErrorCode::EmptySet, "no latents to save");
  const auto rows = latents.front().rows(), cols = latents.front().cols();
  nc::Array<float> all({latents.size(), rows, cols});
  for (std::size_t i = 0; i < latents.size(); ++i) {
    if (latents[i].rows() != rows || latents[i].cols() != cols) {
      throw Error(ErrorCode::ShapeMismatch, "latent " + std::to_string(i) + " has shape " +
                                                nc::shape_string(latents[i].shape()));
    }
    std::copy(latents[i].data(), latents[i].data() + rows * cols, all.data() + i * rows * cols);
  }
  nc::TensorBundle b;
  b.tensors.push_back({"latents", std::move(all)});
  b.meta = meta;
  b.meta["kind"] = "latents";
  nc::save_bundle(dir, b);
}

std::vector<nc::Array<float>> load_latents(const std::filesystem::path& dir, nlohmann::json* meta) {
  const auto b = nc::load_bundle(dir);
  const auto& all = b.get("latents");
  if (all.rank() != 3) throw Error(ErrorCode::CorruptCheckpoint, dir.string() + ": latents must be rank 3");
  const std::size_t n = all.shape()[0], rows = all.shape()[1], cols = all.shape()[2];
  std::vector<nc::Array<float>> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.emplace_back(nc::Shape{rows, cols},
                     std::vector<float>(all.data() + i * rows * cols, all.data() + (i + 1) * rows * cols));
  }
  if (meta) *meta = b.meta;
  return out;
}

namespace {

nc::AdamConfig adam_for(const DiffTrainConfig& c) {
  nc::AdamConfig a;
  a.lr = c.lr;
  a.beta1 = c.beta1;
  return a;
}

double global_std(const std::vector<nc::Array<float>>& xs) {
  double s = 0, s2 = 0, n = 0;
  for (const auto& x : xs) {
    for (float v : x.values()) s += v, s2 += double(v) * v, n += 1;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  return var > 0 ? std::sqrt(var) : 1.0;
}

}  // namespace

DiffTrainer::DiffTrainer(const diff::DiffConfig& model_cfg, const DiffTrainConfig& train_cfg,
                         std::vector<nc::Array<float>> latents, std::uint64_t seed, unsigned threads)
    : cfg_(train_cfg),
      model_(model_cfg, seed),
      optim_(model_.params(), adam_for(train_cfg)),
      data_(std::move(latents)),
      seed_(seed),
      threads_(threads),
      rng_(seed ^ 0x94d049bb133111ebull) {
  if (data_.empty()) throw Error(ErrorCode::EmptySet, "no training latents");
  if (cfg_.batch == 0) throw Error(ErrorCode::ConfigError, "diff_train.batch must be positive");
  for (const auto& z : data_) {
    if (z.rows() != model_cfg.positions || z.cols() != model_cfg.latent_dim) {
      throw Error(ErrorCode::ShapeMismatch, "latent shape " + nc::shape_string(z.shape()) + " does not match the denoiser");
    }
  }
  if (cfg_.normalize) scale_ = global_std(data_);
  const float inv = static_cast<float>(1.0 / scale_);
  for (auto& z : data_) {
    for (auto& v : z.values()) v *= inv;
  }
}

StepRecord DiffTrainer::step() {
  std::vector<std::size_t> idx(cfg_.batch);
  for (auto& i : idx) i = static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(data_.size()) - 1));
  const double lr = nc::lr_schedule(optim_.step + 1, cfg_.lr, cfg_.warmup, cfg_.decay_at, cfg_.decay_factor);
  auto res = nc::run_batch<float>(
      model_.params(), idx.size(), [&](nc::Tape<float>& t, std::size_t i) { return model_.loss(t, data_[idx[i]]); },
      seed_ + 0x2545f4914f6cdd1dull * (optim_.step + 1), threads_, true);
  if (!std::isfinite(res.loss)) {
    throw Error(ErrorCode::NonFinite, "diffusion loss is not finite at step " + std::to_string(optim_.step));
  }
  if (cfg_.clip > 0) nc::clip_gradients(res.grads, cfg_.clip);
  nc::optimizer_step(model_.params(), res.grads, optim_, lr);
  return {optim_.step, res.loss, lr};
}

std::vector<StepRecord> DiffTrainer::run(const std::function<void(const StepRecord&)>& on_step, std::uint64_t until) {
  std::vector<StepRecord> log;
  const std::uint64_t last = until ? std::min<std::uint64_t>(until, cfg_.iters) : cfg_.iters;
  while (optim_.step < last) {
    log.push_back(step());
    if (on_step) on_step(log.back());
  }
  return log;
}

double DiffTrainer::evaluate(std::uint64_t seed, std::size_t draws) const {
  const std::size_t n = data_.size() * draws;
  std::vector<double> losses(n);
  nc::parallel_for(n, threads_, [&](std::size_t k) {
    nc::Tape<float> t(false, false, seed + 0x9e3779b97f4a7c15ull * (k + 1));
    losses[k] = static_cast<double>(model_.loss(t, data_[k % data_.size()]).value()[0]);
  });
  double s = 0;
  for (double l : losses) s += l;
  return s / static_cast<double>(n);
}

void DiffTrainer::save(const std::filesystem::path& dir, const nlohmann::json& run_config) const {
  nc::TensorBundle b = model_.to_bundle();
  const auto& store = model_.params();
  for (std::size_t i = 0; i < store.size(); ++i) {
    b.tensors.push_back({"opt.m." + store[i].name, optim_.m[i]});
    b.tensors.push_back({"opt.v." + store[i].name, optim_.v[i]});
  }
  b.meta["kind"] = "diff-trainer";
  b.meta["train_config"] = cfg_;
  b.meta["seed"] = seed_;
  b.meta["step"] = optim_.step;
  b.meta["rng"] = rng_.state();
  b.meta["latent_scale"] = scale_;
  if (!run_config.is_null()) b.meta["run_config"] = run_config;
  nc::save_bundle(dir, b);
}

DiffTrainer DiffTrainer::load(const std::filesystem::path& dir, std::vector<nc::Array<float>> latents, unsigned threads) {
  const nc::TensorBundle b = nc::load_bundle(dir);
  try {
    DiffTrainer t(b.meta.at("diff_config").get<diff::DiffConfig>(), b.meta.at("train_config").get<DiffTrainConfig>(),
                  std::move(latents), b.meta.at("seed").get<std::uint64_t>(), threads);
    t.model_.load_bundle(b);
    const auto& store = t.model_.params();
    for (std::size_t i = 0; i < store.size(); ++i) {
      t.optim_.m[i] = b.get("opt.m." + store[i].name);
      t.optim_.v[i] = b.get("opt.v." + store[i].name);
    }
    t.optim_.step = b.meta.at("step").get<std::uint64_t>();
    t.rng_.set_state(b.meta.at("rng").get<std::string>());
    const double saved = b.meta.at("latent_scale").get<double>();
    if (saved != t.scale_) {
      throw Error(ErrorCode::CorruptCheckpoint, dir.string() + ": latent scale differs from the supplied latents");
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptCheckpoint, dir.string() + ": " + e.what());
  }
}

double latent_scale_of(const nc::TensorBundle& b) { return b.meta.value("latent_scale", 1.0); }

}  // namespace cadseq::pipeline
