#pragma once

#include <array>
#include <cstdint>
#include <json.hpp>
#include <memory>
#include <string>
#include <vector>

#include "cadseq/diffusion/schedule.hpp"
#include "cadseq/numcore/checkpoint.hpp"
#include "cadseq/numcore/ops.hpp"

namespace cadseq::diff {

struct DiffConfig {
  std::size_t latent_dim = 64;
  std::size_t positions = 256;
  std::size_t embed = 512;
  std::size_t layers = 6;
  std::size_t heads = 8;
  std::size_t ffn = 2048;
  std::size_t fuse_hidden = 0;  // 0 selects embed
  std::size_t local_window = 64;
  std::size_t mid_window = 128;
  double dropout = 0.1;
  std::size_t steps = 1000;
  DiffusionMode mode = DiffusionMode::Standard;

  std::size_t hidden() const { return fuse_hidden ? fuse_hidden : embed; }
  bool operator==(const DiffConfig&) const = default;
};

void to_json(nlohmann::json& j, const DiffConfig& c);
void from_json(const nlohmann::json& j, DiffConfig& c);

struct DenseId {
  std::size_t w = 0;
  std::size_t b = 0;
  bool bias = true;
};

struct MstLayerIds {
  std::array<DenseId, 3> qkv;  // local, mid, global branches
  DenseId gate, fuse_out, fuse_mlp1, fuse_mlp2, ff1, ff2;
};

// Per-layer modulation vectors, each [1 x embed].
template <typename T>
struct Modulation {
  nc::Var<T> xi1, psi1, omega1, xi2, psi2, omega2;
};

// x + eta * PE for the sinusoid table at x's shape.
template <typename T>
nc::Var<T> positional_encode(nc::Var<T> x, nc::Var<T> eta);

template <typename T>
class Denoiser {
 public:
  Denoiser(const DiffConfig& cfg, std::uint64_t seed);

  const DiffConfig& config() const { return cfg_; }
  const NoiseSchedule& schedule() const { return sched_; }
  nc::ParamStore<T>& params() { return store_; }
  const nc::ParamStore<T>& params() const { return store_; }

  // tau(t): sinusoid of t followed by a two-layer MLP, [1 x embed]. Throws BadStep.
  nc::Var<T> time_embedding(nc::Tape<T>& t, std::size_t step) const;
  // The 6 vectors of every layer from tau(t).
  std::vector<Modulation<T>> modulation(nc::Tape<T>& t, nc::Var<T> tau) const;
  // PE(W_in z) + tau.
  nc::Var<T> input(nc::Tape<T>& t, nc::Var<T> z, nc::Var<T> tau) const;
  // Gated fusion of the three branch outputs followed by its MLP.
  nc::Var<T> fuse_multiscale(nc::Tape<T>& t, std::size_t layer, nc::Var<T> hl, nc::Var<T> hm, nc::Var<T> hg) const;
  // Multi-scale attention of one layer. active[b] false drops branch b (its output is zero).
  nc::Var<T> multiscale_attention(nc::Tape<T>& t, std::size_t layer, nc::Var<T> x,
                                  std::array<bool, 3> active = {true, true, true}) const;
  nc::Var<T> layer(nc::Tape<T>& t, std::size_t layer, nc::Var<T> x, const Modulation<T>& mod,
                   std::array<bool, 3> active = {true, true, true}) const;
  nc::Var<T> output(nc::Tape<T>& t, nc::Var<T> x) const;
  // Predicted noise [positions x latent_dim].
  nc::Var<T> predict(nc::Tape<T>& t, nc::Var<T> z_t, std::size_t step) const;
  nc::Array<T> predict_array(const nc::Array<T>& z_t, std::size_t step) const;

  // Mean squared noise-prediction error for one latent, with t and eps drawn from the tape's generator.
  nc::Var<T> loss(nc::Tape<T>& t, const nc::Array<T>& z0) const;

  std::shared_ptr<const nc::Array<T>> mask(std::size_t branch) const { return masks_[branch]; }
  std::size_t window(std::size_t branch) const;

  nc::TensorBundle to_bundle() const;
  void load_bundle(const nc::TensorBundle& b);

 private:
  nc::Var<T> apply(nc::Tape<T>& t, const DenseId& l, nc::Var<T> x) const;
  nc::Var<T> p(nc::Tape<T>& t, std::size_t id) const { return t.param(store_[id]); }
  DenseId make_dense(const std::string& name, std::size_t in, std::size_t out, bool bias, Rng& rng);

  DiffConfig cfg_;
  NoiseSchedule sched_;
  nc::ParamStore<T> store_;
  DenseId in_, time1_, time2_, mod_, out_;
  std::size_t eta_ = 0;
  std::vector<MstLayerIds> layers_;
  std::array<std::shared_ptr<const nc::Array<T>>, 3> masks_;
  std::shared_ptr<const nc::Array<T>> pe_;
};

}  // namespace cadseq::diff
