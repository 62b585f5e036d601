#include "cadseq/diffusion/denoiser.hpp"

#include <cmath>

#include "cadseq/error.hpp"

namespace cadseq::diff {

using nc::Array;
using nc::Tape;
using nc::Var;

void to_json(nlohmann::json& j, const DiffConfig& c) {
  j = {{"latent_dim", c.latent_dim}, {"positions", c.positions},     {"embed", c.embed},
       {"layers", c.layers},         {"heads", c.heads},             {"ffn", c.ffn},
       {"fuse_hidden", c.fuse_hidden}, {"local_window", c.local_window}, {"mid_window", c.mid_window},
       {"dropout", c.dropout},       {"steps", c.steps},             {"mode", std::string(mode_name(c.mode))}};
}

void from_json(const nlohmann::json& j, DiffConfig& c) {
  const DiffConfig d;
  c.latent_dim = j.value("latent_dim", d.latent_dim);
  c.positions = j.value("positions", d.positions);
  c.embed = j.value("embed", d.embed);
  c.layers = j.value("layers", d.layers);
  c.heads = j.value("heads", d.heads);
  c.ffn = j.value("ffn", d.ffn);
  c.fuse_hidden = j.value("fuse_hidden", d.fuse_hidden);
  c.local_window = j.value("local_window", d.local_window);
  c.mid_window = j.value("mid_window", d.mid_window);
  c.dropout = j.value("dropout", d.dropout);
  c.steps = j.value("steps", d.steps);
  c.mode = mode_from_name(j.value("mode", std::string(mode_name(d.mode))));
}

template <typename T>
Var<T> positional_encode(Var<T> x, Var<T> eta) {
  auto pe = x.tape->constant(sinusoid_table<T>(x.rows(), x.cols()));
  return nc::add(x, nc::mul_scalar(pe, eta));
}

template <typename T>
DenseId Denoiser<T>::make_dense(const std::string& name, std::size_t in, std::size_t out, bool bias, Rng& rng) {
  DenseId l;
  l.w = store_.linear_weight(name + ".w", in, out, rng).index;
  l.bias = bias;
  if (bias) l.b = store_.zeros(name + ".b", {out}).index;
  return l;
}

template <typename T>
Var<T> Denoiser<T>::apply(Tape<T>& t, const DenseId& l, Var<T> x) const {
  auto y = nc::matmul(x, p(t, l.w));
  return l.bias ? nc::add_row(y, p(t, l.b)) : y;
}

template <typename T>
Denoiser<T>::Denoiser(const DiffConfig& cfg, std::uint64_t seed) : cfg_(cfg), sched_(build_schedule(cfg.steps, cfg.mode)) {
  if (cfg.embed == 0 || cfg.embed % 2 || cfg.heads == 0 || cfg.embed % cfg.heads || cfg.positions == 0 ||
      cfg.latent_dim == 0 || cfg.layers == 0) {
    throw Error(ErrorCode::ConfigError, "invalid denoiser configuration");
  }
  Rng rng(seed);
  const std::size_t d = cfg.embed;
  in_ = make_dense("diff.in", cfg.latent_dim, d, true, rng);
  eta_ = store_.constant("diff.pe_scale", {1}, T(1)).index;
  time1_ = make_dense("diff.time.fc1", d, d, true, rng);
  time2_ = make_dense("diff.time.fc2", d, d, true, rng);
  mod_.w = store_.zeros("diff.time.modulation.w", {d, 6 * cfg.layers * d}).index;
  mod_.b = store_.zeros("diff.time.modulation.b", {6 * cfg.layers * d}).index;
  static const char* branch[3] = {"local", "mid", "global"};
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string pre = "diff.layer." + std::to_string(l);
    MstLayerIds k;
    for (std::size_t b = 0; b < 3; ++b) k.qkv[b] = make_dense(pre + ".attn." + branch[b] + ".qkv", d, 3 * d, true, rng);
    k.gate = make_dense(pre + ".fuse.gate", 3 * d, 3 * d, true, rng);
    k.fuse_out = make_dense(pre + ".fuse.out", 3 * d, d, false, rng);
    k.fuse_mlp1 = make_dense(pre + ".fuse.mlp1", d, cfg.hidden(), true, rng);
    k.fuse_mlp2 = make_dense(pre + ".fuse.mlp2", cfg.hidden(), d, true, rng);
    k.ff1 = make_dense(pre + ".ff1", d, cfg.ffn, true, rng);
    k.ff2 = make_dense(pre + ".ff2", cfg.ffn, d, true, rng);
    layers_.push_back(k);
  }
  out_ = make_dense("diff.out", d, cfg.latent_dim, true, rng);
  for (std::size_t b = 0; b < 3; ++b) {
    masks_[b] = std::make_shared<const Array<T>>(window_mask<T>(cfg.positions, window(b)));
  }
  pe_ = std::make_shared<const Array<T>>(sinusoid_table<T>(cfg.positions, d));
}

template <typename T>
std::size_t Denoiser<T>::window(std::size_t branch) const {
  return branch == 0 ? cfg_.local_window : branch == 1 ? cfg_.mid_window : kGlobalWindow;
}

template <typename T>
Var<T> Denoiser<T>::time_embedding(Tape<T>& t, std::size_t step) const {
  sched_.check_step(step);
  auto s = t.constant(sinusoid_table<T>(1, cfg_.embed, step));
  return apply(t, time2_, nc::silu(apply(t, time1_, s)));
}

template <typename T>
std::vector<Modulation<T>> Denoiser<T>::modulation(Tape<T>& t, Var<T> tau) const {
  auto all = apply(t, mod_, nc::silu(tau));
  const std::size_t d = cfg_.embed;
  std::vector<Modulation<T>> out;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    auto part = [&](std::size_t k) { return nc::slice_cols(all, (6 * l + k) * d, d); };
    out.push_back({part(0), part(1), part(2), part(3), part(4), part(5)});
  }
  return out;
}

template <typename T>
Var<T> Denoiser<T>::input(Tape<T>& t, Var<T> z, Var<T> tau) const {
  if (z.rows() != cfg_.positions || z.cols() != cfg_.latent_dim) {
    throw Error(ErrorCode::ShapeMismatch, "noisy latent shape " + nc::shape_string(z.shape()));
  }
  auto x = apply(t, in_, z);
  x = nc::add(x, nc::mul_scalar(t.constant(*pe_), p(t, eta_)));
  return nc::add_row(x, nc::reshape(tau, {cfg_.embed}));
}

template <typename T>
Var<T> Denoiser<T>::fuse_multiscale(Tape<T>& t, std::size_t layer, Var<T> hl, Var<T> hm, Var<T> hg) const {
  if (hl.shape() != hm.shape() || hl.shape() != hg.shape()) {
    throw Error(ErrorCode::ShapeMismatch, "branch outputs differ in shape");
  }
  const auto& k = layers_[layer];
  auto h = nc::concat_cols<T>({hl, hm, hg});
  auto gated = nc::mul(nc::sigmoid(apply(t, k.gate, h)), h);
  auto f = apply(t, k.fuse_out, gated);
  return apply(t, k.fuse_mlp2, nc::silu(apply(t, k.fuse_mlp1, f)));
}

template <typename T>
Var<T> Denoiser<T>::multiscale_attention(Tape<T>& t, std::size_t layer, Var<T> x, std::array<bool, 3> active) const {
  const std::size_t d = cfg_.embed;
  std::array<Var<T>, 3> h;
  for (std::size_t b = 0; b < 3; ++b) {
    if (!active[b]) {
      h[b] = t.constant(Array<T>({x.rows(), d}));
      continue;
    }
    auto qkv = apply(t, layers_[layer].qkv[b], x);
    h[b] = nc::attention(nc::slice_cols(qkv, 0, d), nc::slice_cols(qkv, d, d), nc::slice_cols(qkv, 2 * d, d), cfg_.heads,
                         masks_[b]);
  }
  return fuse_multiscale(t, layer, h[0], h[1], h[2]);
}

template <typename T>
Var<T> Denoiser<T>::layer(Tape<T>& t, std::size_t l, Var<T> x, const Modulation<T>& m, std::array<bool, 3> active) const {
  const auto& k = layers_[l];
  const std::size_t d = cfg_.embed;
  auto row = [d](Var<T> v) { return nc::reshape(v, {d}); };
  auto x1 = nc::layer_norm_modulated(x, row(m.xi1), row(m.psi1));
  auto att = nc::dropout(multiscale_attention(t, l, x1, active), cfg_.dropout);
  auto xa = nc::add(x, nc::mul_row(att, row(m.omega1)));
  auto x2 = nc::layer_norm_modulated(xa, row(m.xi2), row(m.psi2));
  auto ff = nc::dropout(apply(t, k.ff2, nc::silu(apply(t, k.ff1, x2))), cfg_.dropout);
  return nc::add(xa, nc::mul_row(ff, row(m.omega2)));
}

template <typename T>
Var<T> Denoiser<T>::output(Tape<T>& t, Var<T> x) const {
  return apply(t, out_, x);
}

template <typename T>
Var<T> Denoiser<T>::predict(Tape<T>& t, Var<T> z_t, std::size_t step) const {
  auto tau = time_embedding(t, step);
  auto mods = modulation(t, tau);
  auto x = input(t, z_t, tau);
  for (std::size_t l = 0; l < cfg_.layers; ++l) x = layer(t, l, x, mods[l]);
  return output(t, x);
}

template <typename T>
Array<T> Denoiser<T>::predict_array(const Array<T>& z_t, std::size_t step) const {
  Tape<T> t(false, false);
  return predict(t, t.constant(z_t), step).value();
}

template <typename T>
Var<T> Denoiser<T>::loss(Tape<T>& t, const Array<T>& z0) const {
  Rng& rng = t.rng();
  const auto step = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(sched_.steps)));
  Array<T> eps(z0.shape());
  for (auto& v : eps.values()) v = static_cast<T>(rng.normal());
  auto zt = forward_diffuse(z0, step, eps, sched_);
  return nc::mse(predict(t, t.constant(std::move(zt)), step), t.constant(std::move(eps)));
}

template <typename T>
nc::TensorBundle Denoiser<T>::to_bundle() const {
  nc::TensorBundle b;
  for (const auto& prm : store_) b.tensors.push_back({prm.name, prm.value.template cast<float>()});
  b.meta["diff_config"] = cfg_;
  return b;
}

template <typename T>
void Denoiser<T>::load_bundle(const nc::TensorBundle& b) {
  for (auto& prm : store_) {
    const auto& a = b.get(prm.name);
    if (a.shape() != prm.value.shape()) {
      throw Error(ErrorCode::CorruptCheckpoint, "tensor " + prm.name + " has shape " + nc::shape_string(a.shape()));
    }
    prm.value = a.template cast<T>();
  }
}

template class Denoiser<float>;
template class Denoiser<double>;
template Var<float> positional_encode(Var<float>, Var<float>);
template Var<double> positional_encode(Var<double>, Var<double>);

}  // namespace cadseq::diff
