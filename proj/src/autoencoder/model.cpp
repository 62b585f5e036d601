#include "cadseq/autoencoder/model.hpp"

#include <algorithm>
#include <cmath>

#include "cadseq/seqmodel/validate.hpp"

namespace cadseq::ae {

using nc::Array;
using nc::Tape;
using nc::Var;
using seq::CadSequence;
using seq::CommandType;
using seq::kNumLevels;
using seq::kNumParams;

void to_json(nlohmann::json& j, const AeConfig& c) {
  j = {{"d_embed", c.d_embed},       {"enc_blocks", c.enc_blocks}, {"state_size", c.state_size},
       {"expand", c.expand},         {"conv_width", c.conv_width}, {"dt_rank", c.dt_rank},
       {"latent_dim", c.latent_dim}, {"d_dec", c.d_dec},           {"dec_blocks", c.dec_blocks},
       {"heads", c.heads},           {"ffn", c.ffn},               {"dropout", c.dropout},
       {"vanilla_gating", c.vanilla_gating}, {"positions", c.positions}, {"param_weight", c.param_weight}};
}

void from_json(const nlohmann::json& j, AeConfig& c) {
  const AeConfig d;
  c.d_embed = j.value("d_embed", d.d_embed);
  c.enc_blocks = j.value("enc_blocks", d.enc_blocks);
  c.state_size = j.value("state_size", d.state_size);
  c.expand = j.value("expand", d.expand);
  c.conv_width = j.value("conv_width", d.conv_width);
  c.dt_rank = j.value("dt_rank", d.dt_rank);
  c.latent_dim = j.value("latent_dim", d.latent_dim);
  c.d_dec = j.value("d_dec", d.d_dec);
  c.dec_blocks = j.value("dec_blocks", d.dec_blocks);
  c.heads = j.value("heads", d.heads);
  c.ffn = j.value("ffn", d.ffn);
  c.dropout = j.value("dropout", d.dropout);
  c.vanilla_gating = j.value("vanilla_gating", d.vanilla_gating);
  c.positions = j.value("positions", d.positions);
  c.param_weight = j.value("param_weight", d.param_weight);
}

LossTargets loss_targets(const CadSequence& target, std::size_t positions) {
  LossTargets out;
  out.types.assign(positions, -1);
  const std::size_t n = std::min(positions, target.true_length);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cmd = target.commands[i];
    out.types[i] = static_cast<std::int32_t>(cmd.type);
    for (std::size_t j = 0; j < kNumParams; ++j) {
      if (!seq::uses_slot(cmd.type, j) || cmd.params[j] < 0) continue;
      out.rows.push_back(static_cast<std::int32_t>(i));
      out.slots.push_back(static_cast<std::int32_t>(j));
      out.levels.push_back(cmd.params[j]);
    }
  }
  return out;
}

template <typename T>
Var<T> ae_loss(Var<T> type_logits, Var<T> param_logits, const CadSequence& target, T param_weight) {
  const std::size_t len = type_logits.rows();
  if (param_logits.rows() != len || param_logits.cols() != kNumParams * kNumLevels || type_logits.cols() != 6) {
    throw Error(ErrorCode::ShapeMismatch, "ae_loss logits shapes");
  }
  const LossTargets tg = loss_targets(target, len);
  std::vector<std::int32_t> levels(len * kNumParams, -1);
  for (std::size_t k = 0; k < tg.rows.size(); ++k) {
    levels[static_cast<std::size_t>(tg.rows[k]) * kNumParams + static_cast<std::size_t>(tg.slots[k])] = tg.levels[k];
  }
  auto flat = nc::reshape(param_logits, {len * kNumParams, static_cast<std::size_t>(kNumLevels)});
  return nc::add(nc::cross_entropy(type_logits, tg.types), nc::cross_entropy(flat, levels, param_weight));
}

template <typename T>
CadSequence argmax_sequence(const Array<T>& type_logits, const Array<T>& param_logits) {
  std::array<seq::CadCommand, seq::kMaxCommands> raw{};
  const std::size_t len = std::min(type_logits.rows(), seq::kMaxCommands);
  for (std::size_t i = 0; i < len; ++i) {
    const T* tl = type_logits.data() + i * 6;
    const auto type = static_cast<CommandType>(std::max_element(tl, tl + 6) - tl);
    raw[i].type = type;
    if (type == CommandType::EOS) break;
    for (std::size_t j = 0; j < kNumParams; ++j) {
      if (!seq::uses_slot(type, j)) continue;
      const T* pl = param_logits.data() + (i * kNumParams + j) * kNumLevels;
      raw[i].params[j] = static_cast<std::int16_t>(std::max_element(pl, pl + kNumLevels) - pl);
    }
  }
  return CadSequence::from_raw(raw);
}

template <typename T>
Var<T> ln_affine(Tape<T>& t, Var<T> x, const nc::Parameter<T>& g, const nc::Parameter<T>& b) {
  return nc::add_row(nc::mul_row(nc::layer_norm(x), t.param(g)), t.param(b));
}

template <typename T>
LinearId AutoEncoder<T>::make_linear(const std::string& name, std::size_t in, std::size_t out, bool bias, Rng& rng) {
  LinearId l;
  l.w = store_.linear_weight(name + ".w", in, out, rng).index;
  l.bias = bias;
  if (bias) l.b = store_.zeros(name + ".b", {out}).index;
  return l;
}

template <typename T>
Var<T> AutoEncoder<T>::apply(Tape<T>& t, const LinearId& l, Var<T> x) const {
  auto y = nc::matmul(x, p(t, l.w));
  return l.bias ? nc::add_row(y, p(t, l.b)) : y;
}

template <typename T>
AutoEncoder<T>::AutoEncoder(const AeConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.positions == 0 || cfg.positions > seq::kMaxCommands || cfg.d_embed < 2 || cfg.heads == 0 ||
      cfg.d_dec % cfg.heads != 0 || cfg.state_size == 0 || cfg.conv_width == 0) {
    throw Error(ErrorCode::ConfigError, "invalid autoencoder configuration");
  }
  Rng rng(seed);
  const std::size_t d = cfg.d_embed, e = cfg.inner(), n = cfg.state_size, r = cfg.rank(), dd = cfg.d_dec;
  w_cmd_ = store_.normal("ae.embed.cmd", {6, d}, 1.0, rng).index;
  w_pb_ = store_.normal("ae.embed.param_onehot", {kParamClasses, d}, 1.0, rng).index;
  w_pa_ = store_.linear_weight("ae.embed.param_mix", kNumParams * d, d, rng).index;
  w_pos_ = store_.normal("ae.embed.pos", {seq::kMaxCommands, d}, 0.1, rng).index;
  for (std::size_t b = 0; b < cfg.enc_blocks; ++b) {
    const std::string pre = "ae.enc." + std::to_string(b);
    enc_ln_g_.push_back(store_.constant(pre + ".norm.g", {d}, T(1)).index);
    enc_ln_b_.push_back(store_.zeros(pre + ".norm.b", {d}).index);
    MambaIds m;
    m.in_x = make_linear(pre + ".in_x", d, e, true, rng);
    m.in_z = make_linear(pre + ".in_z", d, e, true, rng);
    m.conv_w = store_.uniform(pre + ".conv.w", {cfg.conv_width, e}, 1.0 / std::sqrt(double(cfg.conv_width)), rng).index;
    m.conv_b = store_.zeros(pre + ".conv.b", {e}).index;
    m.x_proj = store_.linear_weight(pre + ".x_proj", e, r + 2 * n, rng).index;
    m.dt_w = store_.linear_weight(pre + ".dt_proj.w", r, e, rng).index;
    Array<T> dtb({e});
    for (auto& v : dtb.values()) {
      const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
      v = static_cast<T>(dt + std::log(-std::expm1(-dt)));
    }
    m.dt_b = store_.add(pre + ".dt_bias", std::move(dtb)).index;
    Array<T> alog({e, n});
    for (std::size_t i = 0; i < e; ++i) {
      for (std::size_t j = 0; j < n; ++j) alog.at(i, j) = static_cast<T>(std::log(double(j + 1)));
    }
    m.a_log = store_.add(pre + ".a_log", std::move(alog)).index;
    m.out = make_linear(pre + ".out", e, d, true, rng);
    enc_.push_back(m);
  }
  enc_final_g_ = store_.constant("ae.enc.final_norm.g", {d}, T(1)).index;
  enc_final_b_ = store_.zeros("ae.enc.final_norm.b", {d}).index;
  compress_ = make_linear("ae.compress", d, cfg.latent_dim, true, rng);
  up_ = make_linear("ae.dec.latent_up", cfg.latent_dim, dd, true, rng);
  queries_ = store_.normal("ae.dec.queries", {seq::kMaxCommands, dd}, 0.5, rng).index;
  for (std::size_t b = 0; b < cfg.dec_blocks; ++b) {
    const std::string pre = "ae.dec." + std::to_string(b);
    DecoderBlockIds k;
    k.ln1_g = store_.constant(pre + ".norm1.g", {dd}, T(1)).index;
    k.ln1_b = store_.zeros(pre + ".norm1.b", {dd}).index;
    k.qkv = make_linear(pre + ".qkv", dd, 3 * dd, true, rng);
    k.proj = make_linear(pre + ".attn_out", dd, dd, true, rng);
    k.ln2_g = store_.constant(pre + ".norm2.g", {dd}, T(1)).index;
    k.ln2_b = store_.zeros(pre + ".norm2.b", {dd}).index;
    k.ff1 = make_linear(pre + ".ff1", dd, cfg.ffn, true, rng);
    k.ff2 = make_linear(pre + ".ff2", cfg.ffn, dd, true, rng);
    dec_.push_back(k);
  }
  dec_final_g_ = store_.constant("ae.dec.final_norm.g", {dd}, T(1)).index;
  dec_final_b_ = store_.zeros("ae.dec.final_norm.b", {dd}).index;
  type_head_ = make_linear("ae.head.type", dd, 6, true, rng);
  param_head_ = make_linear("ae.head.param", dd, kNumParams * kNumLevels, true, rng);
}

template <typename T>
Var<T> AutoEncoder<T>::embed(Tape<T>& t, const CadSequence& s) const {
  const std::size_t len = cfg_.positions, d = cfg_.d_embed;
  std::vector<std::int32_t> types(len), pa_rows(len, 0);
  std::vector<std::int32_t> onehot(kNumParams, static_cast<std::int32_t>(kUnusedClass));
  std::int32_t distinct = 1;
  for (std::size_t i = 0; i < len; ++i) {
    const auto& cmd = s.commands[i];
    types[i] = static_cast<std::int32_t>(cmd.type);
    const bool any = std::any_of(cmd.params.begin(), cmd.params.end(), [](std::int16_t v) { return v >= 0; });
    if (!any) continue;
    pa_rows[i] = distinct++;
    for (std::size_t j = 0; j < kNumParams; ++j) {
      onehot.push_back(cmd.params[j] < 0 ? static_cast<std::int32_t>(kUnusedClass) : cmd.params[j]);
    }
  }
  auto pb = nc::gather_rows(p(t, w_pb_), onehot);
  auto mixed = nc::matmul(nc::reshape(pb, {static_cast<std::size_t>(distinct), kNumParams * d}), p(t, w_pa_));
  auto e = nc::add(nc::gather_rows(p(t, w_cmd_), types), nc::gather_rows(mixed, pa_rows));
  Var<T> pos = p(t, w_pos_);
  if (len != seq::kMaxCommands) {
    std::vector<std::int32_t> first(len);
    for (std::size_t i = 0; i < len; ++i) first[i] = static_cast<std::int32_t>(i);
    pos = nc::gather_rows(pos, first);
  }
  return nc::add(e, pos);
}

template <typename T>
Var<T> AutoEncoder<T>::mamba_block(Tape<T>& t, std::size_t block, Var<T> x) const {
  const MambaIds& m = enc_.at(block);
  const std::size_t n = cfg_.state_size, r = cfg_.rank();
  auto xb = apply(t, m.in_x, x);
  auto z = apply(t, m.in_z, x);
  auto xc = nc::silu(nc::causal_conv1d(xb, p(t, m.conv_w), p(t, m.conv_b)));
  auto proj = nc::matmul(xc, p(t, m.x_proj));
  auto dt_low = nc::slice_cols(proj, 0, r);
  auto B = nc::slice_cols(proj, r, n);
  auto C = nc::slice_cols(proj, r + n, n);
  auto delta = nc::softplus(nc::add_row(nc::matmul(dt_low, p(t, m.dt_w)), p(t, m.dt_b)));
  auto A = nc::scale(nc::exp(p(t, m.a_log)), T(-1));
  auto h = nc::selective_scan(xc, delta, A, B, C);
  auto gate = nc::sigmoid(z);
  auto forget = nc::affine(gate, T(-1), T(1));
  auto fused = nc::add(nc::mul(forget, xc), cfg_.vanilla_gating ? nc::mul(gate, h) : h);
  return apply(t, m.out, fused);
}

template <typename T>
Var<T> AutoEncoder<T>::encode_embedding(Tape<T>& t, Var<T> emb) const {
  Var<T> h = emb;
  for (std::size_t b = 0; b < enc_.size(); ++b) {
    h = nc::add(h, mamba_block(t, b, ln_affine(t, h, store_[enc_ln_g_[b]], store_[enc_ln_b_[b]])));
  }
  h = ln_affine(t, h, store_[enc_final_g_], store_[enc_final_b_]);
  return apply(t, compress_, h);
}

template <typename T>
Var<T> AutoEncoder<T>::encode(Tape<T>& t, const CadSequence& s) const {
  return encode_embedding(t, embed(t, s));
}

template <typename T>
Var<T> AutoEncoder<T>::decode_hidden(Tape<T>& t, Var<T> z) const {
  const std::size_t len = cfg_.positions, dd = cfg_.d_dec;
  if (z.rows() != len || z.cols() != cfg_.latent_dim) {
    throw Error(ErrorCode::ShapeMismatch, "latent block shape " + nc::shape_string(z.shape()));
  }
  Var<T> q = p(t, queries_);
  if (len != seq::kMaxCommands) {
    std::vector<std::int32_t> first(len);
    for (std::size_t i = 0; i < len; ++i) first[i] = static_cast<std::int32_t>(i);
    q = nc::gather_rows(q, first);
  }
  Var<T> h = nc::add(apply(t, up_, z), q);
  for (const auto& k : dec_) {
    auto a = ln_affine(t, h, store_[k.ln1_g], store_[k.ln1_b]);
    auto qkv = apply(t, k.qkv, a);
    auto att = nc::attention(nc::slice_cols(qkv, 0, dd), nc::slice_cols(qkv, dd, dd), nc::slice_cols(qkv, 2 * dd, dd),
                             cfg_.heads);
    h = nc::add(h, nc::dropout(apply(t, k.proj, att), cfg_.dropout));
    auto f = ln_affine(t, h, store_[k.ln2_g], store_[k.ln2_b]);
    auto ff = apply(t, k.ff2, nc::dropout(nc::silu(apply(t, k.ff1, f)), cfg_.dropout));
    h = nc::add(h, nc::dropout(ff, cfg_.dropout));
  }
  return ln_affine(t, h, store_[dec_final_g_], store_[dec_final_b_]);
}

template <typename T>
Var<T> AutoEncoder<T>::type_logits(Tape<T>& t, Var<T> hidden) const {
  return apply(t, type_head_, hidden);
}

template <typename T>
Var<T> AutoEncoder<T>::full_param_logits(Tape<T>& t, Var<T> hidden) const {
  return apply(t, param_head_, hidden);
}

template <typename T>
Var<T> AutoEncoder<T>::param_logits(Tape<T>& t, Var<T> hidden, const std::vector<std::int32_t>& rows,
                                    const std::vector<std::int32_t>& slots) const {
  return nc::select_linear(hidden, p(t, param_head_.w), p(t, param_head_.b), rows, slots, kNumLevels);
}

template <typename T>
Var<T> AutoEncoder<T>::loss(Tape<T>& t, Var<T> hidden, const CadSequence& target) const {
  const LossTargets tg = loss_targets(target, cfg_.positions);
  auto l = nc::cross_entropy(type_logits(t, hidden), tg.types);
  if (tg.rows.empty()) return l;
  auto pl = param_logits(t, hidden, tg.rows, tg.slots);
  return nc::add(l, nc::cross_entropy(pl, tg.levels, static_cast<T>(cfg_.param_weight)));
}

template <typename T>
Var<T> AutoEncoder<T>::sequence_loss(Tape<T>& t, const CadSequence& s) const {
  return loss(t, decode_hidden(t, encode(t, s)), s);
}

template <typename T>
Array<T> AutoEncoder<T>::encode_array(const CadSequence& s) const {
  Tape<T> t(false, false);
  return encode(t, s).value();
}

template <typename T>
DecodedLogits<T> AutoEncoder<T>::decode(const Array<T>& z) const {
  Tape<T> t(false, false);
  auto h = decode_hidden(t, t.constant(z));
  DecodedLogits<T> out;
  out.types = type_logits(t, h).value();
  out.params = full_param_logits(t, h).value().reshaped({cfg_.positions, kNumParams, static_cast<std::size_t>(kNumLevels)});
  return out;
}

template <typename T>
CadSequence AutoEncoder<T>::predict(const Array<T>& z) const {
  const auto logits = decode(z);
  return argmax_sequence(logits.types, logits.params);
}

template <typename T>
CadSequence AutoEncoder<T>::reconstruct(const CadSequence& s) const {
  CadSequence out = predict(encode_array(s));
  const auto report = seq::validate_sequence(out);
  if (!report.ok) {
    throw Error(ErrorCode::InvalidPrediction, "prediction violates " + report.first_violation->rule + " at position " +
                                                  std::to_string(report.first_violation->position));
  }
  return out;
}

template <typename T>
nc::TensorBundle AutoEncoder<T>::to_bundle() const {
  nc::TensorBundle b;
  for (const auto& prm : store_) b.tensors.push_back({prm.name, prm.value.template cast<float>()});
  b.meta["ae_config"] = cfg_;
  return b;
}

template <typename T>
void AutoEncoder<T>::load_bundle(const nc::TensorBundle& b) {
  for (auto& prm : store_) {
    const auto& a = b.get(prm.name);
    if (a.shape() != prm.value.shape()) {
      throw Error(ErrorCode::CorruptCheckpoint, "tensor " + prm.name + " has shape " + nc::shape_string(a.shape()));
    }
    prm.value = a.template cast<T>();
  }
}

template class AutoEncoder<float>;
template class AutoEncoder<double>;
template Var<float> ae_loss(Var<float>, Var<float>, const CadSequence&, float);
template Var<double> ae_loss(Var<double>, Var<double>, const CadSequence&, double);
template CadSequence argmax_sequence(const Array<float>&, const Array<float>&);
template CadSequence argmax_sequence(const Array<double>&, const Array<double>&);

}  // namespace cadseq::ae
