#pragma once

#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "cadseq/numcore/checkpoint.hpp"
#include "cadseq/numcore/ops.hpp"
#include "cadseq/seqmodel/command.hpp"

namespace cadseq::ae {

struct AeConfig {
  std::size_t d_embed = 256;
  std::size_t enc_blocks = 4;
  std::size_t state_size = 16;
  std::size_t expand = 2;
  std::size_t conv_width = 4;
  std::size_t dt_rank = 0;  // 0 selects ceil(d_embed / 16)
  std::size_t latent_dim = 64;
  std::size_t d_dec = 256;
  std::size_t dec_blocks = 4;
  std::size_t heads = 8;
  std::size_t ffn = 1024;
  double dropout = 0.1;
  bool vanilla_gating = false;
  std::size_t positions = seq::kMaxCommands;
  double param_weight = 2.0;

  std::size_t inner() const { return expand * d_embed; }
  std::size_t rank() const { return dt_rank ? dt_rank : (d_embed + 15) / 16; }
  bool operator==(const AeConfig&) const = default;
};

void to_json(nlohmann::json& j, const AeConfig& c);
void from_json(const nlohmann::json& j, AeConfig& c);

inline constexpr std::size_t kParamClasses = 257;  // 256 levels plus "unused"
inline constexpr std::size_t kUnusedClass = 256;

template <typename T>
struct DecodedLogits {
  nc::Array<T> types;   // [L x 6]
  nc::Array<T> params;  // [L x 16 x 256]
};

// Loss targets derived from a sequence: type targets (-1 past the first EOS) and used (position, slot, level) triples.
struct LossTargets {
  std::vector<std::int32_t> types;
  std::vector<std::int32_t> rows;
  std::vector<std::int32_t> slots;
  std::vector<std::int32_t> levels;
};
LossTargets loss_targets(const seq::CadSequence& target, std::size_t positions);

// Sum of type cross-entropy plus weight times parameter cross-entropy, from full logits
// types [L x 6] and params [L x 16*256].
template <typename T>
nc::Var<T> ae_loss(nc::Var<T> type_logits, nc::Var<T> param_logits, const seq::CadSequence& target, T param_weight = T(2));

// Argmax decoding: truncate at the first EOS and clear slots the predicted type does not use.
template <typename T>
seq::CadSequence argmax_sequence(const nc::Array<T>& type_logits, const nc::Array<T>& param_logits);

struct LinearId {
  std::size_t w = 0;
  std::size_t b = 0;
  bool bias = true;
};

struct MambaIds {
  LinearId in_x, in_z, out;
  std::size_t conv_w = 0, conv_b = 0, x_proj = 0, dt_w = 0, dt_b = 0, a_log = 0;
};

struct DecoderBlockIds {
  std::size_t ln1_g = 0, ln1_b = 0, ln2_g = 0, ln2_b = 0;
  LinearId qkv, proj, ff1, ff2;
};

template <typename T>
class AutoEncoder {
 public:
  AutoEncoder(const AeConfig& cfg, std::uint64_t seed);

  const AeConfig& config() const { return cfg_; }
  nc::ParamStore<T>& params() { return store_; }
  const nc::ParamStore<T>& params() const { return store_; }

  // Eq. 1 embedding of the first `positions` commands: [L x d_E].
  nc::Var<T> embed(nc::Tape<T>& t, const seq::CadSequence& s) const;
  nc::Var<T> mamba_block(nc::Tape<T>& t, std::size_t block, nc::Var<T> x) const;
  nc::Var<T> encode_embedding(nc::Tape<T>& t, nc::Var<T> emb) const;
  // Latent block Z [L x latent_dim].
  nc::Var<T> encode(nc::Tape<T>& t, const seq::CadSequence& s) const;
  // Decoder features after the final norm: [L x d_dec].
  nc::Var<T> decode_hidden(nc::Tape<T>& t, nc::Var<T> z) const;
  nc::Var<T> type_logits(nc::Tape<T>& t, nc::Var<T> hidden) const;
  nc::Var<T> full_param_logits(nc::Tape<T>& t, nc::Var<T> hidden) const;
  // Logits only for the listed (position, slot) pairs: [P x 256].
  nc::Var<T> param_logits(nc::Tape<T>& t, nc::Var<T> hidden, const std::vector<std::int32_t>& rows,
                          const std::vector<std::int32_t>& slots) const;
  // Training loss of one sequence; only the used slots of the target are read out.
  nc::Var<T> loss(nc::Tape<T>& t, nc::Var<T> hidden, const seq::CadSequence& target) const;
  nc::Var<T> sequence_loss(nc::Tape<T>& t, const seq::CadSequence& s) const;

  nc::Array<T> encode_array(const seq::CadSequence& s) const;
  DecodedLogits<T> decode(const nc::Array<T>& z) const;
  // Greedy prediction, returned even when it does not validate.
  seq::CadSequence predict(const nc::Array<T>& z) const;
  // predict(encode(s)); throws InvalidPrediction if the result does not validate.
  seq::CadSequence reconstruct(const seq::CadSequence& s) const;

  nc::TensorBundle to_bundle() const;
  void load_bundle(const nc::TensorBundle& b);

 private:
  nc::Var<T> apply(nc::Tape<T>& t, const LinearId& l, nc::Var<T> x) const;
  nc::Var<T> p(nc::Tape<T>& t, std::size_t id) const { return t.param(store_[id]); }
  LinearId make_linear(const std::string& name, std::size_t in, std::size_t out, bool bias, Rng& rng);

  AeConfig cfg_;
  nc::ParamStore<T> store_;
  std::size_t w_cmd_ = 0, w_pb_ = 0, w_pa_ = 0, w_pos_ = 0;
  std::vector<MambaIds> enc_;
  std::vector<std::size_t> enc_ln_g_, enc_ln_b_;
  std::size_t enc_final_g_ = 0, enc_final_b_ = 0;
  LinearId compress_, up_;
  std::size_t queries_ = 0;
  std::vector<DecoderBlockIds> dec_;
  std::size_t dec_final_g_ = 0, dec_final_b_ = 0;
  LinearId type_head_, param_head_;
};

}  // namespace cadseq::ae
