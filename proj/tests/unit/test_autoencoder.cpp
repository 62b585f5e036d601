#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "cadseq/autoencoder/model.hpp"
#include "cadseq/autoencoder/ssm.hpp"
#include "cadseq/numcore/optim.hpp"
#include "cadseq/seqmodel/synth.hpp"
#include "cadseq/seqmodel/validate.hpp"

using namespace cadseq;
using namespace cadseq::ae;
using nc::Array;
using nc::Tape;
using nc::Var;
using seq::CadCommand;
using seq::CadSequence;

namespace {

AeConfig tiny_config() {
  AeConfig c;
  c.d_embed = 8;
  c.enc_blocks = 2;
  c.state_size = 4;
  c.latent_dim = 4;
  c.d_dec = 8;
  c.dec_blocks = 1;
  c.heads = 2;
  c.ffn = 16;
  c.dropout = 0.0;
  c.positions = 2;
  return c;
}

AeConfig small_config() {
  AeConfig c;
  c.d_embed = 16;
  c.enc_blocks = 2;
  c.state_size = 4;
  c.latent_dim = 8;
  c.d_dec = 16;
  c.dec_blocks = 1;
  c.heads = 2;
  c.ffn = 32;
  c.dropout = 0.0;
  return c;
}

Array<double> random_array(nc::Shape s, Rng& rng, double lo = -1, double hi = 1) {
  Array<double> a(std::move(s));
  for (auto& v : a.values()) v = rng.uniform(lo, hi);
  return a;
}

CadSequence small_sequence() {
  return CadSequence::from_content({CadCommand::sol(), CadCommand::circle(128, 128, 64),
                                    CadCommand::extrude(0, 0, 0, 128, 128, 128, 200, 180, 128, seq::BooleanOp::NewBody,
                                                        seq::ExtentType::Symmetric)});
}

}  // namespace

TEST_CASE("embedding shape, linearity and locality") {
  AutoEncoder<float> model(AeConfig{}, 1);
  const CadSequence s = seq::synthesize_sequence(3, 90);
  Tape<float> t(false, false);
  auto e = model.embed(t, s).value();
  CHECK(e.shape() == nc::Shape{256, 256});

  CadSequence s2 = s;
  const std::size_t k = 5;
  REQUIRE(s2.commands[k].type == seq::CommandType::Line);
  s2.commands[k].params[0] = static_cast<std::int16_t>((s2.commands[k].params[0] + 7) % 256);
  auto e2 = model.embed(t, s2).value();
  for (std::size_t i = 0; i < 256; ++i) {
    bool same = true;
    for (std::size_t j = 0; j < 256; ++j) same = same && e.at(i, j) == e2.at(i, j);
    CHECK(same == (i != k));
  }

  AutoEncoder<float> zero(small_config(), 2);
  for (auto& prm : zero.params()) prm.value.fill(0.0f);
  auto ez = zero.embed(t, s).value();
  for (float v : ez.values()) CHECK(v == 0.0f);
}

TEST_CASE("discretization examples") {
  Array<double> A({1, 1}, -1.0), B({1, 1}, 3.0);
  auto d = discretize_ssm(Array<double>({1, 1}, std::log(2.0)), A, B);
  CHECK(d.a_bar[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(d.b_bar[0] == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-15));
  auto small = discretize_ssm(Array<double>({1, 1}, 1e-12), A, B);
  CHECK(small.a_bar[0] == doctest::Approx(1.0).epsilon(1e-11));
  CHECK(std::abs(small.b_bar[0]) < 1e-11);
  Rng rng(3);
  auto dd = discretize_ssm(random_array({5, 3}, rng, 1e-3, 3), random_array({3, 4}, rng, -5, -1e-3), random_array({5, 4}, rng));
  for (double v : dd.a_bar.values()) CHECK((v > 0.0 && v < 1.0));
}

TEST_CASE("scan examples") {
  const std::size_t T = 6;
  Array<double> x({T, 1});
  for (std::size_t t = 0; t < T; ++t) x[t] = double(t * t) - 3.0;
  DiscreteSsm<double> d{Array<double>({T, 1, 1}, 1.0), Array<double>({T, 1, 1}, 1.0)};
  auto y = ssm_scan(x, d, Array<double>({T, 1}, 1.0));
  double prefix = 0;
  for (std::size_t t = 0; t < T; ++t) {
    prefix += x[t];
    CHECK(y[t] == prefix);
  }
  Rng rng(4);
  DiscreteSsm<double> r{random_array({T, 3, 2}, rng, 0, 1), random_array({T, 3, 2}, rng)};
  const auto C = random_array({T, 2}, rng);
  auto y0 = ssm_scan(Array<double>({T, 3}), r, C);
  for (double v : y0.values()) CHECK(v == 0.0);
  auto xs = random_array({T, 3}, rng);
  auto ya = ssm_scan(xs, r, C);
  xs.at(4, 1) += 1.0;
  auto yb = ssm_scan(xs, r, C);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t i = 0; i < 3; ++i) CHECK(ya.at(t, i) == yb.at(t, i));
  }
}

TEST_CASE("tape scan agrees with the array scan") {
  Rng rng(5);
  const auto x = random_array({9, 3}, rng), delta = random_array({9, 3}, rng, 0.01, 1.0);
  const auto A = random_array({3, 4}, rng, -3, -0.1), B = random_array({9, 4}, rng), C = random_array({9, 4}, rng);
  Tape<double> t(false);
  auto y = nc::selective_scan(t.constant(x), t.constant(delta), t.constant(A), t.constant(B), t.constant(C)).value();
  auto ref = ssm_scan(x, discretize_ssm(delta, A, B), C);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-14));
}

TEST_CASE("gate behaviour of the Mamba+ block") {
  AeConfig c = small_config();
  AutoEncoder<double> model(c, 6);
  Rng rng(7);
  const auto x = random_array({256, c.d_embed}, rng);
  auto* wz = model.params().find("ae.enc.0.in_z.w");
  auto* bz = model.params().find("ae.enc.0.in_z.b");
  REQUIRE(wz);
  wz->value.fill(0.0);
  auto run = [&](double bias) {
    bz->value.fill(bias);
    Tape<double> t(false, false);
    return model.mamba_block(t, 0, t.constant(x)).value();
  };
  const auto half = run(0.0);
  const auto open = run(1e3);
  const auto shut = run(-1e3);
  for (std::size_t i = 0; i < half.size(); ++i) CHECK(half[i] == doctest::Approx(0.5 * (open[i] + shut[i])).epsilon(1e-12));

  Tape<double> t(false);
  auto g = nc::sigmoid(t.constant(random_array({50, 20}, rng, -20, 20)));
  auto f = nc::affine(g, -1.0, 1.0);
  for (std::size_t i = 0; i < 1000; ++i) CHECK(g.value()[i] + f.value()[i] == 1.0);
}

TEST_CASE("Mamba+ block gradients") {
  AeConfig c = tiny_config();
  c.positions = 6;
  for (bool vanilla : {false, true}) {
    c.vanilla_gating = vanilla;
    AutoEncoder<double> model(c, 8);
    Rng rng(9);
    const auto x = random_array({6, c.d_embed}, rng);
    const auto w = random_array({6, c.d_embed}, rng);
    auto f = [&](Tape<double>& t, Var<double> v) { return nc::sum(nc::mul(model.mamba_block(t, 0, v), t.constant(w))); };
    CHECK(nc::gradcheck(f, x).max_rel_err < 1e-6);
    auto fp = [&](Tape<double>& t) { return nc::sum(nc::mul(model.mamba_block(t, 1, t.constant(x)), t.constant(w))); };
    CHECK(nc::gradcheck_params(model.params(), fp).max_rel_err < 1e-6);
  }
}

TEST_CASE("encoder is causal before and after compression") {
  AeConfig c = small_config();
  c.positions = 24;
  AutoEncoder<double> model(c, 10);
  Rng rng(11);
  auto emb = random_array({24, c.d_embed}, rng);
  Tape<double> t(false, false);
  auto z0 = model.encode_embedding(t, t.constant(emb)).value();
  for (std::size_t j = 0; j < c.d_embed; ++j) emb.at(15, j) += rng.uniform(-2, 2);
  auto z1 = model.encode_embedding(t, t.constant(emb)).value();
  for (std::size_t i = 0; i < 24; ++i) {
    bool same = true;
    for (std::size_t j = 0; j < c.latent_dim; ++j) same = same && z0.at(i, j) == z1.at(i, j);
    CAPTURE(i);
    CHECK(same == (i < 15));
  }
}

TEST_CASE("encode and decode shapes and conditioning") {
  AeConfig c = small_config();
  AutoEncoder<float> model(c, 12);
  const CadSequence s = seq::synthesize_sequence(5, 70);
  auto z = model.encode_array(s);
  CHECK(z.shape() == nc::Shape{256, c.latent_dim});
  CHECK(model.encode_array(s) == z);
  auto out = model.decode(z);
  CHECK(out.types.shape() == nc::Shape{256, 6});
  CHECK(out.params.shape() == nc::Shape{256, 16, 256});

  auto zero = model.decode(Array<float>({256, c.latent_dim}));
  auto zero2 = model.decode(Array<float>({256, c.latent_dim}));
  CHECK(zero.types == zero2.types);

  Array<float> perm = z;
  for (std::size_t j = 0; j < c.latent_dim; ++j) std::swap(perm.at(0, j), perm.at(1, j));
  CHECK(!(model.decode(perm).types == out.types));
}

TEST_CASE("loss examples and masking") {
  const CadSequence s = small_sequence();
  SUBCASE("correct confident logits drive the loss to zero") {
    Array<double> tl({256, 6}), pl({256, 16 * 256});
    for (std::size_t i = 0; i < 256; ++i) {
      const auto& cmd = s.commands[i];
      tl.at(i, static_cast<std::size_t>(cmd.type)) = 60.0;
      for (std::size_t j = 0; j < 16; ++j) {
        if (cmd.params[j] >= 0) pl.at(i, j * 256 + static_cast<std::size_t>(cmd.params[j])) = 60.0;
      }
    }
    Tape<double> t(false);
    CHECK(ae_loss(t.constant(tl), t.constant(pl), s).value()[0] < 1e-20);
  }
  SUBCASE("uniform logits on a bare EOS give ln 6") {
    CadSequence eos = CadSequence::from_content({});
    Tape<double> t(false);
    auto l = ae_loss(t.constant(Array<double>({256, 6})), t.constant(Array<double>({256, 16 * 256})), eos).value()[0];
    CHECK(l == doctest::Approx(std::log(6.0)).epsilon(1e-14));
  }
  SUBCASE("padded positions are ignored") {
    Rng rng(13);
    const auto tl = random_array({256, 6}, rng, -2, 2), pl = random_array({256, 16 * 256}, rng, -2, 2);
    CadSequence noisy = s;
    noisy.commands[10] = CadCommand::circle(1, 2, 3);
    noisy.commands[200] = CadCommand::line(5, 6);
    Tape<double> t;
    auto vt = t.variable(tl);
    auto vp = t.variable(pl);
    auto a = ae_loss(vt, vp, s);
    auto b = ae_loss(t.constant(tl), t.constant(pl), noisy);
    CHECK(a.value()[0] == b.value()[0]);
    t.backward(a);
    for (std::size_t i = s.true_length; i < 256; ++i) {
      for (std::size_t j = 0; j < 6; ++j) CHECK(t.grad(vt.id).at(i, j) == 0.0);
      for (std::size_t j = 0; j < 16 * 256; j += 97) CHECK(t.grad(vp.id).at(i, j) == 0.0);
    }
  }
}

TEST_CASE("the selected read-out loss equals the full-logit loss") {
  AeConfig c = small_config();
  AutoEncoder<double> model(c, 14);
  const CadSequence s = seq::synthesize_sequence(9, 64);
  Tape<double> t(false, false);
  auto h = model.decode_hidden(t, model.encode(t, s));
  const double fast = model.loss(t, h, s).value()[0];
  const double full = ae_loss(model.type_logits(t, h), model.full_param_logits(t, h), s).value()[0];
  CHECK(fast == doctest::Approx(full).epsilon(1e-12));
}

TEST_CASE("end to end gradient on a tiny configuration") {
  AutoEncoder<double> model(tiny_config(), 15);
  Rng rng(16);
  for (auto& prm : model.params()) {
    if (prm.name.find(".norm") != std::string::npos) {
      for (auto& v : prm.value.values()) v += rng.uniform(-0.3, 0.3);
    }
  }
  const CadSequence s = small_sequence();
  auto f = [&](Tape<double>& t) { return model.sequence_loss(t, s); };
  const auto r = nc::gradcheck_params(model.params(), f, 1e-5, 24, 17);
  CHECK(r.max_rel_err <= 1e-4);
}

TEST_CASE("reconstruct on untrained weights reports instead of crashing") {
  AutoEncoder<float> model(small_config(), 18);
  const CadSequence s = seq::synthesize_sequence(2, 64);
  try {
    auto r = model.reconstruct(s);
    CHECK(seq::validate_sequence(r).ok);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidPrediction);
  }
  const auto z = model.encode_array(s);
  CHECK(model.predict(z) == model.predict(z));
}

TEST_CASE("argmax decoding truncates and re-imposes applicability") {
  Array<float> tl({256, 6}, 0.0f), pl({256, 16 * 256}, 0.0f);
  auto set_type = [&](std::size_t i, seq::CommandType ty) { tl.at(i, static_cast<std::size_t>(ty)) = 1.0f; };
  set_type(0, seq::CommandType::SOL);
  set_type(1, seq::CommandType::Circle);
  set_type(2, seq::CommandType::EOS);
  set_type(3, seq::CommandType::Line);
  for (std::size_t j = 0; j < 16; ++j) pl.at(1, j * 256 + 40 + j) = 1.0f;
  auto s = argmax_sequence(tl, pl);
  CHECK(s.true_length == 3);
  CHECK(s.commands[1] == CadCommand::circle(40, 41, 44));
  CHECK(s.commands[3] == CadCommand::eos());
}

TEST_CASE("weights round trip through a tensor bundle") {
  AutoEncoder<float> a(small_config(), 19);
  AutoEncoder<float> b(small_config(), 20);
  const auto dir = std::filesystem::temp_directory_path() / "cadseq_test_ae";
  nc::save_bundle(dir, a.to_bundle());
  auto bundle = nc::load_bundle(dir);
  CHECK(bundle.meta["ae_config"].get<AeConfig>() == small_config());
  b.load_bundle(bundle);
  for (std::size_t i = 0; i < a.params().size(); ++i) CHECK(a.params()[i].value == b.params()[i].value);
  for (const auto& prm : a.params()) CHECK(prm.name.rfind("ae.", 0) == 0);
  std::filesystem::remove_all(dir);
}
