#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include "cadseq/diffusion/denoiser.hpp"
#include "cadseq/diffusion/sampler.hpp"
#include "cadseq/diffusion/schedule.hpp"
#include "cadseq/error.hpp"
#include "cadseq/numcore/optim.hpp"
#include "cadseq/pipeline/diff_trainer.hpp"

using namespace cadseq;
using namespace cadseq::diff;
using nc::Array;
using nc::Tape;
using nc::Var;

namespace {

template <typename T>
Array<T> randn(nc::Shape s, Rng& rng, double sd = 1.0) {
  Array<T> a(std::move(s));
  for (auto& v : a.values()) v = static_cast<T>(sd * rng.normal());
  return a;
}

DiffConfig tiny_config() {
  DiffConfig c;
  c.latent_dim = 4;
  c.positions = 10;
  c.embed = 8;
  c.layers = 2;
  c.heads = 2;
  c.ffn = 12;
  c.fuse_hidden = 6;
  c.local_window = 2;
  c.mid_window = 4;
  c.dropout = 0.0;
  c.steps = 20;
  return c;
}

template <typename T>
void randomize(nc::ParamStore<T>& store, const std::string& name, Rng& rng, double sd) {
  auto* p = store.find(name);
  REQUIRE(p != nullptr);
  for (auto& v : p->value.values()) v = static_cast<T>(sd * rng.normal());
}

}  // namespace

TEST_CASE("linear schedule values") {
  const auto s = build_schedule(1000);
  CHECK(s.beta_at(1000) == 0.02);
  CHECK(s.beta_at(1) == 0.0001 + 0.0199 / 1000.0);
  CHECK(s.alpha_bar_at(1) == 1.0 - s.beta_at(1));
  for (std::size_t t = 1; t <= s.steps; ++t) {
    CHECK(s.beta_at(t) > 0.0);
    CHECK(s.beta_at(t) < 1.0);
    if (t > 1) CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
  }
  CHECK(s.alpha_bar_at(1000) < s.alpha_bar_at(1));
  CHECK_THROWS_AS(build_schedule(0), Error);
}

TEST_CASE("forward diffusion limits and step checks") {
  Rng rng(1);
  const auto z0 = randn<double>({16, 4}, rng), eps = randn<double>({16, 4}, rng);
  for (auto mode : {DiffusionMode::Standard, DiffusionMode::PaperLiteral}) {
    const auto s = build_schedule(1000, mode);
    const auto near = forward_diffuse(z0, 1, eps, s);
    const auto far = forward_diffuse(z0, 1000, eps, s);
    for (std::size_t i = 0; i < z0.size(); ++i) {
      CHECK(std::abs(near[i] - z0[i]) < 0.05);
      CHECK(std::abs(far[i] - eps[i]) < 0.02);
    }
    CHECK_THROWS_AS(forward_diffuse(z0, 0, eps, s), Error);
    CHECK_THROWS_AS(forward_diffuse(z0, 1001, eps, s), Error);
  }
  const auto lit = build_schedule(10, DiffusionMode::PaperLiteral);
  const auto zt = forward_diffuse(z0, 5, eps, lit);
  CHECK(zt[3] == doctest::Approx(lit.alpha_bar_at(5) * z0[3] + std::sqrt(1 - lit.alpha_bar_at(5)) * eps[3]));
}

TEST_CASE("standard forward diffusion keeps unit variance") {
  const auto s = build_schedule(1000);
  Rng rng(2);
  for (std::size_t t : {std::size_t(1), std::size_t(500), std::size_t(1000)}) {
    const auto z0 = randn<double>({10000, 1}, rng), eps = randn<double>({10000, 1}, rng);
    const auto zt = forward_diffuse(z0, t, eps, s);
    double m = 0, m2 = 0;
    for (double v : zt.values()) m += v, m2 += v * v;
    m /= 1e4;
    const double var = m2 / 1e4 - m * m;
    CHECK(std::abs(var - 1.0) < 0.05);
    const double ab = s.alpha_bar_at(t);
    CHECK(std::sqrt(ab) * std::sqrt(ab) + (1 - ab) == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("window masks match their set definitions") {
  const auto l = window_mask<double>(256, 64), m = window_mask<double>(256, 128), g = window_mask<double>(256, 0);
  CHECK(l.at(0, 64) == 0.0);
  CHECK(std::isinf(l.at(0, 65)));
  const double ninf = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < 256; ++i) {
    for (std::size_t j = 0; j < 256; ++j) {
      const std::size_t d = i > j ? i - j : j - i;
      CHECK_EQ(l.at(i, j), d <= 64 ? 0.0 : ninf);
      CHECK_EQ(m.at(i, j), d <= 128 ? 0.0 : ninf);
      CHECK_EQ(g.at(i, j), 0.0);
      if (l.at(i, j) == 0.0) CHECK_EQ(m.at(i, j), 0.0);
    }
  }
}

TEST_CASE("positional encoding examples") {
  Rng rng(3);
  Tape<double> t(false, false);
  auto x = t.constant(randn<double>({5, 6}, rng));
  const auto same = positional_encode(x, t.constant(Array<double>({1}, 0.0))).value();
  CHECK(same == x.value());
  auto zero = t.constant(Array<double>({5, 6}));
  const auto pe = positional_encode(zero, t.constant(Array<double>({1}, 2.5))).value();
  for (std::size_t j = 0; j < 6; ++j) CHECK(pe.at(0, j) == (j % 2 ? 2.5 : 0.0));
  const auto table = sinusoid_table<double>(256, 512);
  for (double v : table.values()) CHECK(std::abs(v) <= 1.0);
}

TEST_CASE("fusion with a zero gate halves the concatenation") {
  Denoiser<double> d(tiny_config(), 4);
  auto& store = d.params();
  store.find("diff.layer.0.fuse.gate.w")->value.fill(0.0);
  store.find("diff.layer.0.fuse.gate.b")->value.fill(0.0);
  Rng rng(5);
  Tape<double> t(false, false);
  auto hl = t.constant(randn<double>({10, 8}, rng)), hm = t.constant(randn<double>({10, 8}, rng)),
       hg = t.constant(randn<double>({10, 8}, rng));
  const auto h = d.fuse_multiscale(t, 0, hl, hm, hg).value();
  auto half = nc::scale(nc::concat_cols<double>({hl, hm, hg}), 0.5);
  auto f = nc::matmul(half, t.param(*store.find("diff.layer.0.fuse.out.w")));
  auto mlp = nc::linear(nc::silu(nc::linear(f, t.param(*store.find("diff.layer.0.fuse.mlp1.w")),
                                         t.param(*store.find("diff.layer.0.fuse.mlp1.b")))),
                        t.param(*store.find("diff.layer.0.fuse.mlp2.w")), t.param(*store.find("diff.layer.0.fuse.mlp2.b")));
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == doctest::Approx(mlp.value()[i]).epsilon(1e-12));

  randomize(store, "diff.layer.0.fuse.mlp1.b", rng, 1.0);
  auto zero = t.constant(Array<double>({10, 8}));
  const auto z = d.fuse_multiscale(t, 0, zero, zero, zero).value();
  for (std::size_t i = 1; i < 10; ++i) {
    for (std::size_t j = 0; j < 8; ++j) CHECK(z.at(i, j) == z.at(0, j));
  }
  CHECK_THROWS_AS(d.fuse_multiscale(t, 0, hl, hm, t.constant(Array<double>({10, 4}))), Error);
}

TEST_CASE("fusion gates stay strictly inside (0, 1)") {
  Rng rng(6);
  Tape<double> t(false, false);
  auto g = nc::sigmoid(t.constant(randn<double>({10, 24}, rng, 5.0))).value();
  for (double v : g.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("zeroed modulation makes every layer the identity") {
  Denoiser<double> d(tiny_config(), 7);
  Rng rng(8);
  const auto z = randn<double>({10, 4}, rng);
  Tape<double> t(false, false);
  auto tau = d.time_embedding(t, 3);
  const auto mods = d.modulation(t, tau);
  REQUIRE(mods.size() == 2);
  auto x = d.input(t, t.constant(z), tau);
  for (std::size_t l = 0; l < 2; ++l) CHECK(d.layer(t, l, x, mods[l]).value() == x.value());
  CHECK(d.predict_array(z, 3) == d.output(t, x).value());
  CHECK(d.params().find("diff.time.modulation.b")->value.size() == 6 * 2 * 8);
}

TEST_CASE("unit residual gains give a plain pre-norm block") {
  Denoiser<double> d(tiny_config(), 9);
  auto& bias = d.params().find("diff.time.modulation.b")->value;
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t j = 0; j < 8; ++j) {
      bias[(6 * l + 2) * 8 + j] = 1.0;
      bias[(6 * l + 5) * 8 + j] = 1.0;
    }
  }
  Rng rng(10);
  Tape<double> t(false, false);
  auto x = t.constant(randn<double>({10, 8}, rng));
  const auto mods = d.modulation(t, d.time_embedding(t, 1));
  const auto y = d.layer(t, 0, x, mods[0]).value();
  auto& s = d.params();
  auto xa = nc::add(x, d.multiscale_attention(t, 0, nc::layer_norm(x)));
  auto h = nc::silu(nc::linear(nc::layer_norm(xa), t.param(*s.find("diff.layer.0.ff1.w")), t.param(*s.find("diff.layer.0.ff1.b"))));
  auto ref = nc::add(xa, nc::linear(h, t.param(*s.find("diff.layer.0.ff2.w")), t.param(*s.find("diff.layer.0.ff2.b"))));
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref.value()[i]).epsilon(1e-12));
}

TEST_CASE("distinct steps give distinct modulation vectors") {
  Denoiser<double> d(tiny_config(), 11);
  Rng rng(12);
  randomize(d.params(), "diff.time.modulation.w", rng, 0.5);
  std::set<std::vector<double>> seen;
  for (std::size_t step = 1; step <= 20; ++step) {
    Tape<double> t(false, false);
    const auto m = d.modulation(t, d.time_embedding(t, step));
    std::vector<double> all;
    for (const auto& v : m) {
      for (auto part : {v.xi1, v.psi1, v.omega1, v.xi2, v.psi2, v.omega2}) {
        all.insert(all.end(), part.value().values().begin(), part.value().values().end());
      }
    }
    seen.insert(all);
  }
  CHECK(seen.size() == 20);
  Tape<double> t(false, false);
  CHECK_THROWS_AS(d.time_embedding(t, 0), Error);
  CHECK_THROWS_AS(d.time_embedding(t, 21), Error);
}

TEST_CASE("local branch output ignores positions beyond its window") {
  auto cfg = tiny_config();
  cfg.positions = 16;
  cfg.local_window = 3;
  Denoiser<double> d(cfg, 13);
  Rng rng(14);
  randomize(d.params(), "diff.time.modulation.w", rng, 0.5);
  randomize(d.params(), "diff.time.modulation.b", rng, 0.5);
  const auto x0 = randn<double>({16, 8}, rng);
  auto run = [&](const Array<double>& x) {
    Tape<double> t(false, false);
    const auto mods = d.modulation(t, d.time_embedding(t, 4));
    return d.layer(t, 0, t.constant(x), mods[0], {true, false, false}).value();
  };
  const auto base = run(x0);
  for (std::size_t j : {std::size_t(0), std::size_t(9), std::size_t(15)}) {
    auto x1 = x0;
    for (std::size_t c = 0; c < 8; ++c) x1.at(j, c) += rng.uniform(-2, 2);
    const auto y = run(x1);
    for (std::size_t i = 0; i < 16; ++i) {
      const std::size_t dist = i > j ? i - j : j - i;
      if (dist <= 3) continue;
      for (std::size_t c = 0; c < 8; ++c) CHECK(y.at(i, c) == base.at(i, c));
    }
  }
}

TEST_CASE("one multi-scale layer passes gradcheck") {
  Denoiser<double> d(tiny_config(), 15);
  Rng rng(16);
  randomize(d.params(), "diff.time.modulation.w", rng, 0.3);
  randomize(d.params(), "diff.time.modulation.b", rng, 0.3);
  const auto x = randn<double>({10, 8}, rng);
  Array<double> w({10, 8});
  for (auto& v : w.values()) v = rng.uniform(-1, 1);
  auto f = [&](Tape<double>& t) {
    const auto mods = d.modulation(t, d.time_embedding(t, 6));
    return nc::sum(nc::mul(d.layer(t, 0, t.constant(x), mods[0]), t.constant(w)));
  };
  CHECK(nc::gradcheck_params(d.params(), f, 1e-5, 12, 3).max_rel_err <= 1e-4);
  auto g = [&](Tape<double>& t, Var<double> v) {
    const auto mods = d.modulation(t, d.time_embedding(t, 6));
    return nc::sum(nc::mul(d.layer(t, 0, v, mods[0]), t.constant(w)));
  };
  CHECK(nc::gradcheck(g, x).max_rel_err <= 1e-4);
}

TEST_CASE("denoiser output shape and determinism") {
  Denoiser<float> d(tiny_config(), 17);
  Rng rng(18);
  const auto z = randn<float>({10, 4}, rng);
  const auto a = d.predict_array(z, 5), b = d.predict_array(z, 5);
  CHECK(a.shape() == nc::Shape{10, 4});
  CHECK(a == b);
  CHECK_THROWS_AS(d.predict_array(randn<float>({9, 4}, rng), 5), Error);
}

TEST_CASE("diffusion loss examples") {
  Denoiser<double> d(DiffConfig{.layers = 1, .ffn = 16, .steps = 10}, 19);
  d.params().find("diff.out.w")->value.fill(0.0);
  d.params().find("diff.out.b")->value.fill(0.0);
  Rng rng(20);
  const auto z = randn<double>({256, 64}, rng);
  double total = 0;
  for (std::uint64_t s = 0; s < 4; ++s) {
    Tape<double> t(false, false, s);
    const double l = d.loss(t, z).value()[0];
    CHECK(l >= 0.0);
    total += l;
  }
  CHECK(std::abs(total / 4 - 1.0) < 0.05);
  Tape<double> t(false, false);
  auto e = t.constant(randn<double>({4, 4}, rng));
  CHECK(nc::mse(e, e).value()[0] == 0.0);
}

TEST_CASE("single-step standard sampling with oracle noise recovers the data") {
  const auto s = build_schedule(1);
  Rng rng(21);
  const auto z0 = randn<double>({256, 64}, rng);
  const double ab = s.alpha_bar_at(1);
  NoisePredictor<double> oracle = [&](const Array<double>& zt, std::size_t) {
    Array<double> e(zt.shape());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = (zt[i] - std::sqrt(ab) * z0[i]) / std::sqrt(1 - ab);
    return e;
  };
  const auto out = sample_latents<double>(2, {256, 64}, s, oracle, DiffusionMode::Standard, 5);
  REQUIRE(out.size() == 2);
  for (const auto& z : out) {
    double worst = 0;
    for (std::size_t i = 0; i < z.size(); ++i) worst = std::max(worst, std::abs(z[i] - z0[i]));
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("sampling is seeded and finite in paper-literal mode") {
  auto cfg = tiny_config();
  cfg.steps = 50;
  Denoiser<float> d(cfg, 22);
  NoisePredictor<float> eps = [&](const Array<float>& z, std::size_t t) { return d.predict_array(z, t); };
  for (auto mode : {DiffusionMode::Standard, DiffusionMode::PaperLiteral}) {
    const auto a = sample_latents<float>(3, {10, 4}, d.schedule(), eps, mode, 7);
    const auto b = sample_latents<float>(3, {10, 4}, d.schedule(), eps, mode, 7);
    CHECK(a == b);
    REQUIRE(a.size() == 3);
    for (const auto& z : a) {
      CHECK(z.shape() == nc::Shape{10, 4});
      CHECK(z.all_finite());
    }
    CHECK(a[0] != a[1]);
  }
  NoisePredictor<float> bad = [](const Array<float>& z, std::size_t) {
    return Array<float>(z.shape(), std::numeric_limits<float>::infinity());
  };
  CHECK_THROWS_AS(sample_latents<float>(1, {10, 4}, d.schedule(), bad, DiffusionMode::Standard, 1), Error);
}

TEST_CASE("denoiser bundle round trip") {
  Denoiser<float> a(tiny_config(), 23), b(tiny_config(), 24);
  b.load_bundle(a.to_bundle());
  Rng rng(25);
  const auto z = randn<float>({10, 4}, rng);
  CHECK(a.predict_array(z, 2) == b.predict_array(z, 2));
  CHECK(a.to_bundle().meta["diff_config"].get<DiffConfig>() == tiny_config());
}

TEST_CASE("training on 8 latents cuts the loss tenfold") {
  auto cfg = tiny_config();
  cfg.positions = 16;
  cfg.latent_dim = 8;
  cfg.embed = 32;
  cfg.ffn = 64;
  cfg.fuse_hidden = 32;
  cfg.heads = 4;
  cfg.local_window = 4;
  cfg.mid_window = 8;
  cfg.steps = 100;
  Rng rng(26);
  std::vector<Array<float>> latents;
  for (int i = 0; i < 8; ++i) latents.push_back(randn<float>({16, 8}, rng));
  pipeline::DiffTrainConfig tc;
  tc.lr = 2e-3;
  tc.batch = 8;
  tc.iters = 2000;
  tc.warmup = 50;
  tc.decay_at = 1500;
  pipeline::DiffTrainer tr(cfg, tc, latents, 27);
  const double before = tr.evaluate(99, 8);
  tr.run();
  const double after = tr.evaluate(99, 8);
  MESSAGE("loss " << before << " -> " << after);
  CHECK(after * 10 <= before);
}

TEST_CASE("diffusion trainer resumes exactly") {
  auto cfg = tiny_config();
  Rng rng(28);
  std::vector<Array<float>> latents;
  for (int i = 0; i < 4; ++i) latents.push_back(randn<float>({10, 4}, rng));
  pipeline::DiffTrainConfig tc;
  tc.batch = 2;
  tc.iters = 6;
  pipeline::DiffTrainer full(cfg, tc, latents, 3);
  const auto ref = full.run();
  pipeline::DiffTrainer part(cfg, tc, latents, 3);
  for (int i = 0; i < 3; ++i) part.step();
  const auto dir = std::filesystem::temp_directory_path() / "cadseq_diff_resume";
  std::filesystem::remove_all(dir);
  part.save(dir);
  auto resumed = pipeline::DiffTrainer::load(dir, latents);
  const auto rest = resumed.run();
  REQUIRE(rest.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(rest[i].loss == ref[3 + i].loss);
  CHECK(resumed.model().to_bundle().tensors.size() == full.model().to_bundle().tensors.size());
  std::filesystem::remove_all(dir);
}
