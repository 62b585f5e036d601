// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//   acceptance [--only 1,3,7] [--workdir DIR] [--threads N]
#include <malloc.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cadseq/autoencoder/ssm.hpp"
#include "cadseq/cli/cli.hpp"
#include "cadseq/diffusion/sampler.hpp"
#include "cadseq/metrics/metrics.hpp"
#include "cadseq/numcore/optim.hpp"
#include "cadseq/pipeline/config.hpp"
#include "cadseq/seqmodel/quantize.hpp"
#include "cadseq/seqmodel/synth.hpp"
#include "cadseq/seqmodel/validate.hpp"
#include "support/oracles.hpp"

using namespace cadseq;
namespace fs = std::filesystem;
using nc::Array;
using nc::Tape;
using nc::Var;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <typename T>
Array<T> uniform(nc::Shape s, Rng& rng, double lo = -1, double hi = 1) {
  Array<T> a(std::move(s));
  for (auto& v : a.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return a;
}

template <typename T>
Array<T> randn(nc::Shape s, Rng& rng) {
  Array<T> a(std::move(s));
  for (auto& v : a.values()) v = static_cast<T>(rng.normal());
  return a;
}

struct Context {
  fs::path workdir;
  unsigned threads = 1;
  pipeline::RunConfig desk = pipeline::profile_config("desk");
  std::vector<seq::CadSequence> data;
  std::optional<pipeline::AeTrainer> ae;
  double ae_seconds = 0;
};

std::vector<seq::CadSequence> desk_data() {
  std::vector<seq::CadSequence> out;
  for (const auto& r : seq::synthesize_records(64, 0)) out.push_back(r.sequence);
  return out;
}

// Trains the desk autoencoder once; criteria 1 and 9 share it.
pipeline::AeTrainer& trained_autoencoder(Context& cx) {
  if (cx.ae) return *cx.ae;
  cx.data = desk_data();
  const auto t0 = std::chrono::steady_clock::now();
  cx.ae.emplace(cx.desk.ae, cx.desk.ae_train, cx.data, cx.desk.seed, cx.threads);
  cx.ae->run([](const pipeline::StepRecord& r) {
               if (r.step == 1 || r.step % 50 == 0) std::printf("  ae step %llu loss %.3f\n", (unsigned long long)r.step, r.loss);
             },
             [](const pipeline::AccuracyRecord& a) {
               std::printf("  ae step %llu acc_c %.4f acc_p %.4f\n", (unsigned long long)a.step, a.acc_c, a.acc_p);
               std::fflush(stdout);
             });
  cx.ae_seconds = seconds_since(t0);
  return *cx.ae;
}

Outcome ae_overfit(Context& cx) {
  auto& tr = trained_autoencoder(cx);
  std::size_t lo = 256, hi = 0;
  for (const auto& s : cx.data) lo = std::min(lo, s.true_length), hi = std::max(hi, s.true_length);
  const auto acc = pipeline::training_accuracy(tr.model(), cx.data, cx.threads);
  std::set<std::vector<float>> distinct;
  for (const auto& s : cx.data) {
    const auto z = tr.model().encode_array(s);
    distinct.insert(std::vector<float>(z.values().begin(), z.values().end()));
  }
  const bool ok = acc.acc_c() >= 0.99 && acc.acc_p() >= 0.95 && tr.steps_done() <= 5000 && cx.ae_seconds <= 1800 &&
                  lo >= 60 && hi <= 256 && distinct.size() == cx.data.size();
  return {ok, fmt("ACC_c %.4f ACC_p %.4f after %llu steps in %.0f s; lengths %zu..%zu; %zu distinct latents",
                  acc.acc_c(), acc.acc_p(), (unsigned long long)tr.steps_done(), cx.ae_seconds, lo, hi, distinct.size())};
}

Outcome gradients(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, double>> errs;
  Rng rng(101);
  {
    const auto q = uniform<double>({6, 4}, rng), k = uniform<double>({6, 4}, rng), v = uniform<double>({6, 4}, rng);
    const auto w = uniform<double>({6, 4}, rng);
    auto mask = std::make_shared<const Array<double>>(diff::window_mask<double>(6, 2));
    double worst = 0;
    for (int which = 0; which < 3; ++which) {
      auto f = [&](Tape<double>& t, Var<double> x) {
        auto a = which == 0 ? x : t.constant(q), b = which == 1 ? x : t.constant(k), c = which == 2 ? x : t.constant(v);
        return nc::sum(nc::mul(nc::masked_attention(a, b, c, mask), t.constant(w)));
      };
      worst = std::max(worst, nc::gradcheck(f, which == 0 ? q : which == 1 ? k : v).max_rel_err);
    }
    errs.push_back({"masked_attention", worst});
  }
  {
    const auto x = uniform<double>({5, 6}, rng), xi = uniform<double>({1, 6}, rng), psi = uniform<double>({1, 6}, rng);
    const auto w = uniform<double>({5, 6}, rng);
    double worst = 0;
    for (int which = 0; which < 3; ++which) {
      auto f = [&](Tape<double>& t, Var<double> v) {
        auto a = which == 0 ? v : t.constant(x), b = which == 1 ? v : t.constant(xi), c = which == 2 ? v : t.constant(psi);
        return nc::sum(nc::mul(nc::layer_norm_modulated(a, b, c), t.constant(w)));
      };
      worst = std::max(worst, nc::gradcheck(f, which == 0 ? x : which == 1 ? xi : psi).max_rel_err);
    }
    errs.push_back({"layer_norm_modulated", worst});
  }
  {
    ae::AeConfig c;
    c.d_embed = 8;
    c.enc_blocks = 1;
    c.state_size = 4;
    c.latent_dim = 4;
    c.d_dec = 8;
    c.dec_blocks = 1;
    c.heads = 2;
    c.ffn = 16;
    c.dropout = 0.0;
    c.positions = 6;
    ae::AutoEncoder<double> m(c, 8);
    const auto x = uniform<double>({6, 8}, rng), w = uniform<double>({6, 8}, rng);
    auto f = [&](Tape<double>& t, Var<double> v) { return nc::sum(nc::mul(m.mamba_block(t, 0, v), t.constant(w))); };
    auto fp = [&](Tape<double>& t) { return nc::sum(nc::mul(m.mamba_block(t, 0, t.constant(x)), t.constant(w))); };
    errs.push_back({"mamba_plus_block", std::max(nc::gradcheck(f, x).max_rel_err, nc::gradcheck_params(m.params(), fp).max_rel_err)});
  }
  {
    diff::DiffConfig c;
    c.latent_dim = 4;
    c.positions = 10;
    c.embed = 8;
    c.layers = 1;
    c.heads = 2;
    c.ffn = 12;
    c.fuse_hidden = 6;
    c.local_window = 2;
    c.mid_window = 4;
    c.dropout = 0.0;
    c.steps = 20;
    diff::Denoiser<double> d(c, 15);
    for (const char* name : {"diff.time.modulation.w", "diff.time.modulation.b"}) {
      for (auto& v : d.params().find(name)->value.values()) v = 0.3 * rng.normal();
    }
    const auto x = randn<double>({10, 8}, rng), w = uniform<double>({10, 8}, rng);
    auto fp = [&](Tape<double>& t) {
      const auto mods = d.modulation(t, d.time_embedding(t, 6));
      return nc::sum(nc::mul(d.layer(t, 0, t.constant(x), mods[0]), t.constant(w)));
    };
    auto fx = [&](Tape<double>& t, Var<double> v) {
      const auto mods = d.modulation(t, d.time_embedding(t, 6));
      return nc::sum(nc::mul(d.layer(t, 0, v, mods[0]), t.constant(w)));
    };
    errs.push_back({"mst_layer", std::max(nc::gradcheck_params(d.params(), fp, 1e-5, 12, 3).max_rel_err,
                                          nc::gradcheck(fx, x).max_rel_err)});
  }
  {
    ae::AeConfig c;
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
    ae::AutoEncoder<double> m(c, 15);
    for (auto& prm : m.params()) {
      if (prm.name.find(".norm") != std::string::npos) {
        for (auto& v : prm.value.values()) v += rng.uniform(-0.3, 0.3);
      }
    }
    const auto s = seq::CadSequence::from_content(
        {seq::CadCommand::sol(), seq::CadCommand::circle(128, 128, 64),
         seq::CadCommand::extrude(0, 0, 0, 128, 128, 128, 200, 180, 128, seq::BooleanOp::NewBody, seq::ExtentType::Symmetric)});
    auto f = [&](Tape<double>& t) { return m.sequence_loss(t, s); };
    errs.push_back({"ae_loss", nc::gradcheck_params(m.params(), f, 1e-5, 24, 17).max_rel_err});
  }
  const double secs = seconds_since(t0);
  bool ok = secs <= 120;
  std::string detail;
  for (const auto& [name, e] : errs) {
    ok = ok && e <= 1e-4;
    detail += fmt("%s %.1e; ", name.c_str(), e);
  }
  return {ok, detail + fmt("%.1f s", secs)};
}

Outcome scan_oracle(Context&) {
  Rng rng(202);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 1 + rng.uniform_int(0, 31), N = 1 + rng.uniform_int(0, 7), E = 1 + rng.uniform_int(0, 3);
    const auto x = uniform<double>({T, E}, rng), B = uniform<double>({T, N}, rng), C = uniform<double>({T, N}, rng);
    const auto delta = uniform<double>({T, E}, rng, 0.01, 1.0);
    const auto A = uniform<double>({E, N}, rng, -2.0, -0.05);
    const auto y = ae::ssm_scan(x, ae::discretize_ssm(delta, A, B), C);
    Tape<double> t(false, false);
    const auto yt = nc::selective_scan(t.constant(x), t.constant(delta), t.constant(A), t.constant(B), t.constant(C)).value();
    for (std::size_t s = 0; s < T; ++s) {
      for (std::size_t e = 0; e < E; ++e) {
        double ref = 0;
        for (std::size_t r = 0; r <= s; ++r) {
          for (std::size_t n = 0; n < N; ++n) {
            double prod = 1;
            for (std::size_t q = r + 1; q <= s; ++q) prod *= std::exp(delta.at(q, e) * A.at(e, n));
            ref += C.at(s, n) * prod * delta.at(r, e) * B.at(r, n) * x.at(r, e);
          }
        }
        worst = std::max({worst, std::abs(y.at(s, e) - ref), std::abs(yt.at(s, e) - ref)});
      }
    }
  }
  return {worst <= 1e-10, fmt("100 instances, max abs err %.2e", worst)};
}

Outcome schedule_forward(Context&) {
  bool ok = true;
  std::string detail;
  for (std::size_t T : {std::size_t(100), std::size_t(1000)}) {
    const auto s = diff::build_schedule(T);
    const double b1 = 0.0001 + 0.0199 / static_cast<double>(T);
    ok = ok && std::abs(s.beta_at(1) - b1) <= 1e-18 && s.beta_at(T) == 0.02;
    detail += fmt("T=%zu beta_1 %.7g beta_T %.17g; ", T, s.beta_at(1), s.beta_at(T));
  }
  const auto s = diff::build_schedule(1000);
  Rng rng(303);
  for (std::size_t t : {std::size_t(1), std::size_t(500), std::size_t(1000)}) {
    const auto z0 = randn<double>({10000, 1}, rng), eps = randn<double>({10000, 1}, rng);
    const auto zt = diff::forward_diffuse(z0, t, eps, s);
    double m = 0, m2 = 0;
    for (double v : zt.values()) m += v, m2 += v * v;
    m /= 1e4;
    const double var = m2 / 1e4 - m * m;
    ok = ok && std::abs(var - 1.0) <= 0.05;
    detail += fmt("%svar(t=%zu) %.4f", t == 1 ? "" : ", ", t, var);
  }
  return {ok, detail};
}

Outcome sampler_consistency(Context&) {
  const auto s1 = diff::build_schedule(1);
  Rng rng(404);
  const auto z0 = randn<double>({256, 64}, rng);
  const double ab = s1.alpha_bar_at(1);
  diff::NoisePredictor<double> oracle = [&](const Array<double>& zt, std::size_t) {
    Array<double> e(zt.shape());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = (zt[i] - std::sqrt(ab) * z0[i]) / std::sqrt(1 - ab);
    return e;
  };
  double worst = 0;
  for (const auto& z : diff::sample_latents<double>(4, {256, 64}, s1, oracle, diff::DiffusionMode::Standard, 9)) {
    for (std::size_t i = 0; i < z.size(); ++i) worst = std::max(worst, std::abs(z[i] - z0[i]));
  }
  diff::DiffConfig c;
  c.embed = 32;
  c.layers = 2;
  c.heads = 4;
  c.ffn = 64;
  c.dropout = 0.0;
  c.steps = 50;
  c.mode = diff::DiffusionMode::PaperLiteral;
  diff::Denoiser<float> d(c, 5);
  diff::NoisePredictor<float> eps = [&](const Array<float>& z, std::size_t t) { return d.predict_array(z, t); };
  bool finite = true;
  double peak = 0;
  try {
    for (const auto& z : diff::sample_latents<float>(2, {256, 64}, d.schedule(), eps, diff::DiffusionMode::PaperLiteral, 11)) {
      finite = finite && z.all_finite();
      for (float v : z.values()) peak = std::max(peak, std::abs(double(v)));
    }
  } catch (const Error&) {
    finite = false;
  }
  return {worst <= 1e-6 && finite,
          fmt("T=1 oracle max abs err %.2e; paper-literal T=50 finite=%s, max |z| %.3g", worst, finite ? "yes" : "no", peak)};
}

Outcome quantization(Context&) {
  std::size_t levels = 0, draws = 0;
  bool ok = true;
  double worst_ratio = 0;
  Rng rng(505);
  for (std::size_t slot = 0; slot < seq::kNumParams; ++slot) {
    const auto& r = seq::param_range(slot);
    if (r.discrete) continue;
    for (int l = 0; l < seq::kNumLevels; ++l, ++levels) ok = ok && seq::quantize_param(*seq::dequantize_param(l, r), r) == l;
    const double half = (r.hi - r.lo) / 510.0;
    for (int i = 0; i < 100000; ++i, ++draws) {
      const double x = rng.uniform(r.lo, r.hi);
      const double err = std::abs(*seq::dequantize_param(seq::quantize_param(x, r), r) - x);
      worst_ratio = std::max(worst_ratio, err / half);
    }
  }
  ok = ok && worst_ratio <= 1 + 1e-12;
  return {ok, fmt("%zu levels round-trip; %zu draws, worst error %.6f half-steps", levels, draws, worst_ratio)};
}

Outcome metric_oracles(Context& cx) {
  Rng rng(606);
  bool chamfer_exact = true;
  for (std::size_t n : {std::size_t(1), std::size_t(7), std::size_t(64), std::size_t(250), std::size_t(500)}) {
    for (int rep = 0; rep < 3; ++rep) {
      const auto a = oracle::random_cloud(rng, n), b = oracle::random_cloud(rng, 1 + rng.uniform_int(0, 499));
      chamfer_exact = chamfer_exact && geom::chamfer_distance(a, b) == oracle::brute_chamfer(a, b);
    }
  }
  std::vector<geom::PointCloud> clouds;
  for (const auto& r : seq::synthesize_records(8, 66)) clouds.push_back(geom::sequence_to_pointcloud(r.sequence, 500, 1, 32));
  const auto self = metrics::generation_metrics(clouds, clouds, cx.threads);
  const bool self_ok = self.cov == 1.0 && self.mmd == 0.0 && self.jsd == 0.0;
  std::vector<geom::PointCloud> lo(3), hi(3);
  for (int i = 0; i < 3; ++i) lo[i] = oracle::random_cloud(rng, 50, -1.0, -0.2), hi[i] = oracle::random_cloud(rng, 50, 0.2, 1.0);
  const double disjoint = metrics::jensen_shannon(metrics::occupancy_distribution(lo), metrics::occupancy_distribution(hi));
  bool small_ok = true;
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<geom::PointCloud> g(1 + rng.uniform_int(0, 9)), r(1 + rng.uniform_int(0, 9));
    for (auto& c : g) c = oracle::random_cloud(rng, 1 + rng.uniform_int(0, 20));
    for (auto& c : r) c = oracle::random_cloud(rng, 1 + rng.uniform_int(0, 20));
    const auto m = metrics::generation_metrics(g, r);
    const auto o = oracle::brute_cov_mmd(g, r);
    const double oj = oracle::brute_jsd(g, r);
    small_ok = small_ok && m.cov == o.cov && m.mmd == o.mmd && std::abs(m.jsd - oj) <= 1e-12 * std::max(1.0, oj);
  }
  // Accuracy and uniqueness against direct counting.
  const auto recs = seq::synthesize_records(10, 67);
  std::vector<seq::CadSequence> gt, pred;
  for (const auto& r : recs) gt.push_back(r.sequence);
  pred = gt;
  for (std::size_t i = 0; i < pred.size(); i += 2) {
    auto& cmd = pred[i].commands[1 + i];
    for (std::size_t slot = 0; slot < seq::kNumParams; ++slot) {
      if (cmd.params[slot] >= 0) {
        cmd.params[slot] = static_cast<std::int16_t>((cmd.params[slot] + 1) % 256);
        break;
      }
    }
  }
  std::size_t tt = 0, tm = 0, pt = 0, pm = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    for (std::size_t k = 0; k < gt[i].true_length; ++k) {
      const auto &a = pred[i].commands[k], &b = gt[i].commands[k];
      ++tt;
      if (a.type != b.type) continue;
      ++tm;
      for (std::size_t slot = 0; slot < seq::kNumParams; ++slot) {
        if (!seq::uses_slot(b.type, slot)) continue;
        ++pt;
        pm += a.params[slot] == b.params[slot];
      }
    }
  }
  metrics::AccuracyCounts acc;
  for (std::size_t i = 0; i < gt.size(); ++i) acc += metrics::command_accuracy(pred[i], gt[i]);
  const bool acc_ok = acc.acc_c() == double(tm) / double(tt) && acc.acc_p() == double(pm) / double(pt);
  std::vector<seq::CadSequence> gen = {gt[0], gt[0], pred[0], pred[2], gt[3]};
  std::set<std::string> keys, train_keys;
  for (const auto& s : gt) train_keys.insert(seq::canonical_key(s));
  std::size_t novel = 0;
  for (const auto& s : gen) keys.insert(seq::canonical_key(s)), novel += !train_keys.count(seq::canonical_key(s));
  const auto un = metrics::unique_novel(gen, gt);
  const bool un_ok = un.unique == double(keys.size()) / double(gen.size()) && un.novel == double(novel) / double(gen.size());
  const bool ok = chamfer_exact && self_ok && disjoint == 1.0 && small_ok && acc_ok && un_ok;
  return {ok, fmt("chamfer bit-exact %s; self (%.3g, %.3g, %.3g); disjoint JSD %.17g; small-set oracles %s; ACC %s; unique/novel %s",
                  chamfer_exact ? "yes" : "no", self.cov, self.mmd, self.jsd, disjoint, small_ok ? "equal" : "differ",
                  acc_ok ? "equal" : "differ", un_ok ? "equal" : "differ")};
}

Outcome masks(Context&) {
  const auto l = diff::window_mask<double>(256, 64), m = diff::window_mask<double>(256, 128),
             g = diff::window_mask<double>(256, diff::kGlobalWindow);
  const double ninf = -std::numeric_limits<double>::infinity();
  std::size_t mismatches = 0, nesting = 0;
  for (std::size_t i = 0; i < 256; ++i) {
    for (std::size_t j = 0; j < 256; ++j) {
      const std::size_t d = i > j ? i - j : j - i;
      mismatches += l.at(i, j) != (d <= 64 ? 0.0 : ninf);
      mismatches += m.at(i, j) != (d <= 128 ? 0.0 : ninf);
      mismatches += g.at(i, j) != 0.0;
      nesting += (l.at(i, j) == 0.0 && m.at(i, j) != 0.0) + (m.at(i, j) == 0.0 && g.at(i, j) != 0.0);
    }
  }
  return {mismatches == 0 && nesting == 0, fmt("3 x 65536 entries, %zu mismatches, %zu nesting violations", mismatches, nesting)};
}

Outcome end_to_end(Context& cx) {
  auto& tr = trained_autoencoder(cx);
  const auto& model = tr.model();
  metrics::ReconOptions ro;
  ro.geometry = true;
  ro.threads = cx.threads;
  const auto self = metrics::reconstruction_metrics(cx.data, cx.data, ro);
  std::vector<Array<float>> latents;
  for (const auto& s : cx.data) latents.push_back(model.encode_array(s));
  const auto t0 = std::chrono::steady_clock::now();
  pipeline::DiffTrainer dt(cx.desk.diff, cx.desk.diff_train, latents, cx.desk.seed + 1, cx.threads);
  double first = 0, last_mean = 0;
  std::size_t tail = 0;
  dt.run([&](const pipeline::StepRecord& r) {
    if (r.step == 1) first = r.loss;
    if (r.step + 100 > cx.desk.diff_train.iters) last_mean += r.loss, ++tail;
    if (r.step % 250 == 0) {
      std::printf("  diffusion step %llu loss %.4f (%.0f s)\n", (unsigned long long)r.step, r.loss, seconds_since(t0));
      std::fflush(stdout);
    }
  });
  last_mean /= std::max<std::size_t>(tail, 1);
  const double train_s = seconds_since(t0);
  const auto& den = dt.model();
  auto z = diff::sample_latents<float>(
      32, {cx.desk.diff.positions, cx.desk.diff.latent_dim}, den.schedule(),
      [&](const Array<float>& x, std::size_t t) { return den.predict_array(x, t); }, diff::DiffusionMode::Standard,
      cx.desk.seed + 2, cx.threads);
  std::size_t valid = 0;
  const float scale = static_cast<float>(dt.latent_scale());
  for (auto& x : z) {
    for (auto& v : x.values()) v *= scale;
    valid += seq::validate_sequence(model.predict(x)).ok;
  }
  const double total_s = seconds_since(t0);
  return {valid * 2 >= z.size() && self.ir == 0.0,
          fmt("%zu/32 decoded samples valid; synthetic-set IR %.3f; diffusion loss %.3f -> %.3f (last-100 mean) in %.0f s; "
              "%.0f s with sampling",
              valid, self.ir, first, last_mean, train_s, total_s)};
}

std::vector<std::string> list_files(const fs::path& root) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root).string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The tiny profile through every subcommand of the command-line tool.
bool run_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto p = [&](const char* name) { return (dir / name).string(); };
  const std::vector<std::vector<std::string>> steps = {
      {"synth", "--out", p("data.jsonl")},
      {"validate", "--in", p("data.jsonl"), "--report", p("validate.json")},
      {"train-ae", "--data", p("data.jsonl"), "--out", p("ae")},
      {"eval-ae", "--data", p("data.jsonl"), "--ckpt", p("ae"), "--report", p("recon.json"), "--predictions", p("recon.jsonl")},
      {"encode", "--data", p("data.jsonl"), "--ckpt", p("ae"), "--out", p("latents")},
      {"train-diff", "--latents", p("latents"), "--out", p("diff")},
      {"sample", "--ckpt", p("diff"), "--out", p("samples")},
      {"decode", "--ckpt", p("ae"), "--latents", p("samples"), "--out", p("generated.jsonl"), "--report", p("decode.json")},
      {"eval-gen", "--gen", p("generated.jsonl"), "--ref", p("data.jsonl"), "--report", p("gen.json")},
  };
  for (const auto& s : steps) {
    std::vector<std::string> args = {"cadseq"};
    args.insert(args.end(), s.begin(), s.end());
    for (const char* g : {"--profile", "tiny", "--seed", "7", "--deterministic"}) args.push_back(g);
    if (cli::run(args) != cli::kExitOk) return false;
  }
  return true;
}

Outcome determinism(Context& cx) {
  const fs::path a = cx.workdir / "determinism_a", b = cx.workdir / "determinism_b";
  std::fflush(stdout);
  if (!run_pipeline(a) || !run_pipeline(b)) return {false, "pipeline run failed"};
  const auto fa = list_files(a), fb = list_files(b);
  if (fa != fb) return {false, "runs produced different file sets"};
  std::size_t bytes = 0;
  for (const auto& f : fa) {
    const auto x = slurp(a / f), y = slurp(b / f);
    if (x != y) return {false, "file differs: " + f};
    bytes += x.size();
  }
  return {fa.size() >= 15, fmt("%zu files (%zu bytes) byte-identical across two runs", fa.size(), bytes)};
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string workdir = (fs::temp_directory_path() / "cadseq_acceptance").string();
  unsigned threads = 1;
  app.add_option("--only", only, "Criteria to run (default all)")->delimiter(',');
  app.add_option("--workdir", workdir, "Scratch directory");
  app.add_option("--threads", threads, "Worker threads");
  CLI11_PARSE(app, argc, argv);

  Context cx;
  cx.workdir = workdir;
  cx.threads = threads;
  fs::create_directories(cx.workdir);
  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria = {
      {"AE overfit on 64 synthetic sequences", ae_overfit},
      {"gradient correctness", gradients},
      {"scan oracle", scan_oracle},
      {"schedule and forward process", schedule_forward},
      {"sampler consistency", sampler_consistency},
      {"quantization round trip", quantization},
      {"metric oracles", metric_oracles},
      {"window masks", masks},
      {"end-to-end generation smoke", end_to_end},
      {"pipeline determinism", determinism},
  };
  int failed = 0;
  std::vector<std::string> summary;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second(cx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    const std::string line = fmt("%s [%d] %s: ", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str()) + o.detail +
                             fmt(" (%.1f s)", seconds_since(t0));
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    summary.push_back(line);
  }
  std::printf("\n");
  for (const auto& l : summary) std::printf("%s\n", l.c_str());
  std::printf("%d of %zu criteria failed\n", failed, summary.size());
  return failed ? 1 : 0;
}
