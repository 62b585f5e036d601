#include "cadseq/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "cadseq/error.hpp"
#include "cadseq/geom/chamfer.hpp"
#include "cadseq/geom/voxel.hpp"
#include "cadseq/numcore/batch.hpp"
#include "cadseq/seqmodel/codec.hpp"
#include "cadseq/seqmodel/validate.hpp"

namespace cadseq::metrics {

AccuracyCounts& AccuracyCounts::operator+=(const AccuracyCounts& o) {
  type_total += o.type_total;
  type_match += o.type_match;
  param_total += o.param_total;
  param_match += o.param_match;
  return *this;
}

AccuracyCounts command_accuracy(const seq::CadSequence& pred, const seq::CadSequence& gt) {
  AccuracyCounts c;
  for (std::size_t i = 0; i < gt.true_length; ++i) {
    const auto& g = gt.commands[i];
    const auto& p = pred.commands[i];
    ++c.type_total;
    if (p.type != g.type) continue;
    ++c.type_match;
    for (std::size_t s = 0; s < seq::kNumParams; ++s) {
      if (!seq::uses_slot(g.type, s)) continue;
      ++c.param_total;
      if (p.params[s] == g.params[s]) ++c.param_match;
    }
  }
  return c;
}

bool sr_proxy_ok(const seq::CadSequence& s, int resolution) {
  if (!seq::validate_sequence(s).ok) return false;
  try {
    geom::build_solid(s, resolution);
    return true;
  } catch (const Error&) {
    return false;
  }
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

ReconReport reconstruction_metrics(const std::vector<seq::CadSequence>& pred, const std::vector<seq::CadSequence>& gt,
                                   const ReconOptions& opt) {
  if (pred.size() != gt.size()) {
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(pred.size()) + " predictions for " + std::to_string(gt.size()) + " references");
  }
  ReconReport r;
  r.pairs = gt.size();
  AccuracyCounts acc;
  for (std::size_t i = 0; i < gt.size(); ++i) acc += command_accuracy(pred[i], gt[i]);
  r.acc_c = acc.acc_c();
  r.acc_p = acc.acc_p();
  if (!opt.geometry || gt.empty()) return r;

  struct PairResult {
    bool invalid = false;
    bool success = false;
    bool has_cd = false;
    double cd = 0.0;
  };
  std::vector<PairResult> res(gt.size());
  nc::parallel_for(gt.size(), opt.threads, [&](std::size_t i) {
    const std::uint64_t seed = opt.seed + i;
    PairResult& pr = res[i];
    geom::PointCloud pc;
    try {
      pc = geom::sequence_to_pointcloud(pred[i], opt.cloud_points, seed, opt.resolution);
    } catch (const Error&) {
      pr.invalid = true;
      return;
    }
    pr.success = seq::validate_sequence(pred[i]).ok;
    try {
      const auto gc = geom::sequence_to_pointcloud(gt[i], opt.cloud_points, seed, opt.resolution);
      pr.cd = geom::chamfer_distance(pc, gc, opt.variant);
      pr.has_cd = true;
    } catch (const Error&) {
    }
  });
  std::vector<double> cds;
  std::size_t invalid = 0, success = 0;
  for (const auto& pr : res) {
    invalid += pr.invalid;
    success += pr.success;
    if (pr.has_cd) cds.push_back(pr.cd);
  }
  const double n = static_cast<double>(gt.size());
  r.ir = static_cast<double>(invalid) / n;
  r.sr = static_cast<double>(success) / n;
  r.mcd_pairs = cds.size();
  r.mcd = cds.empty() ? std::numeric_limits<double>::quiet_NaN() : median(cds) * 1e3;
  return r;
}

CoverageResult coverage_mmd(const std::vector<std::vector<double>>& dist) {
  if (dist.empty() || dist.front().empty()) throw Error(ErrorCode::EmptySet, "coverage of an empty set");
  const std::size_t ng = dist.size(), nr = dist.front().size();
  std::vector<bool> covered(nr, false);
  for (std::size_t g = 0; g < ng; ++g) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < nr; ++r) {
      if (dist[g][r] < dist[g][best]) best = r;
    }
    covered[best] = true;
  }
  double mmd = 0.0;
  for (std::size_t r = 0; r < nr; ++r) {
    double m = dist[0][r];
    for (std::size_t g = 1; g < ng; ++g) m = std::min(m, dist[g][r]);
    mmd += m;
  }
  CoverageResult out;
  out.cov = static_cast<double>(std::count(covered.begin(), covered.end(), true)) / static_cast<double>(nr);
  out.mmd = mmd / static_cast<double>(nr);
  return out;
}

std::vector<std::vector<double>> chamfer_matrix(const std::vector<geom::PointCloud>& gen,
                                                const std::vector<geom::PointCloud>& ref, unsigned threads,
                                                geom::ChamferVariant variant) {
  std::vector<geom::KdTree> tg, tr;
  tg.reserve(gen.size());
  tr.reserve(ref.size());
  for (const auto& c : gen) tg.emplace_back(c.points);
  for (const auto& c : ref) tr.emplace_back(c.points);
  std::vector<std::vector<double>> d(gen.size(), std::vector<double>(ref.size()));
  nc::parallel_for(gen.size(), threads, [&](std::size_t g) {
    for (std::size_t r = 0; r < ref.size(); ++r) d[g][r] = geom::chamfer_distance(gen[g], tg[g], ref[r], tr[r], variant);
  });
  return d;
}

std::vector<double> occupancy_distribution(const std::vector<geom::PointCloud>& clouds, int grid) {
  const std::size_t cells = static_cast<std::size_t>(grid) * grid * grid;
  std::vector<double> count(cells, 0.0);
  std::vector<std::uint8_t> seen(cells);
  auto cell = [grid](double v) {
    const int c = static_cast<int>(std::floor((v + 1.0) * 0.5 * grid));
    return std::clamp(c, 0, grid - 1);
  };
  for (const auto& pc : clouds) {
    std::fill(seen.begin(), seen.end(), 0);
    for (const auto& p : pc.points) {
      const std::size_t k = (static_cast<std::size_t>(cell(p[0])) * grid + cell(p[1])) * grid + cell(p[2]);
      seen[k] = 1;
    }
    for (std::size_t k = 0; k < cells; ++k) count[k] += seen[k];
  }
  double total = 0.0;
  for (double c : count) total += c;
  if (total > 0) {
    for (double& c : count) c /= total;
  }
  return count;
}

double jensen_shannon(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw Error(ErrorCode::ShapeMismatch, "distributions differ in size");
  double a = 0.0, b = 0.0, sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0) a += p[i] * std::log2(p[i] / m);
    if (q[i] > 0) b += q[i] * std::log2(q[i] / m);
    sp += p[i];
    sq += q[i];
  }
  // Dividing each half by its own mass, summed in the same order, makes disjoint supports give exactly 1.
  const double js = (sp > 0 ? 0.5 * a / sp : 0.0) + (sq > 0 ? 0.5 * b / sq : 0.0);
  return std::clamp(js, 0.0, 1.0);
}

GenCloudMetrics generation_metrics(const std::vector<geom::PointCloud>& gen, const std::vector<geom::PointCloud>& ref,
                                   unsigned threads, geom::ChamferVariant variant) {
  if (gen.empty() || ref.empty()) throw Error(ErrorCode::EmptySet, "generation metrics need non-empty sets");
  const auto cm = coverage_mmd(chamfer_matrix(gen, ref, threads, variant));
  GenCloudMetrics m;
  m.cov = cm.cov;
  m.mmd = cm.mmd;
  m.jsd = jensen_shannon(occupancy_distribution(gen), occupancy_distribution(ref));
  return m;
}

UniqueNovel unique_novel(const std::vector<seq::CadSequence>& gen, const std::vector<seq::CadSequence>& train) {
  UniqueNovel u;
  if (gen.empty()) return u;
  std::unordered_set<std::string> seen, training;
  for (const auto& s : train) training.insert(seq::canonical_key(s));
  std::size_t novel = 0;
  for (const auto& s : gen) {
    auto key = seq::canonical_key(s);
    if (!training.count(key)) ++novel;
    seen.insert(std::move(key));
  }
  const double n = static_cast<double>(gen.size());
  u.unique = static_cast<double>(seen.size()) / n;
  u.novel = static_cast<double>(novel) / n;
  return u;
}

namespace {

nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

std::string render(const std::vector<std::pair<std::string, std::string>>& rows) {
  std::size_t w = 0;
  for (const auto& [k, v] : rows) w = std::max(w, k.size());
  std::ostringstream os;
  for (const auto& [k, v] : rows) os << std::left << std::setw(static_cast<int>(w) + 2) << k << v << "\n";
  return os.str();
}

std::string fixed(double v, int digits = 4) {
  if (!std::isfinite(v)) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

nlohmann::json to_json(const ReconReport& r) {
  return {{"acc_c", r.acc_c}, {"acc_p", r.acc_p}, {"mcd_x1e3", number(r.mcd)}, {"ir", r.ir},
          {"sr_proxy", r.sr}, {"pairs", r.pairs}, {"mcd_pairs", r.mcd_pairs}};
}

GenReport generation_report(const std::vector<seq::CadSequence>& gen, const std::vector<seq::CadSequence>& ref,
                            const std::vector<seq::CadSequence>& train, const GenOptions& opt) {
  if (gen.empty()) throw Error(ErrorCode::EmptySet, "no generated sequences");
  GenReport r;
  r.generated = gen.size();
  r.reference = ref.size();
  auto clouds = [&](const std::vector<seq::CadSequence>& xs, std::uint64_t base, std::vector<char>& built) {
    std::vector<geom::PointCloud> out(xs.size());
    built.assign(xs.size(), 0);
    nc::parallel_for(xs.size(), opt.threads, [&](std::size_t i) {
      try {
        out[i] = geom::sequence_to_pointcloud(xs[i], opt.cloud_points, base + i, opt.resolution);
        built[i] = 1;
      } catch (const Error&) {
      }
    });
    std::vector<geom::PointCloud> kept;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (built[i]) kept.push_back(std::move(out[i]));
    }
    return kept;
  };
  std::vector<char> gen_built, ref_built;
  const auto gc = clouds(gen, opt.seed, gen_built);
  const auto rc = clouds(ref, opt.seed + 0x100000, ref_built);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < gen.size(); ++i) ok += gen_built[i] && seq::validate_sequence(gen[i]).ok;
  r.sr = static_cast<double>(ok) / static_cast<double>(gen.size());
  if (gc.empty() || rc.empty()) {
    r.cov = r.mmd = r.jsd = std::numeric_limits<double>::quiet_NaN();
  } else {
    const auto m = generation_metrics(gc, rc, opt.threads, opt.variant);
    r.cov = m.cov;
    r.mmd = m.mmd;
    r.jsd = m.jsd;
  }
  const auto un = unique_novel(gen, train);
  r.unique = un.unique;
  r.novel = un.novel;
  return r;
}

nlohmann::json to_json(const GenReport& r) {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  return {{"cov", num(r.cov)},  {"mmd", num(r.mmd)},     {"jsd", num(r.jsd)},
          {"unique", r.unique}, {"novel", r.novel},       {"sr_proxy", r.sr},
          {"generated", r.generated}, {"reference", r.reference}};
}

std::string table(const ReconReport& r) {
  return render({{"ACC_c", fixed(r.acc_c)},
                 {"ACC_p", fixed(r.acc_p)},
                 {"MCD (x1e3)", fixed(r.mcd, 3)},
                 {"IR", fixed(r.ir)},
                 {"SR-proxy", fixed(r.sr)},
                 {"pairs", std::to_string(r.pairs)}});
}

std::string table(const GenReport& r) {
  return render({{"COV", fixed(r.cov)},
                 {"MMD", fixed(r.mmd, 6)},
                 {"JSD", fixed(r.jsd)},
                 {"Unique", fixed(r.unique)},
                 {"Novel", fixed(r.novel)},
                 {"SR-proxy", fixed(r.sr)},
                 {"generated", std::to_string(r.generated)},
                 {"reference", std::to_string(r.reference)}});
}

}  // namespace cadseq::metrics
