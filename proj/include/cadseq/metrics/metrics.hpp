#pragma once

#include <cstddef>
#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "cadseq/geom/chamfer.hpp"
#include "cadseq/geom/pointcloud.hpp"
#include "cadseq/seqmodel/command.hpp"

namespace cadseq::metrics {

struct ReconReport {
  double acc_c = 0.0;
  double acc_p = 0.0;
  double mcd = 0.0;  // median chamfer distance times 1e3 over pairs that both build
  double ir = 0.0;
  double sr = 0.0;
  std::size_t pairs = 0;
  std::size_t mcd_pairs = 0;
};

struct GenReport {
  double cov = 0.0;
  double mmd = 0.0;
  double jsd = 0.0;
  double unique = 0.0;
  double novel = 0.0;
  double sr = 0.0;
  std::size_t generated = 0;
  std::size_t reference = 0;
};

struct AccuracyCounts {
  std::size_t type_total = 0;
  std::size_t type_match = 0;
  std::size_t param_total = 0;
  std::size_t param_match = 0;

  double acc_c() const { return type_total ? double(type_match) / double(type_total) : 1.0; }
  double acc_p() const { return param_total ? double(param_match) / double(param_total) : 1.0; }
  AccuracyCounts& operator+=(const AccuracyCounts& o);
};

// Positions before gt.true_length are compared; slot levels count only where the type matched.
AccuracyCounts command_accuracy(const seq::CadSequence& pred, const seq::CadSequence& gt);

struct ReconOptions {
  std::size_t cloud_points = geom::kDefaultCloudSize;
  int resolution = geom::kDefaultResolution;
  std::uint64_t seed = 0;
  bool geometry = true;  // false skips MCD, IR and SR
  unsigned threads = 1;
  geom::ChamferVariant variant = geom::ChamferVariant::Squared;
};

// Throws LengthMismatch when the lists differ in size.
ReconReport reconstruction_metrics(const std::vector<seq::CadSequence>& pred, const std::vector<seq::CadSequence>& gt,
                                   const ReconOptions& opt = {});

// Validates and builds the solid.
bool sr_proxy_ok(const seq::CadSequence& s, int resolution = geom::kDefaultResolution);

struct CoverageResult {
  double cov = 0.0;
  double mmd = 0.0;
};

// dist[g][r] is the chamfer distance between generated g and reference r.
CoverageResult coverage_mmd(const std::vector<std::vector<double>>& dist);

std::vector<std::vector<double>> chamfer_matrix(const std::vector<geom::PointCloud>& gen,
                                                const std::vector<geom::PointCloud>& ref, unsigned threads = 1,
                                                geom::ChamferVariant variant = geom::ChamferVariant::Squared);

inline constexpr int kJsdGrid = 28;

// Per-cell count of clouds with at least one point in the cell, normalized to unit mass.
std::vector<double> occupancy_distribution(const std::vector<geom::PointCloud>& clouds, int grid = kJsdGrid);

// Jensen-Shannon divergence in bits.
double jensen_shannon(const std::vector<double>& p, const std::vector<double>& q);

struct GenCloudMetrics {
  double cov = 0.0;
  double mmd = 0.0;
  double jsd = 0.0;
};

// Throws EmptySet.
GenCloudMetrics generation_metrics(const std::vector<geom::PointCloud>& gen, const std::vector<geom::PointCloud>& ref,
                                   unsigned threads = 1, geom::ChamferVariant variant = geom::ChamferVariant::Squared);

struct UniqueNovel {
  double unique = 0.0;
  double novel = 0.0;
};

UniqueNovel unique_novel(const std::vector<seq::CadSequence>& gen, const std::vector<seq::CadSequence>& train);

struct GenOptions {
  std::size_t cloud_points = geom::kDefaultCloudSize;
  int resolution = geom::kDefaultResolution;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  geom::ChamferVariant variant = geom::ChamferVariant::Squared;
};

// Cloud metrics over the members of each set that build (NaN when either side
// has none), SR-proxy over all generated sequences, unique and novel against train.
// Generated sequence i samples its cloud with seed opt.seed + i; reference j with
// opt.seed + 0x100000 + j.
GenReport generation_report(const std::vector<seq::CadSequence>& gen, const std::vector<seq::CadSequence>& ref,
                            const std::vector<seq::CadSequence>& train, const GenOptions& opt = {});

nlohmann::json to_json(const ReconReport& r);
nlohmann::json to_json(const GenReport& r);
std::string table(const ReconReport& r);
std::string table(const GenReport& r);

}  // namespace cadseq::metrics
