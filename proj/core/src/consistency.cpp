#include "cdgmae/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "cdgmae/errors.hpp"
#include "cdgmae/ops.hpp"
#include "cdgmae/records.hpp"
#include "cdgmae/tensor_io.hpp"

namespace cdgmae {
namespace {

void check_patches(const FeatureSet& f, const char* op) {
  if (!f.patches.defined() || f.patches.rank() != 2 || f.patches.dim(0) == 0) {
    throw ContractError(std::string(op) + ": feature set '" + f.source_id + "' has no patch vectors");
  }
  if (f.patches.dim(1) != f.dim()) {
    throw ContractError(std::string(op) + ": feature set '" + f.source_id + "' patch width differs from class token");
  }
}

// Unit-normalized patch rows in double precision.
std::vector<double> normalized_rows(const FeatureSet& f) {
  const std::size_t n = f.patches.dim(0), d = f.patches.dim(1);
  const auto v = f.patches.data();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) norm += static_cast<double>(v[i * d + j]) * v[i * d + j];
    norm = std::sqrt(norm);
    if (norm <= 1e-12) {
      throw DegenerateInputError("feature set '" + f.source_id + "' has a zero patch vector at cell " +
                                 std::to_string(i));
    }
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = v[i * d + j] / norm;
  }
  return out;
}

}  // namespace

double global_similarity(const FeatureSet& a, const FeatureSet& b) {
  if (a.dim() != b.dim()) {
    throw ContractError("global_similarity: widths " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  return cosine_sim(std::span<const float>(a.cls), std::span<const float>(b.cls));
}

double local_similarity(const FeatureSet& a, const FeatureSet& b) {
  check_patches(a, "local_similarity");
  check_patches(b, "local_similarity");
  if (a.patches.shape() != b.patches.shape()) {
    throw ContractError("local_similarity: patch sets " + shape_string(a.patches.shape()) + " vs " +
                        shape_string(b.patches.shape()));
  }
  // Same normalized-dot path as nearest_patch_similarity, so NPS >= LS holds exactly.
  const std::size_t n = a.patches.dim(0), d = a.patches.dim(1);
  const auto ua = normalized_rows(a);
  const auto ub = normalized_rows(b);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (std::size_t k = 0; k < d; ++k) dot += ua[i * d + k] * ub[i * d + k];
    total += std::clamp(dot, -1.0, 1.0);
  }
  return total / static_cast<double>(n);
}

double nearest_patch_similarity(const FeatureSet& a, const FeatureSet& b) {
  check_patches(a, "nearest_patch_similarity");
  check_patches(b, "nearest_patch_similarity");
  if (a.patches.dim(1) != b.patches.dim(1)) throw ContractError("nearest_patch_similarity: width mismatch");
  const std::size_t na = a.patches.dim(0), nb = b.patches.dim(0), d = a.patches.dim(1);
  const auto ua = normalized_rows(a);
  const auto ub = normalized_rows(b);
  double total = 0.0;
  for (std::size_t i = 0; i < na; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nb; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += ua[i * d + k] * ub[j * d + k];
      best = std::max(best, dot);
    }
    total += std::clamp(best, -1.0, 1.0);
  }
  return total / static_cast<double>(na);
}

PairReport evaluate_pair(const FeatureSet& a, const FeatureSet& b, bool both_directions) {
  PairReport r;
  r.first_id = a.source_id;
  r.second_id = b.source_id;
  r.gs = global_similarity(a, b);
  r.ls = local_similarity(a, b);
  r.nps = nearest_patch_similarity(a, b);
  if (both_directions) r.nps_reverse = nearest_patch_similarity(b, a);
  return r;
}

ConsistencyReport evaluate_pairs(std::span<const FeaturePair> pairs, bool both_directions) {
  if (pairs.empty()) throw ContractError("evaluate_pairs: at least one pair is required");
  ConsistencyReport report;
  for (const auto& [a, b] : pairs) {
    report.pairs.push_back(evaluate_pair(a, b, both_directions));
    report.mean_gs += report.pairs.back().gs;
    report.mean_ls += report.pairs.back().ls;
    report.mean_nps += report.pairs.back().nps;
  }
  const double n = static_cast<double>(pairs.size());
  report.mean_gs /= n;
  report.mean_ls /= n;
  report.mean_nps /= n;
  return report;
}

std::string format_consistency_table(const ConsistencyReport& report) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %-24s %12s %12s %12s\n", "first", "second", "Global Sim.", "Local Sim.",
                "Nearest Sim.");
  out += buf;
  for (const auto& p : report.pairs) {
    std::snprintf(buf, sizeof buf, "%-24s %-24s %12s %12s %12s\n", p.first_id.c_str(), p.second_id.c_str(),
                  format_number(p.gs).c_str(), format_number(p.ls).c_str(), format_number(p.nps).c_str());
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%-24s %-24s %12s %12s %12s\n", "mean", "", format_number(report.mean_gs).c_str(),
                format_number(report.mean_ls).c_str(), format_number(report.mean_nps).c_str());
  out += buf;
  return out;
}

std::string format_consistency_records(const ConsistencyReport& report) {
  std::string out;
  for (const auto& p : report.pairs) {
    Record r = {{"first", p.first_id},
                {"second", p.second_id},
                {"gs", format_number(p.gs)},
                {"ls", format_number(p.ls)},
                {"nps", format_number(p.nps)}};
    if (p.nps_reverse) r.emplace_back("nps_reverse", format_number(*p.nps_reverse));
    out += format_record(r) + '\n';
  }
  return out;
}

void write_feature_file(const std::filesystem::path& path, const FeatureSet& features) {
  if (features.rows != features.cols) throw ContractError("write_feature_file: only square grids are supported");
  check_patches(features, "write_feature_file");
  std::vector<float> data(features.cls);
  data.insert(data.end(), features.patches.data().begin(), features.patches.data().end());
  write_tensor(path, Tensor::from_data({features.size() + 1, features.dim()}, std::move(data)));
}

FeatureSet read_feature_file(const std::filesystem::path& path) {
  const Tensor t = read_tensor(path);
  if (t.rank() != 2 || t.dim(0) < 2) throw IoError(path.string() + ": feature tensor must be [1 + L, D]");
  const std::size_t cells = t.dim(0) - 1, d = t.dim(1);
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(cells))));
  if (side * side != cells) throw IoError(path.string() + ": " + std::to_string(cells) + " cells is not a square grid");
  FeatureSet fs;
  fs.rows = fs.cols = side;
  fs.source_id = path.stem().string();
  fs.cls.assign(t.data().begin(), t.data().begin() + static_cast<long>(d));
  fs.patches = Tensor::from_data({cells, d}, std::vector<float>(t.data().begin() + static_cast<long>(d), t.data().end()));
  return fs;
}

}  // namespace cdgmae
