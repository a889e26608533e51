#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdgmae/features.hpp"

namespace cdgmae {

/// Cosine similarity of the two class-token vectors.
double global_similarity(const FeatureSet& a, const FeatureSet& b);

/// Mean over grid cells of the cosine similarity between co-located patch
/// vectors. Both sets must have the same number of cells and width.
double local_similarity(const FeatureSet& a, const FeatureSet& b);

/// Mean over a's patches of the best cosine match among all of b's patches.
/// Directional: nearest_patch_similarity(a, b) != nearest_patch_similarity(b, a) in general.
double nearest_patch_similarity(const FeatureSet& a, const FeatureSet& b);

struct PairReport {
  std::string first_id;
  std::string second_id;
  double gs = 0.0;
  double ls = 0.0;
  double nps = 0.0;
  std::optional<double> nps_reverse;  // second -> first, when requested
};

struct ConsistencyReport {
  std::vector<PairReport> pairs;
  double mean_gs = 0.0;
  double mean_ls = 0.0;
  double mean_nps = 0.0;
};

using FeaturePair = std::pair<FeatureSet, FeatureSet>;

PairReport evaluate_pair(const FeatureSet& a, const FeatureSet& b, bool both_directions = false);

/// Per-pair metrics and their arithmetic means, accumulated in input order.
ConsistencyReport evaluate_pairs(std::span<const FeaturePair> pairs, bool both_directions = false);

/// Plain-text table: one row per pair plus a mean row.
std::string format_consistency_table(const ConsistencyReport& report);
/// One record per pair: first, second, gs, ls, nps (and nps_reverse if present).
std::string format_consistency_records(const ConsistencyReport& report);

/// Feature file: a tensor of shape [1 + L, D] (class token first) for a
/// square grid of L cells.
void write_feature_file(const std::filesystem::path& path, const FeatureSet& features);
FeatureSet read_feature_file(const std::filesystem::path& path);

}  // namespace cdgmae
