#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cdgmae/vit.hpp"

namespace cdgmae {

/// Counting rules. The defaults reproduce the published ViT-S/16 compute
/// figures: one multiply-accumulate is one FLOP, every patch of every view is
/// embedded before masking, and encoder attention matmuls are left out.
struct FlopsConvention {
  double flops_per_mac = 1.0;
  bool count_encoder_attention = false;
  bool embed_all_patches = true;
};

/// Per-stage FLOPs for one training sample (forward pass through the loss).
struct FlopsBreakdown {
  double patch_embed = 0.0;
  double target_encoder = 0.0;
  double anchor_encoders = 0.0;
  double decoder_embed = 0.0;
  double decoder = 0.0;
  double head = 0.0;
  double loss = 0.0;

  double total() const {
    return patch_embed + target_encoder + anchor_encoders + decoder_embed + decoder + head + loss;
  }
};

FlopsBreakdown count_flops(const ModelConfig& config, std::size_t num_anchors, double anchor_mask, double target_mask,
                           const FlopsConvention& convention = {});

/// Total in GFLOPs.
double estimate_flops(const ModelConfig& config, std::size_t num_anchors, double anchor_mask, double target_mask,
                      const FlopsConvention& convention = {});

struct FlopsRow {
  std::size_t num_anchors = 1;
  double anchor_mask = 0.0;
  double gflops = 0.0;
};

/// The eight (N, r_a) settings of the reference compute table.
std::vector<std::pair<std::size_t, double>> standard_flops_settings();

std::string format_flops_table(const std::vector<FlopsRow>& rows);

}  // namespace cdgmae
