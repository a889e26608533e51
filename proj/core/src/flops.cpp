#include "cdgmae/flops.hpp"

#include <cstdio>
#include <sstream>

#include "cdgmae/errors.hpp"
#include "cdgmae/records.hpp"

namespace cdgmae {

FlopsBreakdown count_flops(const ModelConfig& c, std::size_t num_anchors, double anchor_mask, double target_mask,
                           const FlopsConvention& conv) {
  c.validate();
  if (num_anchors == 0) throw ContractError("count_flops: at least one anchor is required");
  if (!(anchor_mask >= 0.0 && anchor_mask < 1.0) || !(target_mask >= 0.0 && target_mask < 1.0)) {
    throw ContractError("count_flops: masking ratios must lie in [0, 1)");
  }
  const double n_patches = static_cast<double>(c.num_patches());
  const double pd = static_cast<double>(c.patch_dim());
  const double e = static_cast<double>(c.enc_dim);
  const double d = static_cast<double>(c.dec_dim);
  const double mlp = static_cast<double>(c.mlp_ratio);
  const double n_anchor = static_cast<double>(num_anchors);
  const double target_vis = static_cast<double>(visible_count(c.num_patches(), target_mask));
  const double anchor_vis = static_cast<double>(visible_count(c.num_patches(), anchor_mask));

  // Tokens entering each encoder, class token included.
  const double n_t = target_vis + 1.0;
  const double n_a = anchor_vis + 1.0;
  auto encoder = [&](double n) {
    double per_layer = (4.0 + 2.0 * mlp) * n * e * e;
    if (conv.count_encoder_attention) per_layer += 2.0 * n * n * e;
    return static_cast<double>(c.enc_depth) * per_layer;
  };

  FlopsBreakdown b;
  const double embedded = conv.embed_all_patches ? n_patches * (1.0 + n_anchor) : target_vis + n_anchor * anchor_vis;
  b.patch_embed = embedded * pd * e;
  b.target_encoder = encoder(n_t);
  b.anchor_encoders = n_anchor * encoder(n_a);
  b.decoder_embed = (n_t + n_anchor * n_a) * e * d;

  const double lq = n_patches + 1.0;
  const double lk = n_anchor * n_a;
  const double self_attn = 4.0 * lq * d * d + 2.0 * lq * lq * d;
  const double cross_attn = 2.0 * lq * d * d + 2.0 * lk * d * d + 2.0 * lq * lk * d;
  const double mlp_cost = 2.0 * mlp * lq * d * d;
  b.decoder = static_cast<double>(c.dec_depth) * (self_attn + cross_attn + mlp_cost);
  b.head = lq * d * pd;
  b.loss = (n_patches - target_vis) * pd;

  const double k = conv.flops_per_mac;
  for (double* v : {&b.patch_embed, &b.target_encoder, &b.anchor_encoders, &b.decoder_embed, &b.decoder, &b.head,
                    &b.loss}) {
    *v *= k;
  }
  return b;
}

double estimate_flops(const ModelConfig& config, std::size_t num_anchors, double anchor_mask, double target_mask,
                      const FlopsConvention& convention) {
  return count_flops(config, num_anchors, anchor_mask, target_mask, convention).total() / 1e9;
}

std::vector<std::pair<std::size_t, double>> standard_flops_settings() {
  return {{1, 0.0}, {2, 0.0}, {2, 0.25}, {2, 0.5}, {3, 0.25}, {3, 0.5}, {4, 0.25}, {4, 0.5}};
}

std::string format_flops_table(const std::vector<FlopsRow>& rows) {
  std::ostringstream os;
  os << "anchors  anchor_mask  gflops\n";
  for (const auto& r : rows) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%7zu  %10.0f%%  %s\n", r.num_anchors, r.anchor_mask * 100.0,
                  format_number(r.gflops).c_str());
    os << buf;
  }
  return os.str();
}

}  // namespace cdgmae
