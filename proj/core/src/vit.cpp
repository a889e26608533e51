#include "cdgmae/vit.hpp"

#include <cmath>
#include <string>

#include "cdgmae/errors.hpp"
#include "cdgmae/ops.hpp"
#include "cdgmae/random.hpp"

namespace cdgmae {

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ContractError("invalid model config: " + what);
  };
  require(patch_size > 0 && image_size > 0 && image_size % patch_size == 0,
          "image_size must be a positive multiple of patch_size");
  require(channels > 0, "channels must be positive");
  require(enc_heads > 0 && enc_dim % enc_heads == 0, "enc_dim must be divisible by enc_heads");
  require(dec_heads > 0 && dec_dim % dec_heads == 0, "dec_dim must be divisible by dec_heads");
  require(enc_dim % 4 == 0 && dec_dim % 4 == 0, "embedding widths must be divisible by 4 (2D sin-cos table)");
  require(enc_depth > 0 && dec_depth > 0, "depths must be positive");
  require(mlp_ratio > 0, "mlp_ratio must be positive");
  require(num_anchors >= 1, "at least one anchor is required");
  require(target_mask >= 0.0 && target_mask < 1.0, "target_mask must lie in [0, 1)");
  require(anchor_mask >= 0.0 && anchor_mask < 1.0, "anchor_mask must lie in [0, 1)");
}

ModelConfig ModelConfig::preset(const std::string& name) {
  ModelConfig c;
  if (name == "vit-s16" || name == "vit-s") return c;
  if (name == "vit-s8") {
    c.patch_size = 8;
    return c;
  }
  if (name == "tiny" || name == "toy") {
    c.image_size = name == "tiny" ? 16 : 32;
    c.patch_size = 4;
    c.enc_dim = name == "tiny" ? 16 : 32;
    c.enc_depth = 2;
    c.enc_heads = 2;
    c.dec_dim = c.enc_dim;
    c.dec_depth = 2;
    c.dec_heads = 2;
    c.num_anchors = 2;
    c.anchor_mask = 0.25;
    return c;
  }
  throw ContractError("unknown model preset '" + name + "'");
}

Tensor sincos_pos_embed(std::size_t dim, std::size_t rows, std::size_t cols) {
  if (dim % 4 != 0) throw ContractError("sincos_pos_embed: dim must be divisible by 4");
  const std::size_t quarter = dim / 4;
  std::vector<float> table(rows * cols * dim);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      float* row = table.data() + (r * cols + c) * dim;
      // First half encodes the column coordinate, second half the row.
      for (std::size_t half = 0; half < 2; ++half) {
        const double pos = static_cast<double>(half == 0 ? c : r);
        float* out = row + half * (dim / 2);
        for (std::size_t i = 0; i < quarter; ++i) {
          const double omega = 1.0 / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(quarter));
          out[i] = static_cast<float>(std::sin(pos * omega));
          out[quarter + i] = static_cast<float>(std::cos(pos * omega));
        }
      }
    }
  }
  return Tensor::from_data({rows * cols, dim}, std::move(table));
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

LinearParams<float> linear_shape(std::size_t in, std::size_t out) {
  return {Tensor::zeros({in, out}, true), Tensor::zeros({out}, true)};
}

NormParams<float> norm_shape(std::size_t d) { return {Tensor::zeros({d}, true), Tensor::zeros({d}, true)}; }

AttentionParams<float> attention_shape(std::size_t d) {
  return {linear_shape(d, d), linear_shape(d, d), linear_shape(d, d), linear_shape(d, d)};
}

template <typename T>
BasicTensor<T> attention(const AttentionParams<T>& p, const BasicTensor<T>& queries, const BasicTensor<T>& context,
                         std::size_t heads) {
  const std::size_t len = queries.dim(0), ctx = context.dim(0), width = queries.dim(1);
  const std::size_t head_dim = width / heads;
  auto q = linear(queries, p.query.weight, p.query.bias);
  auto k = linear(context, p.key.weight, p.key.bias);
  auto v = linear(context, p.value.weight, p.value.bias);
  q = transpose(reshape(q, {len, heads, head_dim}), 0, 1);                   // [H, L, dh]
  k = transpose(transpose(reshape(k, {ctx, heads, head_dim}), 0, 1), 1, 2);  // [H, dh, S]
  v = transpose(reshape(v, {ctx, heads, head_dim}), 0, 1);                   // [H, S, dh]
  auto scores = scale(matmul(q, k), static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim))));
  auto mixed = matmul(softmax(scores, 2), v);  // [H, L, dh]
  mixed = reshape(transpose(mixed, 0, 1), {len, width});
  return linear(mixed, p.out.weight, p.out.bias);
}

template <typename T>
BasicTensor<T> mlp(const LinearParams<T>& fc1, const LinearParams<T>& fc2, const BasicTensor<T>& x) {
  return linear(gelu(linear(x, fc1.weight, fc1.bias)), fc2.weight, fc2.bias);
}

template <typename T>
BasicTensor<T> norm(const NormParams<T>& p, const BasicTensor<T>& x) {
  return layer_norm(x, p.gamma, p.beta, static_cast<T>(1e-6));
}

template <typename T>
BasicTensor<T> encode_with_pos(const BasicModelParams<T>& params, const BasicTensor<T>& tokens,
                               const BasicTensor<T>& pos_rows) {
  const ModelConfig& cfg = params.config;
  auto x = add(linear(tokens, params.patch_embed.weight, params.patch_embed.bias), pos_rows);
  x = concat<T>({params.cls_token, x}, 0);
  for (const auto& block : params.encoder) {
    auto h = norm(block.norm1, x);
    x = add(x, attention(block.attn, h, h, cfg.enc_heads));
    x = add(x, mlp(block.fc1, block.fc2, norm(block.norm2, x)));
  }
  return norm(params.encoder_norm, x);
}

void check_positions(std::span<const std::size_t> positions, std::size_t limit) {
  for (std::size_t p : positions) {
    if (p >= limit) {
      throw ContractError("position " + std::to_string(p) + " outside grid of " + std::to_string(limit) + " cells");
    }
  }
}

// Class-token row (zero positional embedding) followed by the table rows at `positions`.
template <typename T>
BasicTensor<T> positions_with_cls(const BasicTensor<T>& table, std::span<const std::size_t> positions) {
  const std::size_t width = table.dim(1);
  return concat<T>({BasicTensor<T>::zeros({1, width}), gather_rows(table, positions)}, 0);
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t e = config.enc_dim, d = config.dec_dim;
  ModelParams p;
  p.config = config;
  p.patch_embed = linear_shape(config.patch_dim(), e);
  p.cls_token = Tensor::zeros({1, e}, true);
  p.mask_token = Tensor::zeros({1, d}, true);
  for (std::size_t i = 0; i < config.enc_depth; ++i) {
    p.encoder.push_back({norm_shape(e), attention_shape(e), norm_shape(e), linear_shape(e, e * config.mlp_ratio),
                         linear_shape(e * config.mlp_ratio, e)});
  }
  p.encoder_norm = norm_shape(e);
  p.decoder_embed = linear_shape(e, d);
  for (std::size_t i = 0; i < config.dec_depth; ++i) {
    p.decoder.push_back({norm_shape(d), attention_shape(d), norm_shape(d), attention_shape(d), norm_shape(d),
                         linear_shape(d, d * config.mlp_ratio), linear_shape(d * config.mlp_ratio, d)});
  }
  p.decoder_norm = norm_shape(d);
  p.head = linear_shape(d, config.patch_dim());

  Rng rng(seed);
  p.visit([&](const std::string& name, Tensor& t) {
    auto values = t.mutable_data();
    if (ends_with(name, ".gamma")) {
      std::fill(values.begin(), values.end(), 1.0f);
    } else if (ends_with(name, ".weight") || ends_with(name, "_token")) {
      for (float& v : values) v = static_cast<float>(rng.truncated_normal(0.02));
    }
  });
  p.encoder_pos = sincos_pos_embed(e, config.grid(), config.grid());
  p.decoder_pos = sincos_pos_embed(d, config.grid(), config.grid());
  return p;
}

template <typename T>
BasicTensor<T> encode(const BasicModelParams<T>& params, const BasicTensor<T>& visible_tokens,
                      std::span<const std::size_t> positions) {
  if (visible_tokens.rank() != 2 || visible_tokens.dim(0) != positions.size() ||
      visible_tokens.dim(1) != params.config.patch_dim()) {
    throw ContractError("encode: tokens " + shape_string(visible_tokens.shape()) + " do not match " +
                        std::to_string(positions.size()) + " positions of width " +
                        std::to_string(params.config.patch_dim()));
  }
  check_positions(positions, params.encoder_pos.dim(0));
  return encode_with_pos(params, visible_tokens, gather_rows(params.encoder_pos, positions));
}

template <typename T>
BasicTensor<T> concat_anchors(const std::vector<BasicTensor<T>>& anchor_outputs) {
  if (anchor_outputs.empty()) throw ContractError("concat_anchors: at least one anchor is required");
  const std::size_t width = anchor_outputs.front().dim(1);
  for (const auto& a : anchor_outputs) {
    if (a.rank() != 2 || a.dim(1) != width) {
      throw ContractError("concat_anchors: anchor output " + shape_string(a.shape()) + " has mismatched width");
    }
  }
  return concat(anchor_outputs, 0);
}

template <typename T>
BasicTensor<T> decoder_input(const BasicModelParams<T>& params, const BasicTensor<T>& target_encoded,
                             const MaskPlan& plan) {
  if (plan.size() != params.decoder_pos.dim(0)) {
    throw ContractError("decoder_input: plan covers " + std::to_string(plan.size()) + " patches, model grid has " +
                        std::to_string(params.decoder_pos.dim(0)));
  }
  const std::size_t n_out = target_encoded.dim(0);
  auto projected = linear(target_encoded, params.decoder_embed.weight, params.decoder_embed.bias);
  auto cls = slice(projected, 0, 0, 1);
  auto visible = slice(projected, 0, 1, n_out - 1);
  auto grid = add(scatter_restore(visible, params.mask_token, plan), params.decoder_pos);
  return concat<T>({cls, grid}, 0);
}

template <typename T>
BasicTensor<T> anchor_context(const BasicModelParams<T>& params, const std::vector<BasicTensor<T>>& anchor_outputs,
                              const std::vector<MaskPlan>& anchor_plans) {
  if (anchor_outputs.size() != anchor_plans.size()) {
    throw ContractError("anchor_context: " + std::to_string(anchor_outputs.size()) + " anchors but " +
                        std::to_string(anchor_plans.size()) + " mask plans");
  }
  auto joined = concat_anchors(anchor_outputs);
  std::vector<BasicTensor<T>> pos;
  for (std::size_t k = 0; k < anchor_plans.size(); ++k) {
    if (anchor_outputs[k].dim(0) != anchor_plans[k].visible.size() + 1) {
      throw ContractError("anchor_context: anchor " + std::to_string(k) + " output does not match its plan");
    }
    check_positions(anchor_plans[k].visible, params.decoder_pos.dim(0));
    pos.push_back(positions_with_cls(params.decoder_pos, anchor_plans[k].visible));
  }
  return add(linear(joined, params.decoder_embed.weight, params.decoder_embed.bias), concat(pos, 0));
}

template <typename T>
BasicTensor<T> decode(const BasicModelParams<T>& params, const BasicTensor<T>& decoder_tokens,
                      const BasicTensor<T>& anchor_tokens, std::span<const std::size_t> masked) {
  if (!anchor_tokens.defined() || anchor_tokens.rank() != 2 || anchor_tokens.dim(0) == 0) {
    throw ContractError("decode: cross-attention needs at least one anchor token");
  }
  const ModelConfig& cfg = params.config;
  if (decoder_tokens.dim(1) != cfg.dec_dim || anchor_tokens.dim(1) != cfg.dec_dim) {
    throw ContractError("decode: inputs must have width dec_dim = " + std::to_string(cfg.dec_dim));
  }
  auto x = decoder_tokens;
  for (const auto& block : params.decoder) {
    auto h = norm(block.norm1, x);
    x = add(x, attention(block.self_attn, h, h, cfg.dec_heads));
    x = add(x, attention(block.cross_attn, norm(block.norm2, x), anchor_tokens, cfg.dec_heads));
    x = add(x, mlp(block.fc1, block.fc2, norm(block.norm3, x)));
  }
  auto pixels = linear(norm(params.decoder_norm, x), params.head.weight, params.head.bias);
  std::vector<std::size_t> rows(masked.size());
  for (std::size_t i = 0; i < masked.size(); ++i) rows[i] = masked[i] + 1;  // skip class token
  check_positions(masked, decoder_tokens.dim(0) - 1);
  return gather_rows(pixels, rows);
}

Tensor normalize_patches(const Tensor& tokens) {
  const std::size_t n = tokens.dim(0), d = tokens.dim(1);
  const auto v = tokens.data();
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += v[i * d + j];
    mu /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) var += (v[i * d + j] - mu) * (v[i * d + j] - mu);
    var /= static_cast<double>(d > 1 ? d - 1 : 1);
    const double inv = 1.0 / std::sqrt(var + 1e-6);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = static_cast<float>((v[i * d + j] - mu) * inv);
  }
  return Tensor::from_data(tokens.shape(), std::move(out));
}

template <typename T>
BasicTensor<T> reconstruction_loss(const BasicModelParams<T>& params, const SampleInputs& sample) {
  if (sample.anchors.empty()) throw ContractError("reconstruction_loss: at least one anchor view is required");
  if (sample.anchors.size() != sample.anchor_plans.size()) {
    throw ContractError("reconstruction_loss: anchor/plan count mismatch");
  }
  if (sample.target_plan.masked.empty()) throw ContractError("reconstruction_loss: target has no masked patches");
  const MaskedTokens target = apply_mask(sample.target, sample.target_plan);
  auto target_out = encode(params, target.visible.template cast<T>(), sample.target_plan.visible);
  std::vector<BasicTensor<T>> anchor_outs;
  for (std::size_t k = 0; k < sample.anchors.size(); ++k) {
    const MaskedTokens anchor = apply_mask(sample.anchors[k], sample.anchor_plans[k]);
    anchor_outs.push_back(encode(params, anchor.visible.template cast<T>(), sample.anchor_plans[k].visible));
  }
  auto pred = decode(params, decoder_input(params, target_out, sample.target_plan),
                     anchor_context(params, anchor_outs, sample.anchor_plans), sample.target_plan.masked);
  const Tensor goal = params.config.norm_pix ? normalize_patches(target.masked) : target.masked;
  return mse(pred, goal.template cast<T>());
}

FeatureSet extract_features(const ModelParams& params, const Tensor& image, std::string source_id) {
  NoGradGuard no_grad;
  const ModelConfig& cfg = params.config;
  const PatchSequence seq = patchify(image, cfg.patch_size);
  if (seq.token_dim() != cfg.patch_dim()) {
    throw ContractError("extract_features: image has " + std::to_string(seq.channels) + " channels, model expects " +
                        std::to_string(cfg.channels));
  }
  const Tensor pos = (seq.rows == cfg.grid() && seq.cols == cfg.grid())
                         ? params.encoder_pos
                         : sincos_pos_embed(cfg.enc_dim, seq.rows, seq.cols);
  const Tensor out = encode_with_pos(params, seq.tokens, pos);
  FeatureSet fs;
  fs.rows = seq.rows;
  fs.cols = seq.cols;
  fs.source_id = std::move(source_id);
  fs.cls.assign(out.data().begin(), out.data().begin() + static_cast<long>(cfg.enc_dim));
  fs.patches = slice(out, 0, 1, seq.size()).detach();
  return fs;
}

#define CDGMAE_INSTANTIATE_VIT(T)                                                                              \
  template BasicTensor<T> encode(const BasicModelParams<T>&, const BasicTensor<T>&, std::span<const std::size_t>); \
  template BasicTensor<T> concat_anchors(const std::vector<BasicTensor<T>>&);                                  \
  template BasicTensor<T> decoder_input(const BasicModelParams<T>&, const BasicTensor<T>&, const MaskPlan&);   \
  template BasicTensor<T> anchor_context(const BasicModelParams<T>&, const std::vector<BasicTensor<T>>&,       \
                                         const std::vector<MaskPlan>&);                                        \
  template BasicTensor<T> decode(const BasicModelParams<T>&, const BasicTensor<T>&, const BasicTensor<T>&,     \
                                 std::span<const std::size_t>);                                                \
  template BasicTensor<T> reconstruction_loss(const BasicModelParams<T>&, const SampleInputs&);

CDGMAE_INSTANTIATE_VIT(float)
CDGMAE_INSTANTIATE_VIT(double)

#undef CDGMAE_INSTANTIATE_VIT

}  // namespace cdgmae
