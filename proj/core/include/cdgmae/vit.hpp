#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdgmae/features.hpp"
#include "cdgmae/patch_mask.hpp"
#include "cdgmae/tensor.hpp"

namespace cdgmae {

/// Architecture plus pretext-task settings (anchor count and masking ratios).
struct ModelConfig {
  std::size_t image_size = 224;
  std::size_t patch_size = 16;
  std::size_t channels = 3;
  std::size_t enc_dim = 384;
  std::size_t enc_depth = 12;
  std::size_t enc_heads = 6;
  std::size_t dec_dim = 256;
  std::size_t dec_depth = 4;
  std::size_t dec_heads = 8;
  std::size_t mlp_ratio = 4;
  std::size_t num_anchors = 1;
  double target_mask = 0.90;
  double anchor_mask = 0.0;
  bool norm_pix = false;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }

  /// Throws ContractError on inconsistent settings.
  void validate() const;

  /// Known presets: "vit-s16", "vit-s8", "tiny", "toy".
  static ModelConfig preset(const std::string& name);
};

template <typename T>
struct LinearParams {
  BasicTensor<T> weight;  // [in, out]
  BasicTensor<T> bias;    // [out]
};

template <typename T>
struct NormParams {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
};

template <typename T>
struct AttentionParams {
  LinearParams<T> query, key, value, out;
};

template <typename T>
struct EncoderBlockParams {
  NormParams<T> norm1;
  AttentionParams<T> attn;
  NormParams<T> norm2;
  LinearParams<T> fc1, fc2;
};

template <typename T>
struct DecoderBlockParams {
  NormParams<T> norm1;
  AttentionParams<T> self_attn;
  NormParams<T> norm2;
  AttentionParams<T> cross_attn;
  NormParams<T> norm3;
  LinearParams<T> fc1, fc2;
};

/// All trainable weights of the Siamese encoder and cross-attention decoder.
/// One encoder serves target and anchor passes.
template <typename T>
struct BasicModelParams {
  ModelConfig config;
  LinearParams<T> patch_embed;
  BasicTensor<T> cls_token;   // [1, enc_dim]
  BasicTensor<T> mask_token;  // [1, dec_dim]
  std::vector<EncoderBlockParams<T>> encoder;
  NormParams<T> encoder_norm;
  LinearParams<T> decoder_embed;
  std::vector<DecoderBlockParams<T>> decoder;
  NormParams<T> decoder_norm;
  LinearParams<T> head;
  // Fixed 2D sin-cos tables for the configured grid; not trainable.
  BasicTensor<T> encoder_pos;  // [N, enc_dim]
  BasicTensor<T> decoder_pos;  // [N, dec_dim]

  /// Calls f(name, tensor&) for every trainable tensor in a fixed order.
  template <typename F>
  void visit(F&& f);
  template <typename F>
  void visit(F&& f) const {
    const_cast<BasicModelParams*>(this)->visit([&](const std::string& name, BasicTensor<T>& t) {
      f(name, static_cast<const BasicTensor<T>&>(t));
    });
  }

  std::size_t parameter_count() const;
  /// Deep copy with values converted to U; trainable leaves keep requires_grad.
  template <typename U>
  BasicModelParams<U> cast() const;
};

using ModelParams = BasicModelParams<float>;
using ModelParams64 = BasicModelParams<double>;

/// Truncated normal (sigma 0.02) weights and tokens, zero biases, unit norm scales.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// MAE-style 2D sin-cos table, [rows * cols, dim]; dim must be divisible by 4.
Tensor sincos_pos_embed(std::size_t dim, std::size_t rows, std::size_t cols);

/// Encoder over visible tokens [n, patch_dim] at grid `positions`.
/// Output is [n + 1, enc_dim]: class token first, then tokens in input order.
template <typename T>
BasicTensor<T> encode(const BasicModelParams<T>& params, const BasicTensor<T>& visible_tokens,
                      std::span<const std::size_t> positions);

/// Sequence-axis concatenation of per-anchor encoder outputs, in anchor order.
template <typename T>
BasicTensor<T> concat_anchors(const std::vector<BasicTensor<T>>& anchor_outputs);

/// Decoder input: class token plus the full grid with mask tokens at masked
/// positions, projected to dec_dim with positional embeddings added.
template <typename T>
BasicTensor<T> decoder_input(const BasicModelParams<T>& params, const BasicTensor<T>& target_encoded,
                             const MaskPlan& plan);

/// Cross-attention context: concatenated anchor outputs projected to dec_dim,
/// each visible token with the decoder positional embedding of its cell.
template <typename T>
BasicTensor<T> anchor_context(const BasicModelParams<T>& params, const std::vector<BasicTensor<T>>& anchor_outputs,
                              const std::vector<MaskPlan>& anchor_plans);

/// Decoder blocks (self-attention, cross-attention, MLP; all pre-norm), final
/// norm and pixel head. Returns predictions at `masked` grid positions only.
template <typename T>
BasicTensor<T> decode(const BasicModelParams<T>& params, const BasicTensor<T>& decoder_tokens,
                      const BasicTensor<T>& anchor_tokens, std::span<const std::size_t> masked);

/// Everything one training sample needs: patchified views and their masks.
struct SampleInputs {
  PatchSequence target;
  MaskPlan target_plan;
  std::vector<PatchSequence> anchors;
  std::vector<MaskPlan> anchor_plans;
};

/// Per-patch standardization used when norm_pix is on.
Tensor normalize_patches(const Tensor& tokens);

/// Masked-patch reconstruction loss: mean squared pixel error over the
/// target's masked patches.
template <typename T>
BasicTensor<T> reconstruction_loss(const BasicModelParams<T>& params, const SampleInputs& sample);

/// Unmasked encoder pass; any image whose sides are multiples of the patch size.
FeatureSet extract_features(const ModelParams& params, const Tensor& image, std::string source_id = {});

}  // namespace cdgmae

#include "cdgmae/vit_visit.ipp"
