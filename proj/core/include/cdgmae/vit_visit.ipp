// Template member definitions for BasicModelParams.
#pragma once

namespace cdgmae {

template <typename T>
template <typename F>
void BasicModelParams<T>::visit(F&& f) {
  auto linear = [&](const std::string& name, LinearParams<T>& p) {
    f(name + ".weight", p.weight);
    f(name + ".bias", p.bias);
  };
  auto norm = [&](const std::string& name, NormParams<T>& p) {
    f(name + ".gamma", p.gamma);
    f(name + ".beta", p.beta);
  };
  auto attention = [&](const std::string& name, AttentionParams<T>& p) {
    linear(name + ".query", p.query);
    linear(name + ".key", p.key);
    linear(name + ".value", p.value);
    linear(name + ".out", p.out);
  };
  linear("patch_embed", patch_embed);
  f("cls_token", cls_token);
  f("mask_token", mask_token);
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    const std::string b = "encoder." + std::to_string(i);
    norm(b + ".norm1", encoder[i].norm1);
    attention(b + ".attn", encoder[i].attn);
    norm(b + ".norm2", encoder[i].norm2);
    linear(b + ".fc1", encoder[i].fc1);
    linear(b + ".fc2", encoder[i].fc2);
  }
  norm("encoder_norm", encoder_norm);
  linear("decoder_embed", decoder_embed);
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    const std::string b = "decoder." + std::to_string(i);
    norm(b + ".norm1", decoder[i].norm1);
    attention(b + ".self_attn", decoder[i].self_attn);
    norm(b + ".norm2", decoder[i].norm2);
    attention(b + ".cross_attn", decoder[i].cross_attn);
    norm(b + ".norm3", decoder[i].norm3);
    linear(b + ".fc1", decoder[i].fc1);
    linear(b + ".fc2", decoder[i].fc2);
  }
  norm("decoder_norm", decoder_norm);
  linear("head", head);
}

template <typename T>
std::size_t BasicModelParams<T>::parameter_count() const {
  std::size_t total = 0;
  visit([&](const std::string&, const BasicTensor<T>& t) { total += t.size(); });
  return total;
}

template <typename T>
template <typename U>
BasicModelParams<U> BasicModelParams<T>::cast() const {
  BasicModelParams<U> out;
  out.config = config;
  out.encoder.resize(encoder.size());
  out.decoder.resize(decoder.size());
  std::vector<BasicTensor<U>*> slots;
  out.visit([&](const std::string&, BasicTensor<U>& t) { slots.push_back(&t); });
  std::size_t i = 0;
  visit([&](const std::string&, const BasicTensor<T>& t) { *slots[i++] = t.template cast<U>(); });
  out.encoder_pos = encoder_pos.template cast<U>();
  out.decoder_pos = decoder_pos.template cast<U>();
  return out;
}

}  // namespace cdgmae
