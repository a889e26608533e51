#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cdgmae/tensor.hpp"

namespace cdgmae {

// Differentiable primitives. Every function is instantiated for float and
// double. Binary elementwise ops broadcast with numpy semantics. Reductions
// run in a fixed loop order so results are reproducible bit-for-bit.

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor);

/// [..., m, k] x [..., k, n] -> [..., m, n]. A rank-2 right operand is
/// broadcast over the leading dims of the left one.
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Numerically stable softmax (max subtracted) along `axis`.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis);

/// Normalizes over the last dimension, then applies gamma * xhat + beta.
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, T eps = T(1e-6));

/// GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& x, std::size_t axis0, std::size_t axis1);
template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);
template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis);
template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);

/// Rows of x (axis 0) selected by index; repeats are allowed and their
/// gradients accumulate.
template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& x, std::span<const std::size_t> rows);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x);

/// mean((pred - target)^2) over all elements.
template <typename T>
BasicTensor<T> mse(const BasicTensor<T>& pred, const BasicTensor<T>& target);

/// x @ weight + bias, weight stored [in, out].
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

/// Cosine similarity. Throws DegenerateInputError if either norm is <= 1e-12.
double cosine_sim(std::span<const float> u, std::span<const float> v);
double cosine_sim(std::span<const double> u, std::span<const double> v);

}  // namespace cdgmae
