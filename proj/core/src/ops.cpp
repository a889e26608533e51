#include "cdgmae/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cdgmae/errors.hpp"

namespace cdgmae {
namespace {

template <typename T>
using Node = detail::Node<T>;

Shape leading(const Shape& s, std::size_t drop) { return Shape(s.begin(), s.end() - static_cast<long>(drop)); }

std::size_t prod(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t n = 1;
  for (std::size_t i = begin; i < end; ++i) n *= s[i];
  return n;
}

void check_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                         shape_string(s));
  }
}

// Flat source offsets for every output element of a numpy-style broadcast.
struct BroadcastPlan {
  Shape out;
  bool same = false;
  std::vector<std::size_t> ia, ib;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t r = std::max(a.size(), b.size());
  plan.out.assign(r, 1);
  std::vector<std::size_t> sa(r, 0), sb(r, 0);
  std::size_t stride_a = 1, stride_b = 1;
  for (std::size_t d = r; d-- > 0;) {
    const std::size_t off_a = r - a.size(), off_b = r - b.size();
    const std::size_t da = d >= off_a ? a[d - off_a] : 1;
    const std::size_t db = d >= off_b ? b[d - off_b] : 1;
    if (da != db && da != 1 && db != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(a) + " with " + shape_string(b));
    }
    plan.out[d] = std::max(da, db);
    sa[d] = (da == 1) ? 0 : stride_a;
    sb[d] = (db == 1) ? 0 : stride_b;
    stride_a *= da;
    stride_b *= db;
  }
  const std::size_t n = numel(plan.out);
  plan.ia.resize(n);
  plan.ib.resize(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t o = 0; o < n; ++o) {
    plan.ia[o] = oa;
    plan.ib[o] = ob;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < plan.out[d]) break;
      oa -= sa[d] * plan.out[d];
      ob -= sb[d] * plan.out[d];
      idx[d] = 0;
    }
  }
  return plan;
}

template <typename T>
bool wants_grad(const Node<T>& node, std::size_t input) {
  return node.inputs[input]->requires_grad;
}

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape(), "add"));
  const auto av = a.data(), bv = b.data();
  std::vector<T> out(numel(plan->out));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = plan->same ? av[i] + bv[i] : av[plan->ia[i]] + bv[plan->ib[i]];
  }
  Shape shape = plan->out;
  return make_op_result<T>(std::move(shape), std::move(out), {a, b}, [plan](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants_grad(self, k)) continue;
      auto& g = self.inputs[k]->grad_buffer();
      const auto& idx = k == 0 ? plan->ia : plan->ib;
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[plan->same ? i : idx[i]] += self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape(), "sub"));
  const auto av = a.data(), bv = b.data();
  std::vector<T> out(numel(plan->out));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = plan->same ? av[i] - bv[i] : av[plan->ia[i]] - bv[plan->ib[i]];
  }
  Shape shape = plan->out;
  return make_op_result<T>(std::move(shape), std::move(out), {a, b}, [plan](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants_grad(self, k)) continue;
      auto& g = self.inputs[k]->grad_buffer();
      const auto& idx = k == 0 ? plan->ia : plan->ib;
      const T sign = k == 0 ? T(1) : T(-1);
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[plan->same ? i : idx[i]] += sign * self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape(), "mul"));
  const auto av = a.data(), bv = b.data();
  std::vector<T> out(numel(plan->out));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = plan->same ? av[i] * bv[i] : av[plan->ia[i]] * bv[plan->ib[i]];
  }
  Shape shape = plan->out;
  return make_op_result<T>(std::move(shape), std::move(out), {a, b}, [plan](Node<T>& self) {
    const auto& va = self.inputs[0]->value;
    const auto& vb = self.inputs[1]->value;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const std::size_t ia = plan->same ? i : plan->ia[i];
      const std::size_t ib = plan->same ? i : plan->ib[i];
      if (wants_grad(self, 0)) self.inputs[0]->grad_buffer()[ia] += self.grad[i] * vb[ib];
      if (wants_grad(self, 1)) self.inputs[1]->grad_buffer()[ib] += self.grad[i] * va[ia];
    }
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (T& v : out) v *= factor;
  return make_op_result<T>(a.shape(), std::move(out), {a}, [factor](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) {
    throw DimensionError("matmul: operands must have rank >= 2, got " + shape_string(sa) + " and " +
                         shape_string(sb));
  }
  const std::size_t m = sa[sa.size() - 2], k = sa.back();
  const std::size_t kb = sb[sb.size() - 2], n = sb.back();
  const bool b_shared = sb.size() == 2;
  if (k != kb || (!b_shared && leading(sa, 2) != leading(sb, 2))) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(sa) + " and " + shape_string(sb));
  }
  const std::size_t batch = prod(sa, 0, sa.size() - 2);
  Shape out_shape = leading(sa, 2);
  out_shape.push_back(m);
  out_shape.push_back(n);

  const auto av = a.data(), bv = b.data();
  std::vector<T> out(batch * m * n, T(0));
  for (std::size_t bt = 0; bt < batch; ++bt) {
    const T* A = av.data() + bt * m * k;
    const T* B = bv.data() + (b_shared ? 0 : bt * k * n);
    T* C = out.data() + bt * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const T aip = A[i * k + p];
        for (std::size_t j = 0; j < n; ++j) C[i * n + j] += aip * B[p * n + j];
      }
    }
  }
  return make_op_result<T>(std::move(out_shape), std::move(out), {a, b},
                           [batch, m, k, n, b_shared](Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    const bool ga = self.inputs[0]->requires_grad, gb = self.inputs[1]->requires_grad;
    for (std::size_t bt = 0; bt < batch; ++bt) {
      const T* G = self.grad.data() + bt * m * n;
      const T* A = av.data() + bt * m * k;
      const T* B = bv.data() + (b_shared ? 0 : bt * k * n);
      if (ga) {
        T* dA = self.inputs[0]->grad_buffer().data() + bt * m * k;
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            T acc = T(0);
            for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
            dA[i * k + p] += acc;
          }
        }
      }
      if (gb) {
        T* dB = self.inputs[1]->grad_buffer().data() + (b_shared ? 0 : bt * k * n);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const T aip = A[i * k + p];
            for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += aip * G[i * n + j];
          }
        }
      }
    }
  });
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis) {
  const Shape& s = x.shape();
  check_axis(s, axis, "softmax");
  const std::size_t outer = prod(s, 0, axis), len = s[axis], inner = prod(s, axis + 1, s.size());
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = xv[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      T total = T(0);
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
    }
  }
  return make_op_result<T>(s, std::move(out), {x}, [outer, len, inner](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const auto& y = self.value;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T dot = T(0);
        for (std::size_t j = 0; j < len; ++j) dot += self.grad[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t at = base + j * inner;
          g[at] += y[at] * (self.grad[at] - dot);
        }
      }
    }
  });
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          T eps) {
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("layer_norm: input must have rank >= 1");
  const std::size_t d = s.back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gamma " + shape_string(gamma.shape()) + " / beta " +
                         shape_string(beta.shape()) + " must match last dim of " + shape_string(s));
  }
  if (!(eps > T(0))) throw ContractError("layer_norm: eps must be positive");
  const std::size_t rows = d == 0 ? 0 : x.size() / d;
  const auto xv = x.data(), gv = gamma.data(), bv = beta.data();
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    (*rstd)[r] = static_cast<T>(inv);
    for (std::size_t j = 0; j < d; ++j) {
      const T h = static_cast<T>((row[j] - mu) * inv);
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return make_op_result<T>(s, std::move(out), {x, gamma, beta}, [rows, d, xhat, rstd](Node<T>& self) {
    const auto& gv = self.inputs[1]->value;
    const bool gx = self.inputs[0]->requires_grad;
    const bool gg = self.inputs[1]->requires_grad;
    const bool gb = self.inputs[2]->requires_grad;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* G = self.grad.data() + r * d;
      const T* H = xhat->data() + r * d;
      if (gg) {
        auto& dg = self.inputs[1]->grad_buffer();
        for (std::size_t j = 0; j < d; ++j) dg[j] += G[j] * H[j];
      }
      if (gb) {
        auto& db = self.inputs[2]->grad_buffer();
        for (std::size_t j = 0; j < d; ++j) db[j] += G[j];
      }
      if (gx) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = static_cast<double>(G[j]) * gv[j];
          mean_dh += dh;
          mean_dh_h += dh * H[j];
        }
        mean_dh /= static_cast<double>(d);
        mean_dh_h /= static_cast<double>(d);
        T* dx = self.inputs[0]->grad_buffer().data() + r * d;
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = static_cast<double>(G[j]) * gv[j];
          dx[j] += static_cast<T>((*rstd)[r] * (dh - mean_dh - H[j] * mean_dh_h));
        }
      }
    }
  });
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  constexpr T kC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = static_cast<T>(0.044715);
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T v = xv[i];
    out[i] = T(0.5) * v * (T(1) + std::tanh(kC * (v + kA * v * v * v)));
  }
  return make_op_result<T>(x.shape(), std::move(out), {x}, [](Node<T>& self) {
    const auto& xv = self.inputs[0]->value;
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const T v = xv[i];
      const T t = std::tanh(kC * (v + kA * v * v * v));
      const T dt = kC * (T(1) + T(3) * kA * v * v);
      g[i] += self.grad[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * dt);
    }
  });
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& x, std::size_t axis0, std::size_t axis1) {
  const Shape& s = x.shape();
  check_axis(s, axis0, "transpose");
  check_axis(s, axis1, "transpose");
  Shape out_shape = s;
  std::swap(out_shape[axis0], out_shape[axis1]);
  const std::size_t r = s.size();
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t d = r; d-- > 1;) in_strides[d - 1] = in_strides[d] * s[d];
  std::vector<std::size_t> strides = in_strides;  // input stride for each output axis
  std::swap(strides[axis0], strides[axis1]);

  const std::size_t n = x.size();
  auto source = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t off = 0;
  for (std::size_t o = 0; o < n; ++o) {
    (*source)[o] = off;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      off += strides[d];
      if (idx[d] < out_shape[d]) break;
      off -= strides[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  const auto xv = x.data();
  std::vector<T> out(n);
  for (std::size_t o = 0; o < n; ++o) out[o] = xv[(*source)[o]];
  return make_op_result<T>(std::move(out_shape), std::move(out), {x}, [source](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t o = 0; o < self.grad.size(); ++o) g[(*source)[o]] += self.grad[o];
  });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_op_result<T>(std::move(shape), std::move(out), {x}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& s0 = parts.front().shape();
  check_axis(s0, axis, "concat");
  std::vector<std::size_t> lens;
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == s0[d];
    if (!ok) {
      throw DimensionError("concat: shape " + shape_string(s) + " incompatible with " + shape_string(s0) +
                           " along axis " + std::to_string(axis));
    }
    lens.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = prod(s0, 0, axis), inner = prod(s0, axis + 1, s0.size());
  const std::size_t total = out_shape[axis];
  std::vector<T> out(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto pv = parts[p].data();
    const std::size_t block = lens[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.data() + o * block, block, out.data() + (o * total + offset) * inner);
    }
    offset += lens[p];
  }
  return make_op_result<T>(std::move(out_shape), std::move(out), parts,
                           [lens, outer, inner, total](Node<T>& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < lens.size(); ++p) {
      const std::size_t block = lens[p] * inner;
      if (self.inputs[p]->requires_grad) {
        auto& g = self.inputs[p]->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
          const T* src = self.grad.data() + (o * total + offset) * inner;
          for (std::size_t i = 0; i < block; ++i) g[o * block + i] += src[i];
        }
      }
      offset += lens[p];
    }
  });
}

template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = x.shape();
  check_axis(s, axis, "slice");
  if (start + length > s[axis]) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") exceeds axis " + std::to_string(axis) + " of " + shape_string(s));
  }
  Shape out_shape = s;
  out_shape[axis] = length;
  const std::size_t outer = prod(s, 0, axis), inner = prod(s, axis + 1, s.size()), full = s[axis];
  const auto xv = x.data();
  std::vector<T> out(numel(out_shape));
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.data() + (o * full + start) * inner, length * inner, out.data() + o * length * inner);
  }
  return make_op_result<T>(std::move(out_shape), std::move(out), {x},
                           [outer, inner, full, start, length](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < length * inner; ++i) {
        g[(o * full + start) * inner + i] += self.grad[o * length * inner + i];
      }
    }
  });
}

template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& x, std::span<const std::size_t> rows) {
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("gather_rows: input must have rank >= 1");
  const std::size_t row_size = prod(s, 1, s.size());
  for (std::size_t r : rows) {
    if (r >= s[0]) {
      throw ContractError("gather_rows: row " + std::to_string(r) + " out of range for " + shape_string(s));
    }
  }
  Shape out_shape = s;
  out_shape[0] = rows.size();
  const auto xv = x.data();
  std::vector<T> out(rows.size() * row_size);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(xv.data() + rows[i] * row_size, row_size, out.data() + i * row_size);
  }
  auto index = std::make_shared<std::vector<std::size_t>>(rows.begin(), rows.end());
  return make_op_result<T>(std::move(out_shape), std::move(out), {x}, [index, row_size](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < index->size(); ++i) {
      for (std::size_t j = 0; j < row_size; ++j) g[(*index)[i] * row_size + j] += self.grad[i * row_size + j];
    }
  });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  return make_op_result<T>({}, {total}, {x}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (T& v : g) v += self.grad[0];
  });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  if (x.size() == 0) throw ContractError("mean: empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

template <typename T>
BasicTensor<T> mse(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("mse: prediction " + shape_string(pred.shape()) + " vs target " +
                         shape_string(target.shape()));
  }
  if (pred.size() == 0) throw ContractError("mse: empty operands");
  const auto pv = pred.data(), tv = target.data();
  T total = T(0);
  for (std::size_t i = 0; i < pv.size(); ++i) total += (pv[i] - tv[i]) * (pv[i] - tv[i]);
  const T inv_n = T(1) / static_cast<T>(pv.size());
  return make_op_result<T>({}, {total * inv_n}, {pred, target}, [inv_n](Node<T>& self) {
    const auto& pv = self.inputs[0]->value;
    const auto& tv = self.inputs[1]->value;
    const T coeff = T(2) * inv_n * self.grad[0];
    for (std::size_t k = 0; k < 2; ++k) {
      if (!self.inputs[k]->requires_grad) continue;
      auto& g = self.inputs[k]->grad_buffer();
      const T sign = k == 0 ? T(1) : T(-1);
      for (std::size_t i = 0; i < pv.size(); ++i) g[i] += sign * coeff * (pv[i] - tv[i]);
    }
  });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  return add(matmul(x, weight), bias);
}

namespace {
template <typename T>
double cosine_impl(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) {
    throw DimensionError("cosine_sim: length " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * v[i];
    nu += static_cast<double>(u[i]) * u[i];
    nv += static_cast<double>(v[i]) * v[i];
  }
  nu = std::sqrt(nu);
  nv = std::sqrt(nv);
  if (nu <= 1e-12 || nv <= 1e-12) throw DegenerateInputError("cosine_sim: zero-norm input");
  return std::clamp(dot / (nu * nv), -1.0, 1.0);
}
}  // namespace

double cosine_sim(std::span<const float> u, std::span<const float> v) { return cosine_impl(u, v); }
double cosine_sim(std::span<const double> u, std::span<const double> v) { return cosine_impl(u, v); }

#define CDGMAE_INSTANTIATE_OPS(T)                                                                       \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                              \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                         \
  template BasicTensor<T> softmax(const BasicTensor<T>&, std::size_t);                                  \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                     T);                                                                \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                                  \
  template BasicTensor<T> transpose(const BasicTensor<T>&, std::size_t, std::size_t);                   \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                        \
  template BasicTensor<T> concat(const std::vector<BasicTensor<T>>&, std::size_t);                      \
  template BasicTensor<T> slice(const BasicTensor<T>&, std::size_t, std::size_t, std::size_t);          \
  template BasicTensor<T> gather_rows(const BasicTensor<T>&, std::span<const std::size_t>);             \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                   \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                                  \
  template BasicTensor<T> mse(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);

CDGMAE_INSTANTIATE_OPS(float)
CDGMAE_INSTANTIATE_OPS(double)

#undef CDGMAE_INSTANTIATE_OPS

}  // namespace cdgmae
