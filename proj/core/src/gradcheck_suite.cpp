#include "cdgmae/gradcheck_suite.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "cdgmae/ops.hpp"
#include "cdgmae/random.hpp"
#include "cdgmae/records.hpp"
#include "cdgmae/synth.hpp"
#include "cdgmae/vit.hpp"

namespace cdgmae {
namespace {

Tensor64 uniform_tensor(const Shape& shape, double lo, double hi, Rng& rng) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor64::from_data(shape, std::move(v));
}

std::size_t dim_between(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

/// loss = sum(op(inputs) * w). Analytic gradient in float, reference in double.
template <typename ShapeFn, typename Op>
GradCheckResult check_op(const std::string& name, ShapeFn shapes_for, Op op, const GradCheckOptions& opt) {
  GradCheckResult result{name, opt.trials, 0.0, opt.primitive_tolerance};
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    Rng rng(mix_seed(mix_seed(opt.seed, std::hash<std::string>{}(name)), trial));
    const std::vector<Shape> shapes = shapes_for(rng);
    std::vector<Tensor64> in64;
    for (const auto& s : shapes) in64.push_back(uniform_tensor(s, -2.0, 2.0, rng));

    Shape out_shape;
    {
      NoGradGuard guard;
      out_shape = op(in64).shape();
    }
    const Tensor64 w64 = uniform_tensor(out_shape, -1.0, 1.0, rng);

    std::vector<Tensor> in32;
    for (const auto& t : in64) in32.push_back(t.cast<float>().set_requires_grad(true));
    const Tensor loss = sum(mul(op(in32), w64.cast<float>()));
    const Gradients grads = backward(loss);

    for (std::size_t k = 0; k < in64.size(); ++k) {
      std::vector<double> analytic(in64[k].size(), 0.0);
      if (grads.contains(in32[k])) {
        const auto g = grads.at(in32[k]).data();
        std::copy(g.begin(), g.end(), analytic.begin());
      }
      auto f = [&]() {
        NoGradGuard guard;
        return sum(mul(op(in64), w64)).item();
      };
      std::vector<double> reference(in64[k].size());
      for (std::size_t i = 0; i < reference.size(); ++i) {
        reference[i] = finite_diff_coordinate(f, in64[k], i, opt.step);
      }
      result.max_relative_error = std::max(result.max_relative_error, relative_error(analytic, reference));
    }
  }
  return result;
}

}  // namespace

std::vector<GradCheckResult> check_primitives(const GradCheckOptions& opt) {
  std::vector<GradCheckResult> out;
  auto matrix = [](Rng& r) { return Shape{dim_between(r, 1, 4), dim_between(r, 1, 5)}; };
  auto same2 = [&](Rng& r) {
    const Shape s = matrix(r);
    return std::vector<Shape>{s, s};
  };
  // Second operand broadcasts along the leading axis.
  auto broadcast2 = [&](Rng& r) {
    const Shape s = matrix(r);
    return std::vector<Shape>{s, Shape{1, s[1]}};
  };
  auto one = [&](Rng& r) { return std::vector<Shape>{matrix(r)}; };
  auto cube = [](Rng& r) {
    return std::vector<Shape>{{dim_between(r, 1, 3), dim_between(r, 1, 4), dim_between(r, 2, 5)}};
  };

  out.push_back(check_op("add", same2, [](const auto& in) { return add(in[0], in[1]); }, opt));
  out.push_back(check_op("add_broadcast", broadcast2, [](const auto& in) { return add(in[0], in[1]); }, opt));
  out.push_back(check_op("sub", broadcast2, [](const auto& in) { return sub(in[0], in[1]); }, opt));
  out.push_back(check_op("mul", same2, [](const auto& in) { return mul(in[0], in[1]); }, opt));
  out.push_back(check_op("mul_broadcast", broadcast2, [](const auto& in) { return mul(in[0], in[1]); }, opt));
  out.push_back(check_op(
      "scale", one,
      [](const auto& in) {
        using T = typename std::decay_t<decltype(in[0])>::value_type;
        return scale(in[0], static_cast<T>(-1.75));
      },
      opt));
  out.push_back(check_op(
      "matmul",
      [](Rng& r) {
        const std::size_t m = dim_between(r, 1, 4), k = dim_between(r, 1, 5), n = dim_between(r, 1, 4);
        return std::vector<Shape>{{m, k}, {k, n}};
      },
      [](const auto& in) { return matmul(in[0], in[1]); }, opt));
  out.push_back(check_op(
      "matmul_batched",
      [](Rng& r) {
        const std::size_t b = dim_between(r, 1, 3), m = dim_between(r, 1, 4), k = dim_between(r, 1, 4),
                          n = dim_between(r, 1, 4);
        return std::vector<Shape>{{b, m, k}, {b, k, n}};
      },
      [](const auto& in) { return matmul(in[0], in[1]); }, opt));
  out.push_back(check_op("softmax_last", cube, [](const auto& in) { return softmax(in[0], 2); }, opt));
  out.push_back(check_op("softmax_axis0", cube, [](const auto& in) { return softmax(in[0], 0); }, opt));
  out.push_back(check_op(
      "layer_norm",
      [](Rng& r) {
        // Width 2 normalizes to a near-constant +-1 and has a vanishing gradient.
        const std::size_t n = dim_between(r, 1, 4), d = dim_between(r, 3, 6);
        return std::vector<Shape>{{n, d}, {d}, {d}};
      },
      [](const auto& in) { return layer_norm(in[0], in[1], in[2]); }, opt));
  out.push_back(check_op("gelu", one, [](const auto& in) { return gelu(in[0]); }, opt));
  out.push_back(check_op("transpose", cube, [](const auto& in) { return transpose(in[0], 0, 2); }, opt));
  out.push_back(check_op(
      "reshape", cube,
      [](const auto& in) { return reshape(in[0], Shape{in[0].dim(0) * in[0].dim(1), in[0].dim(2)}); }, opt));
  out.push_back(check_op(
      "concat",
      [](Rng& r) {
        const std::size_t d = dim_between(r, 1, 4);
        return std::vector<Shape>{{dim_between(r, 1, 3), d}, {dim_between(r, 1, 3), d}, {dim_between(r, 1, 3), d}};
      },
      [](const auto& in) { return concat(in, 0); }, opt));
  out.push_back(check_op(
      "concat_axis1",
      [](Rng& r) {
        const std::size_t n = dim_between(r, 1, 4);
        return std::vector<Shape>{{n, dim_between(r, 1, 3)}, {n, dim_between(r, 1, 3)}};
      },
      [](const auto& in) { return concat(in, 1); }, opt));
  out.push_back(check_op(
      "slice", [](Rng& r) { return std::vector<Shape>{{dim_between(r, 3, 6), dim_between(r, 1, 4)}}; },
      [](const auto& in) { return slice(in[0], 0, 1, in[0].dim(0) - 2); }, opt));
  out.push_back(check_op(
      "gather_rows", [](Rng& r) { return std::vector<Shape>{{dim_between(r, 2, 5), dim_between(r, 1, 4)}}; },
      [](const auto& in) {
        // Repeats exercise gradient accumulation.
        const std::vector<std::size_t> rows = {in[0].dim(0) - 1, 0, 1, 0};
        return gather_rows(in[0], std::span<const std::size_t>(rows));
      },
      opt));
  out.push_back(check_op("sum", cube, [](const auto& in) { return sum(in[0]); }, opt));
  out.push_back(check_op("mean", cube, [](const auto& in) { return mean(in[0]); }, opt));
  out.push_back(check_op("mse", same2, [](const auto& in) { return mse(in[0], in[1]); }, opt));
  out.push_back(check_op(
      "linear",
      [](Rng& r) {
        const std::size_t n = dim_between(r, 1, 4), i = dim_between(r, 1, 5), o = dim_between(r, 1, 4);
        return std::vector<Shape>{{n, i}, {i, o}, {o}};
      },
      [](const auto& in) { return linear(in[0], in[1], in[2]); }, opt));
  return out;
}

GradCheckResult check_model(const GradCheckOptions& opt) {
  ModelConfig cfg = ModelConfig::preset(opt.model_preset);
  cfg.validate();
  GradCheckResult result{"model:" + opt.model_preset, opt.trials, 0.0, opt.model_tolerance};
  const std::size_t n = cfg.num_patches();
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    Rng rng(mix_seed(mix_seed(opt.seed, 0x6d6f64656c), trial));
    ModelParams params = init_params(cfg, rng.next_u64());
    // Move off the initial point so biases and norm scales are generic.
    params.visit([&](const std::string&, Tensor& t) {
      for (float& v : t.mutable_data()) v += static_cast<float>(rng.uniform(-0.05, 0.05));
    });

    const ViewBag bag = gen_views(gen_scene(rng.next_u64(), cfg.image_size).spec, cfg.num_anchors, 0.5);
    SampleInputs sample;
    sample.target = patchify(bag.real, cfg.patch_size);
    sample.target_plan = sample_mask(n, cfg.target_mask, rng.next_u64());
    for (std::size_t a = 0; a < cfg.num_anchors; ++a) {
      sample.anchors.push_back(patchify(bag.views[a], cfg.patch_size));
      sample.anchor_plans.push_back(sample_mask(n, cfg.anchor_mask, rng.next_u64()));
    }

    const Gradients grads = backward(reconstruction_loss(params, sample));
    ModelParams64 p64 = params.cast<double>();
    std::vector<Tensor64*> leaves;
    p64.visit([&](const std::string&, Tensor64& t) { leaves.push_back(&t); });
    std::vector<const Tensor*> leaves32;
    params.visit([&](const std::string&, const Tensor& t) { leaves32.push_back(&t); });

    auto f = [&]() {
      NoGradGuard guard;
      return reconstruction_loss(p64, sample).item();
    };
    // Normwise error over the whole probed gradient vector.
    std::vector<double> analytic, reference;
    for (std::size_t k = 0; k < leaves.size(); ++k) {
      const std::size_t size = leaves[k]->size();
      std::vector<std::size_t> coords;
      if (trial == 0 || size <= opt.sampled_coordinates) {
        coords.resize(size);
        for (std::size_t i = 0; i < size; ++i) coords[i] = i;
      } else {
        for (std::size_t i = 0; i < opt.sampled_coordinates; ++i) coords.push_back(rng.below(size));
      }
      const bool has = grads.contains(*leaves32[k]);
      for (std::size_t i : coords) {
        analytic.push_back(has ? grads.at(*leaves32[k]).data()[i] : 0.0);
        reference.push_back(finite_diff_coordinate(f, *leaves[k], i, opt.step));
      }
    }
    result.max_relative_error = std::max(result.max_relative_error, relative_error(analytic, reference));
  }
  return result;
}

std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckOptions& opt) {
  auto results = check_primitives(opt);
  if (opt.include_model) results.push_back(check_model(opt));
  return results;
}

std::string format_gradcheck_report(const std::vector<GradCheckResult>& results) {
  std::ostringstream os;
  for (const auto& r : results) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-4s %-16s trials=%zu max_rel_err=%s tol=%s\n", r.passed() ? "ok" : "FAIL",
                  r.name.c_str(), r.trials, format_number(r.max_relative_error).c_str(),
                  format_number(r.tolerance).c_str());
    os << buf;
  }
  return os.str();
}

}  // namespace cdgmae
