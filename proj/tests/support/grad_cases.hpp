#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gama/gradcheck.hpp"
#include "gama/losses.hpp"
#include "gama/ops.hpp"
#include "gama/rng.hpp"

namespace gama::testing {

using T64 = Tensor<double>;

struct GradInstance {
  ScalarFn fn;
  T64 point;
};

struct GradCase {
  std::string name;
  std::function<GradInstance(Pcg64&)> make;
};

inline T64 random_tensor(Pcg64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return T64::from(std::move(shape), std::move(v));
}

/// Values bounded away from zero so piecewise ops never straddle a kink
/// within the finite-difference step.
inline T64 away_from_zero(Pcg64& rng, Shape shape, double margin = 0.05) {
  auto t = random_tensor(rng, std::move(shape));
  for (auto& x : t.data()) x = (x < 0 ? -1.0 : 1.0) * (margin + std::abs(x));
  return t;
}

inline T64 unit_rows(Pcg64& rng, int64_t rows, int64_t k) {
  auto t = random_tensor(rng, {rows, k});
  for (int64_t r = 0; r < rows; ++r) {
    double n = 0;
    for (int64_t j = 0; j < k; ++j) n += t.ptr()[r * k + j] * t.ptr()[r * k + j];
    n = std::sqrt(n);
    for (int64_t j = 0; j < k; ++j) t.ptr()[r * k + j] /= n;
  }
  return t;
}

/// Reduces an arbitrary output to a scalar with fixed random weights, so every
/// output coordinate contributes a distinct amount.
inline ScalarFn probe(Pcg64& rng, std::function<T64(const T64&)> op, const Shape& out_shape) {
  auto w = random_tensor(rng, out_shape);
  return [op, w](const T64& x) { return sum(mul(op(x), w)); };
}

inline int dim_between(Pcg64& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(hi - lo + 1)); }

inline std::vector<GradCase> gradient_cases() {
  std::vector<GradCase> cases;
  auto add_case = [&](std::string name, std::function<GradInstance(Pcg64&)> make) {
    cases.push_back({std::move(name), std::move(make)});
  };

  add_case("matmul_lhs", [](Pcg64& rng) {
    const int n = dim_between(rng, 1, 4), k = dim_between(rng, 1, 5), m = dim_between(rng, 1, 4);
    auto b = random_tensor(rng, {k, m});
    return GradInstance{probe(rng, [b](const T64& a) { return matmul(a, b); }, {n, m}), random_tensor(rng, {n, k})};
  });
  add_case("matmul_rhs", [](Pcg64& rng) {
    const int n = dim_between(rng, 1, 4), k = dim_between(rng, 1, 5), m = dim_between(rng, 1, 4);
    auto a = random_tensor(rng, {n, k});
    return GradInstance{probe(rng, [a](const T64& b) { return matmul(a, b); }, {n, m}), random_tensor(rng, {k, m})};
  });
  add_case("linear_input", [](Pcg64& rng) {
    const int n = dim_between(rng, 1, 4), in = dim_between(rng, 1, 5), out = dim_between(rng, 1, 4);
    auto w = random_tensor(rng, {out, in});
    auto b = random_tensor(rng, {out});
    return GradInstance{probe(rng, [w, b](const T64& x) { return linear(x, w, b); }, {n, out}),
                        random_tensor(rng, {n, in})};
  });
  add_case("linear_weight", [](Pcg64& rng) {
    const int n = dim_between(rng, 1, 4), in = dim_between(rng, 1, 5), out = dim_between(rng, 1, 4);
    auto x = random_tensor(rng, {n, in});
    auto b = random_tensor(rng, {out});
    return GradInstance{probe(rng, [x, b](const T64& w) { return linear(x, w, b); }, {n, out}),
                        random_tensor(rng, {out, in})};
  });
  add_case("linear_bias", [](Pcg64& rng) {
    const int n = dim_between(rng, 1, 4), in = dim_between(rng, 1, 5), out = dim_between(rng, 1, 4);
    auto x = random_tensor(rng, {n, in});
    auto w = random_tensor(rng, {out, in});
    return GradInstance{probe(rng, [x, w](const T64& b) { return linear(x, w, b); }, {n, out}),
                        random_tensor(rng, {out})};
  });

  struct ConvShape {
    int n, ci, co, h, w, k, stride, pad;
    int64_t oh() const { return (h + 2 * pad - k) / stride + 1; }
    int64_t ow() const { return (w + 2 * pad - k) / stride + 1; }
  };
  auto conv_shape = [](Pcg64& rng) {
    ConvShape s{dim_between(rng, 1, 2), dim_between(rng, 1, 3), dim_between(rng, 1, 3), dim_between(rng, 3, 6),
                dim_between(rng, 3, 6), 1 + 2 * dim_between(rng, 0, 1), dim_between(rng, 1, 2), dim_between(rng, 0, 1)};
    s.h = std::max(s.h, s.k);
    s.w = std::max(s.w, s.k);
    return s;
  };
  add_case("conv2d_input", [conv_shape](Pcg64& rng) {
    const auto s = conv_shape(rng);
    auto w = random_tensor(rng, {s.co, s.ci, s.k, s.k});
    auto b = random_tensor(rng, {s.co});
    return GradInstance{
        probe(rng, [w, b, s](const T64& x) { return conv2d(x, w, b, s.stride, s.pad); }, {s.n, s.co, s.oh(), s.ow()}),
        random_tensor(rng, {s.n, s.ci, s.h, s.w})};
  });
  add_case("conv2d_weight", [conv_shape](Pcg64& rng) {
    const auto s = conv_shape(rng);
    auto x = random_tensor(rng, {s.n, s.ci, s.h, s.w});
    auto b = random_tensor(rng, {s.co});
    return GradInstance{
        probe(rng, [x, b, s](const T64& w) { return conv2d(x, w, b, s.stride, s.pad); }, {s.n, s.co, s.oh(), s.ow()}),
        random_tensor(rng, {s.co, s.ci, s.k, s.k})};
  });
  add_case("conv2d_bias", [conv_shape](Pcg64& rng) {
    const auto s = conv_shape(rng);
    auto x = random_tensor(rng, {s.n, s.ci, s.h, s.w});
    auto w = random_tensor(rng, {s.co, s.ci, s.k, s.k});
    return GradInstance{
        probe(rng, [x, w, s](const T64& b) { return conv2d(x, w, b, s.stride, s.pad); }, {s.n, s.co, s.oh(), s.ow()}),
        random_tensor(rng, {s.co})};
  });
  add_case("upsample_nearest2x", [](Pcg64& rng) {
    const int n = dim_between(rng, 1, 2), c = dim_between(rng, 1, 3), h = dim_between(rng, 1, 4),
              w = dim_between(rng, 1, 4);
    return GradInstance{probe(rng, [](const T64& x) { return upsample_nearest2x(x); }, {n, c, 2 * h, 2 * w}),
                        random_tensor(rng, {n, c, h, w})};
  });
  add_case("global_avg_pool", [](Pcg64& rng) {
    const int n = dim_between(rng, 1, 3), c = dim_between(rng, 1, 4), h = dim_between(rng, 1, 4),
              w = dim_between(rng, 1, 4);
    return GradInstance{probe(rng, [](const T64& x) { return global_avg_pool(x); }, {n, c}),
                        random_tensor(rng, {n, c, h, w})};
  });
  add_case("instance_norm", [](Pcg64& rng) {
    const int n = dim_between(rng, 1, 2), c = dim_between(rng, 1, 3), h = dim_between(rng, 2, 4),
              w = dim_between(rng, 2, 4);
    return GradInstance{probe(rng, [](const T64& x) { return instance_norm(x); }, {n, c, h, w}),
                        random_tensor(rng, {n, c, h, w})};
  });

  auto elementwise = [&](std::string name, std::function<T64(const T64&)> op, bool avoid_zero) {
    add_case(std::move(name), [op, avoid_zero](Pcg64& rng) {
      const Shape shape{dim_between(rng, 1, 4), dim_between(rng, 1, 5)};
      return GradInstance{probe(rng, op, shape), avoid_zero ? away_from_zero(rng, shape) : random_tensor(rng, shape)};
    });
  };
  elementwise("leaky_relu", [](const T64& x) { return leaky_relu(x, 0.2, 1.5); }, true);
  elementwise("relu", [](const T64& x) { return relu(x); }, true);
  elementwise("sigmoid", [](const T64& x) { return sigmoid(scale(x, 3.0)); }, false);
  elementwise("tanh", [](const T64& x) { return tanh(scale(x, 2.0)); }, false);
  elementwise("exp", [](const T64& x) { return exp(x); }, false);
  elementwise("scale", [](const T64& x) { return scale(x, -1.7); }, false);
  elementwise("add_scalar", [](const T64& x) { return mul(add_scalar(x, 0.3), x); }, false);
  elementwise("mul_self", [](const T64& x) { return mul(x, x); }, false);
  elementwise("add_self", [](const T64& x) { return add(x, scale(x, 2.0)); }, false);
  elementwise("sub_self", [](const T64& x) { return sub(mul(x, x), x); }, false);

  add_case("mul_by_scalar_tensor", [](Pcg64& rng) {
    const Shape shape{dim_between(rng, 1, 4), dim_between(rng, 1, 4)};
    auto s = random_tensor(rng, {1});
    return GradInstance{probe(rng, [s](const T64& x) { return mul_by_scalar_tensor(x, s); }, shape),
                        random_tensor(rng, shape)};
  });
  add_case("mul_by_scalar_tensor_scale", [](Pcg64& rng) {
    const Shape shape{dim_between(rng, 1, 4), dim_between(rng, 1, 4)};
    auto x = random_tensor(rng, shape);
    return GradInstance{probe(rng, [x](const T64& s) { return mul_by_scalar_tensor(x, s); }, shape),
                        random_tensor(rng, {1})};
  });
  add_case("reshape_transpose", [](Pcg64& rng) {
    const int r = dim_between(rng, 1, 4), c = dim_between(rng, 1, 4);
    return GradInstance{probe(rng, [r, c](const T64& x) { return transpose(reshape(x, {r, c})); }, {c, r}),
                        random_tensor(rng, {r * c})};
  });
  add_case("sum_mean", [](Pcg64& rng) {
    const Shape shape{dim_between(rng, 1, 4), dim_between(rng, 1, 4)};
    return GradInstance{[](const T64& x) { return add(sum(mul(x, x)), scale(mean(x), 3.0)); },
                        random_tensor(rng, shape)};
  });
  add_case("row_sum", [](Pcg64& rng) {
    const int r = dim_between(rng, 1, 4), c = dim_between(rng, 1, 5);
    return GradInstance{probe(rng, [](const T64& x) { return row_sum(x); }, {r}), random_tensor(rng, {r, c})};
  });
  add_case("row_l2_norm", [](Pcg64& rng) {
    const int r = dim_between(rng, 1, 4), c = dim_between(rng, 1, 5);
    return GradInstance{probe(rng, [](const T64& x) { return row_l2_norm(x); }, {r}), away_from_zero(rng, {r, c})};
  });
  add_case("normalize_l2", [](Pcg64& rng) {
    const int r = dim_between(rng, 1, 4), c = dim_between(rng, 1, 5);
    return GradInstance{probe(rng, [](const T64& x) { return normalize_l2(x); }, {r, c}), away_from_zero(rng, {r, c})};
  });
  add_case("cosine_similarity", [](Pcg64& rng) {
    const int r = dim_between(rng, 1, 4), c = dim_between(rng, 1, 5);
    auto b = away_from_zero(rng, {r, c});
    return GradInstance{probe(rng, [b](const T64& a) { return cosine_similarity(a, b); }, {r}),
                        away_from_zero(rng, {r, c})};
  });
  add_case("project_linf", [](Pcg64& rng) {
    const Shape shape{dim_between(rng, 1, 3), dim_between(rng, 1, 3), dim_between(rng, 2, 4), dim_between(rng, 2, 4)};
    const double eps = 0.1;
    auto x = random_tensor(rng, shape, 0.0, 1.0);
    // Keep `raw` clear of every clipping boundary (x +- eps, 0, 1).
    auto raw = random_tensor(rng, shape, 0.0, 1.0);
    for (int64_t i = 0; i < raw.numel(); ++i) {
      auto& r = raw.ptr()[i];
      const double xi = x.ptr()[i];
      for (double edge : {xi - eps, xi + eps, 0.0, 1.0})
        if (std::abs(r - edge) < 0.01) r = edge + (r < edge ? -0.01 : 0.01);
    }
    return GradInstance{probe(rng, [x, eps](const T64& r) { return project_linf(r, x, eps); }, shape), raw};
  });
  add_case("bce_with_logits", [](Pcg64& rng) {
    const int n = dim_between(rng, 1, 4), c = dim_between(rng, 1, 5);
    std::vector<double> y(n * c);
    for (auto& v : y) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    return GradInstance{[y](const T64& z) { return bce_with_logits(z, y); }, random_tensor(rng, {n, c}, -4, 4)};
  });
  add_case("cross_entropy", [](Pcg64& rng) {
    const int n = dim_between(rng, 1, 4), c = dim_between(rng, 2, 5);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.below(c));
    return GradInstance{[y](const T64& z) { return cross_entropy(z, y); }, random_tensor(rng, {n, c}, -3, 3)};
  });
  add_case("embedding_mean", [](Pcg64& rng) {
    const int vocab = dim_between(rng, 2, 6), e = dim_between(rng, 1, 4), n = dim_between(rng, 1, 3);
    std::vector<std::vector<int>> seqs(n);
    for (auto& s : seqs) {
      s.resize(dim_between(rng, 1, 4));
      for (auto& t : s) t = static_cast<int>(rng.below(vocab));
    }
    return GradInstance{probe(rng, [seqs](const T64& table) { return embedding_mean(table, seqs); }, {n, e}),
                        random_tensor(rng, {vocab, e})};
  });

  // Attack objectives, differentiated with respect to the perturbed features
  // (raw, i.e. before the unit normalization applied in training).
  add_case("loss_s", [](Pcg64& rng) {
    const int n = dim_between(rng, 1, 4), k = dim_between(rng, 2, 8);
    auto z = unit_rows(rng, n, k);
    return GradInstance{[z](const T64& za) { return loss_s(z, normalize_l2(za)); }, away_from_zero(rng, {n, k})};
  });
  add_case("loss_img", [](Pcg64& rng) {
    const int n = dim_between(rng, 1, 4), k = dim_between(rng, 2, 8);
    auto rho = unit_rows(rng, n, k);
    return GradInstance{[rho](const T64& za) { return loss_img(rho, normalize_l2(za)); }, away_from_zero(rng, {n, k})};
  });
  add_case("loss_txt", [](Pcg64& rng) {
    const int n = dim_between(rng, 1, 4), k = dim_between(rng, 2, 8);
    const auto z = unit_rows(rng, n, k), rho = unit_rows(rng, n, k);
    // Both hinge regimes occur; resample rows whose distance sits on the kink.
    T64 za;
    for (;;) {
      za = away_from_zero(rng, {n, k});
      NoGradGuard g;
      const auto d = row_l2_norm(sub(normalize_l2(za), z));
      bool ok = true;
      for (double v : d.data()) ok &= std::abs(v - 1.0) > 0.02;
      if (ok) break;
    }
    return GradInstance{[z, rho](const T64& x) { return loss_txt(normalize_l2(x), z, rho, 1.0); }, za};
  });
  for (auto m : {AttackMethod::gap_bce, AttackMethod::cda_rel_bce}) {
    add_case("baseline_" + method_name(m), [m](Pcg64& rng) {
      const int n = dim_between(rng, 1, 4), c = dim_between(rng, 1, 5);
      auto clean = random_tensor(rng, {n, c}, -3, 3);
      std::vector<double> y(n * c);
      for (auto& v : y) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
      return GradInstance{[m, clean, y](const T64& adv) { return baseline_loss(m, clean, adv, y); },
                          random_tensor(rng, {n, c}, -3, 3)};
    });
  }
  return cases;
}

struct GradCaseResult {
  std::string name;
  int instances = 0;
  double worst = 0.0;
};

/// Runs `instances` random draws of every case; worst is the max relative error.
inline std::vector<GradCaseResult> run_gradient_cases(int instances, uint64_t seed, double h = 1e-4) {
  std::vector<GradCaseResult> out;
  uint64_t sub = 0;
  for (const auto& c : gradient_cases()) {
    auto rng = make_rng(seed, RngStream::sampling, 9000 + sub++);
    GradCaseResult r{c.name, instances, 0.0};
    for (int i = 0; i < instances; ++i) {
      auto inst = c.make(rng);
      r.worst = std::max(r.worst, finite_diff_check(inst.fn, inst.point, h));
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace gama::testing
