#include <doctest.h>

#include <cmath>

#include "gama/optim.hpp"
#include "support/grad_cases.hpp"

using namespace gama;
using gama::testing::random_tensor;

namespace {

// Plain loop references, written independently of the Eigen-backed ops.
std::vector<double> matmul_loops(const Tensor<double>& a, const Tensor<double>& b) {
  const int64_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<double> c(n * m, 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j)
      for (int64_t p = 0; p < k; ++p) c[i * m + j] += a.ptr()[i * k + p] * b.ptr()[p * m + j];
  return c;
}

std::vector<double> conv_loops(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int stride,
                               int pad) {
  const int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t co = w.dim(0), k = w.dim(2);
  const int64_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> y(n * co * oh * ow, 0.0);
  for (int64_t s = 0; s < n; ++s)
    for (int64_t o = 0; o < co; ++o)
      for (int64_t r = 0; r < oh; ++r)
        for (int64_t q = 0; q < ow; ++q) {
          double acc = b.defined() ? b.ptr()[o] : 0.0;
          for (int64_t c = 0; c < ci; ++c)
            for (int64_t u = 0; u < k; ++u)
              for (int64_t v = 0; v < k; ++v) {
                const int64_t iy = r * stride + u - pad, ix = q * stride + v - pad;
                if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
                acc += w.ptr()[((o * ci + c) * k + u) * k + v] * x.ptr()[((s * ci + c) * h + iy) * wd + ix];
              }
          y[((s * co + o) * oh + r) * ow + q] = acc;
        }
  return y;
}

}  // namespace

TEST_CASE("matmul agrees with a triple loop") {
  Pcg64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(6)), k = 1 + static_cast<int>(rng.below(6)),
              m = 1 + static_cast<int>(rng.below(6));
    auto a = random_tensor(rng, {n, k}), b = random_tensor(rng, {k, m});
    const auto got = matmul(a, b);
    const auto want = matmul_loops(a, b);
    REQUIRE(got.shape() == Shape{n, m});
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(got.vec()[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d agrees with a direct six-loop convolution") {
  Pcg64 rng(12);
  for (int stride : {1, 2})
    for (int pad : {0, 1})
      for (int k : {1, 3}) {
        auto x = random_tensor(rng, {2, 3, 7, 6});
        auto w = random_tensor(rng, {4, 3, k, k});
        auto b = random_tensor(rng, {4});
        const auto got = conv2d(x, w, b, stride, pad);
        const auto want = conv_loops(x, w, b, stride, pad);
        REQUIRE(got.numel() == static_cast<int64_t>(want.size()));
        for (std::size_t i = 0; i < want.size(); ++i) CHECK(got.vec()[i] == doctest::Approx(want[i]).epsilon(1e-12));
        const auto no_bias = conv2d(x, w, Tensor<double>(), stride, pad);
        const auto want_nb = conv_loops(x, w, Tensor<double>(), stride, pad);
        for (std::size_t i = 0; i < want_nb.size(); ++i) CHECK(no_bias.vec()[i] == doctest::Approx(want_nb[i]));
      }
}

TEST_CASE("instance_norm standardizes every sample-channel plane") {
  Pcg64 rng(13);
  auto x = random_tensor(rng, {2, 3, 4, 5}, -2, 5);
  const auto y = instance_norm(x);
  for (int p = 0; p < 6; ++p) {
    double m = 0, v = 0;
    for (int i = 0; i < 20; ++i) m += y.ptr()[p * 20 + i] / 20;
    for (int i = 0; i < 20; ++i) v += (y.ptr()[p * 20 + i] - m) * (y.ptr()[p * 20 + i] - m) / 20;
    CHECK(m == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("analytic gradients match central differences for every primitive") {
  for (const auto& r : gama::testing::run_gradient_cases(8, 101)) {
    INFO(r.name);
    CHECK(r.worst < 1e-3);
  }
}

TEST_CASE("gradients accumulate across reuse of one input") {
  auto x = Tensor<double>::from({3}, {1.0, -2.0, 0.5});
  x.set_requires_grad(true);
  auto y = sum(add(mul(x, x), x));  // d/dx = 2x + 1
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(3.0));
  CHECK(x.grad()[1] == doctest::Approx(-3.0));
  CHECK(x.grad()[2] == doctest::Approx(2.0));
}

TEST_CASE("no-grad mode records nothing") {
  auto x = Tensor<double>::from({2}, {1.0, 2.0});
  x.set_requires_grad(true);
  {
    NoGradGuard g;
    auto y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
    CHECK(Tape<double>::current().size() == 0);
  }
  CHECK(grad_enabled());
}

TEST_CASE("project_linf keeps the result inside the budget and [0,1]") {
  Pcg64 rng(14);
  auto x = random_tensor(rng, {1, 3, 8, 8}, 0, 1);
  auto raw = random_tensor(rng, {1, 3, 8, 8}, -1, 2);
  const float eps = 10.0f / 255.0f;
  const auto y = project_linf(raw, x, static_cast<double>(eps));
  for (int64_t i = 0; i < x.numel(); ++i) {
    CHECK(std::abs(y.ptr()[i] - x.ptr()[i]) <= eps + 1e-12);
    CHECK(y.ptr()[i] >= 0.0);
    CHECK(y.ptr()[i] <= 1.0);
  }
}

TEST_CASE("normalize_l2 rejects a zero row") {
  auto x = Tensor<double>::from({2, 2}, {1.0, 0.0, 0.0, 0.0});
  CHECK_THROWS_WITH_AS(normalize_l2(x), doctest::Contains("degenerate embedding"), Error);
}

TEST_CASE("shape mismatches are internal errors") {
  auto a = Tensor<double>::zeros({2, 3}), b = Tensor<double>::zeros({2, 3});
  CHECK_THROWS_AS(matmul(a, b), Error);
  CHECK_THROWS_AS(loss_img(a, Tensor<double>::zeros({2, 4})), Error);
}

TEST_CASE("Adam step matches a hand computation") {
  auto p = Tensor<double>::from({2}, {1.0, -1.0});
  p.set_requires_grad(true);
  AdamOptions o{0.1, 0.9, 0.999, 1e-8};
  Adam<double> adam({p}, o);
  std::vector<double> m(2, 0), v(2, 0), w{1.0, -1.0};
  for (int t = 1; t <= 3; ++t) {
    adam.zero_grad();
    backward(sum(mul(p, p)));  // g = 2p
    adam.step();
    for (int j = 0; j < 2; ++j) {
      const double g = 2 * w[j];
      m[j] = 0.9 * m[j] + 0.1 * g;
      v[j] = 0.999 * v[j] + 0.001 * g * g;
      const double mh = m[j] / (1 - std::pow(0.9, t)), vh = v[j] / (1 - std::pow(0.999, t));
      w[j] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    }
    CHECK(p.data()[0] == doctest::Approx(w[0]).epsilon(1e-12));
    CHECK(p.data()[1] == doctest::Approx(w[1]).epsilon(1e-12));
  }
}

TEST_CASE("PCG64 is deterministic and streams are independent") {
  auto a = make_rng(5, RngStream::init), b = make_rng(5, RngStream::init), c = make_rng(5, RngStream::sampling);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);

  Pcg64 stepped(9, 3), jumped(9, 3);
  for (int i = 0; i < 1000; ++i) stepped.next_u64();
  jumped.advance(1000);
  CHECK(stepped.next_u64() == jumped.next_u64());

  Pcg64 u(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    CHECK(u.below(7) < 7u);
  }
}
