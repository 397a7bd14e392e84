#include "gama/ops.hpp"

#include <algorithm>
#include <cmath>

namespace gama {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

template <typename T>
bool needs_grad(std::initializer_list<const Tensor<T>*> inputs) {
  if (!grad_enabled()) return false;
  for (const auto* t : inputs)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

template <typename T, typename Fn>
void attach(Tensor<T>& out, Fn&& fn) {
  auto& node = *out.node();
  node.requires_grad = true;
  node.is_leaf = false;
  node.backward = std::forward<Fn>(fn);
  Tape<T>::current().record(out.node());
}

template <typename T>
bool wants(const NodePtr<T>& n) {
  return n && n->requires_grad;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw Error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
}

template <typename T>
int64_t last_dim(const Tensor<T>& x) {
  return x.shape().back();
}

template <typename T>
Shape row_shape(const Tensor<T>& x) {
  if (x.ndim() <= 1) return {1};
  return Shape(x.shape().begin(), x.shape().end() - 1);
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.ndim() == 2 && b.ndim() == 2, "matmul: operands must be 2-d");
  if (a.dim(1) != b.dim(0))
    throw Error("matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int64_t m = a.dim(0), n = b.dim(1);
  auto out = Tensor<T>::zeros({m, n});
  out.matrix().noalias() = a.matrix() * b.matrix();
  if (needs_grad<T>({&a, &b})) {
    attach(out, [an = a.node(), bn = b.node(), m, k = a.dim(1), n](detail::Node<T>& self) {
      Eigen::Map<const MatR<T>> g(self.grad.data(), m, n);
      Eigen::Map<const MatR<T>> am(an->data.data(), m, k);
      Eigen::Map<const MatR<T>> bm(bn->data.data(), k, n);
      if (wants(an)) Eigen::Map<MatR<T>>(an->grad_buffer().data(), m, k).noalias() += g * bm.transpose();
      if (wants(bn)) Eigen::Map<MatR<T>>(bn->grad_buffer().data(), k, n).noalias() += am.transpose() * g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require(x.ndim() == 2 && weight.ndim() == 2, "linear: expects x[N,in] and weight[out,in]");
  if (x.dim(1) != weight.dim(1))
    throw Error("linear: shape mismatch " + shape_str(x.shape()) + " vs weight " +
                shape_str(weight.shape()));
  const int64_t n = x.dim(0), in = x.dim(1), outd = weight.dim(0);
  const bool has_bias = bias.defined();
  if (has_bias) require(bias.numel() == outd, "linear: bias length mismatch");
  auto out = Tensor<T>::zeros({n, outd});
  auto om = out.matrix();
  om.noalias() = x.matrix() * weight.matrix().transpose();
  if (has_bias) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(bias.ptr(), outd);
    om.rowwise() += bv;
  }
  if (needs_grad<T>({&x, &weight, &bias})) {
    attach(out, [xn = x.node(), wn = weight.node(), bn = has_bias ? bias.node() : nullptr, n, in,
                 outd](detail::Node<T>& self) {
      Eigen::Map<const MatR<T>> g(self.grad.data(), n, outd);
      if (wants(xn)) {
        Eigen::Map<const MatR<T>> wm(wn->data.data(), outd, in);
        Eigen::Map<MatR<T>>(xn->grad_buffer().data(), n, in).noalias() += g * wm;
      }
      if (wants(wn)) {
        Eigen::Map<const MatR<T>> xm(xn->data.data(), n, in);
        Eigen::Map<MatR<T>>(wn->grad_buffer().data(), outd, in).noalias() += g.transpose() * xm;
      }
      if (wants(bn)) {
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bn->grad_buffer().data(), outd) +=
            g.colwise().sum();
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int pad) {
  const bool batched = x.ndim() == 4;
  require(batched || x.ndim() == 3, "conv2d: input must be CHW or NCHW, got " + shape_str(x.shape()));
  require(weight.ndim() == 4, "conv2d: weight must be [Cout,Cin,k,k]");
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(pad >= 0, "conv2d: padding must be >= 0");
  const int64_t n = batched ? x.dim(0) : 1;
  const int64_t c = x.shape()[batched ? 1 : 0];
  const int64_t h = x.shape()[batched ? 2 : 1];
  const int64_t w = x.shape()[batched ? 3 : 2];
  const int64_t co = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != c || weight.dim(3) != k)
    throw Error("conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                shape_str(x.shape()));
  if (k > h + 2 * pad || k > w + 2 * pad)
    throw Error("conv2d: kernel larger than padded input");
  const bool has_bias = bias.defined();
  if (has_bias) require(bias.numel() == co, "conv2d: bias length mismatch");

  const int64_t ho = (h + 2 * pad - k) / stride + 1;
  const int64_t wo = (w + 2 * pad - k) / stride + 1;
  const int64_t l = ho * wo, nl = n * l, rows = c * k * k;

  auto cols = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows * nl), T(0));
  const T* xp = x.ptr();
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t ki = 0; ki < k; ++ki)
      for (int64_t kj = 0; kj < k; ++kj) {
        T* row = cols->data() + ((ci * k + ki) * k + kj) * nl;
        for (int64_t b = 0; b < n; ++b) {
          const T* plane = xp + (b * c + ci) * h * w;
          T* dst = row + b * l;
          for (int64_t oy = 0; oy < ho; ++oy) {
            const int64_t iy = oy * stride - pad + ki;
            if (iy < 0 || iy >= h) continue;
            for (int64_t ox = 0; ox < wo; ++ox) {
              const int64_t ix = ox * stride - pad + kj;
              if (ix >= 0 && ix < w) dst[oy * wo + ox] = plane[iy * w + ix];
            }
          }
        }
      }

  Eigen::Map<const MatR<T>> wm(weight.ptr(), co, rows);
  Eigen::Map<const MatR<T>> cm(cols->data(), rows, nl);
  MatR<T> prod = wm * cm;

  Shape out_shape = batched ? Shape{n, co, ho, wo} : Shape{co, ho, wo};
  auto out = Tensor<T>::zeros(out_shape);
  T* op = out.ptr();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t o = 0; o < co; ++o) {
      const T bv = has_bias ? bias.ptr()[o] : T(0);
      const T* src = prod.data() + o * nl + b * l;
      T* dst = op + (b * co + o) * l;
      for (int64_t i = 0; i < l; ++i) dst[i] = src[i] + bv;
    }

  if (needs_grad<T>({&x, &weight, &bias})) {
    auto keep_cols = weight.requires_grad() ? cols : nullptr;
    attach(out, [xn = x.node(), wn = weight.node(), bn = has_bias ? bias.node() : nullptr,
                 keep_cols, n, c, h, w, co, k, ho, wo, l, nl, rows, stride,
                 pad](detail::Node<T>& self) {
      MatR<T> g(co, nl);
      for (int64_t b = 0; b < n; ++b)
        for (int64_t o = 0; o < co; ++o)
          std::copy_n(self.grad.data() + (b * co + o) * l, l, g.data() + o * nl + b * l);
      if (wants(wn)) {
        Eigen::Map<const MatR<T>> cm(keep_cols->data(), rows, nl);
        Eigen::Map<MatR<T>>(wn->grad_buffer().data(), co, rows).noalias() += g * cm.transpose();
      }
      if (wants(bn)) {
        auto& gb = bn->grad_buffer();
        for (int64_t o = 0; o < co; ++o) gb[o] += g.row(o).sum();
      }
      if (wants(xn)) {
        Eigen::Map<const MatR<T>> wm(wn->data.data(), co, rows);
        MatR<T> dcols = wm.transpose() * g;
        T* gx = xn->grad_buffer().data();
        for (int64_t ci = 0; ci < c; ++ci)
          for (int64_t ki = 0; ki < k; ++ki)
            for (int64_t kj = 0; kj < k; ++kj) {
              const T* row = dcols.data() + ((ci * k + ki) * k + kj) * nl;
              for (int64_t b = 0; b < n; ++b) {
                T* plane = gx + (b * c + ci) * h * w;
                const T* src = row + b * l;
                for (int64_t oy = 0; oy < ho; ++oy) {
                  const int64_t iy = oy * stride - pad + ki;
                  if (iy < 0 || iy >= h) continue;
                  for (int64_t ox = 0; ox < wo; ++ox) {
                    const int64_t ix = ox * stride - pad + kj;
                    if (ix >= 0 && ix < w) plane[iy * w + ix] += src[oy * wo + ox];
                  }
                }
              }
            }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  const bool batched = x.ndim() == 4;
  require(batched || x.ndim() == 3, "upsample_nearest2x: input must be CHW or NCHW");
  const int64_t planes = batched ? x.dim(0) * x.dim(1) : x.dim(0);
  const int64_t h = x.shape()[x.ndim() - 2], w = x.shape().back();
  Shape shape = x.shape();
  shape[shape.size() - 2] = 2 * h;
  shape.back() = 2 * w;
  auto out = Tensor<T>::zeros(shape);
  const T* src = x.ptr();
  T* dst = out.ptr();
  for (int64_t p = 0; p < planes; ++p)
    for (int64_t y = 0; y < 2 * h; ++y)
      for (int64_t xx = 0; xx < 2 * w; ++xx)
        dst[(p * 2 * h + y) * 2 * w + xx] = src[(p * h + y / 2) * w + xx / 2];
  if (needs_grad<T>({&x})) {
    attach(out, [xn = x.node(), planes, h, w](detail::Node<T>& self) {
      T* gx = xn->grad_buffer().data();
      const T* g = self.grad.data();
      for (int64_t p = 0; p < planes; ++p)
        for (int64_t y = 0; y < 2 * h; ++y)
          for (int64_t xx = 0; xx < 2 * w; ++xx)
            gx[(p * h + y / 2) * w + xx / 2] += g[(p * 2 * h + y) * 2 * w + xx];
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require(x.ndim() == 4, "global_avg_pool: input must be NCHW");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  auto out = Tensor<T>::zeros({n, c});
  for (int64_t i = 0; i < n * c; ++i) {
    T acc = 0;
    const T* p = x.ptr() + i * hw;
    for (int64_t j = 0; j < hw; ++j) acc += p[j];
    out.ptr()[i] = acc / T(hw);
  }
  if (needs_grad<T>({&x})) {
    attach(out, [xn = x.node(), nc = n * c, hw](detail::Node<T>& self) {
      T* gx = xn->grad_buffer().data();
      for (int64_t i = 0; i < nc; ++i) {
        const T g = self.grad[i] / T(hw);
        for (int64_t j = 0; j < hw; ++j) gx[i * hw + j] += g;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, T eps) {
  require(x.ndim() == 4, "instance_norm: input must be NCHW");
  const int64_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  require(hw > 1, "instance_norm: needs more than one pixel per plane");
  auto out = Tensor<T>::zeros(x.shape());
  auto inv_std = std::make_shared<std::vector<T>>(nc);
  for (int64_t i = 0; i < nc; ++i) {
    const T* p = x.ptr() + i * hw;
    T mu = 0, var = 0;
    for (int64_t j = 0; j < hw; ++j) mu += p[j];
    mu /= T(hw);
    for (int64_t j = 0; j < hw; ++j) var += (p[j] - mu) * (p[j] - mu);
    var /= T(hw);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    T* y = out.ptr() + i * hw;
    for (int64_t j = 0; j < hw; ++j) y[j] = (p[j] - mu) * is;
  }
  if (needs_grad<T>({&x})) {
    attach(out, [xn = x.node(), inv_std, nc, hw](detail::Node<T>& self) {
      T* gx = xn->grad_buffer().data();
      const T* y = self.data.data();
      for (int64_t i = 0; i < nc; ++i) {
        const T* g = self.grad.data() + i * hw;
        const T* yi = y + i * hw;
        T mg = 0, mgy = 0;
        for (int64_t j = 0; j < hw; ++j) {
          mg += g[j];
          mgy += g[j] * yi[j];
        }
        mg /= T(hw);
        mgy /= T(hw);
        for (int64_t j = 0; j < hw; ++j) gx[i * hw + j] += (*inv_std)[i] * (g[j] - mg - yi[j] * mgy);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, const Activation& kind) {
  auto out = Tensor<T>::zeros(x.shape());
  const int64_t count = x.numel();
  const T* in = x.ptr();
  T* y = out.ptr();
  const T slope = static_cast<T>(kind.slope), gain = static_cast<T>(kind.scale);
  switch (kind.kind) {
    case ActivationKind::leaky_relu:
      for (int64_t i = 0; i < count; ++i) y[i] = in[i] >= T(0) ? gain * in[i] : gain * slope * in[i];
      break;
    case ActivationKind::sigmoid:
      for (int64_t i = 0; i < count; ++i) y[i] = T(1) / (T(1) + std::exp(-in[i]));
      break;
    case ActivationKind::tanh:
      for (int64_t i = 0; i < count; ++i) y[i] = std::tanh(in[i]);
      break;
  }
  if (needs_grad<T>({&x})) {
    attach(out, [xn = x.node(), kind, slope, gain, count](detail::Node<T>& self) {
      T* gx = xn->grad_buffer().data();
      const T* g = self.grad.data();
      const T* y = self.data.data();
      const T* in = xn->data.data();
      switch (kind.kind) {
        case ActivationKind::leaky_relu:
          for (int64_t i = 0; i < count; ++i) gx[i] += g[i] * (in[i] >= T(0) ? gain : gain * slope);
          break;
        case ActivationKind::sigmoid:
          for (int64_t i = 0; i < count; ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
          break;
        case ActivationKind::tanh:
          for (int64_t i = 0; i < count; ++i) gx[i] += g[i] * (T(1) - y[i] * y[i]);
          break;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  auto out = Tensor<T>::zeros(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out.ptr()[i] = std::exp(x.ptr()[i]);
  if (needs_grad<T>({&x})) {
    attach(out, [xn = x.node()](detail::Node<T>& self) {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * self.data[i];
    });
  }
  return out;
}

namespace {

template <typename T, typename Fwd, typename Bwd>
Tensor<T> binary_elementwise(const Tensor<T>& a, const Tensor<T>& b, const char* name, Fwd fwd,
                             Bwd bwd) {
  require_same_shape(a, b, name);
  auto out = Tensor<T>::zeros(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out.ptr()[i] = fwd(a.ptr()[i], b.ptr()[i]);
  if (needs_grad<T>({&a, &b})) {
    attach(out, [an = a.node(), bn = b.node(), bwd](detail::Node<T>& self) {
      const std::size_t count = self.grad.size();
      T* ga = wants(an) ? an->grad_buffer().data() : nullptr;
      T* gb = wants(bn) ? bn->grad_buffer().data() : nullptr;
      for (std::size_t i = 0; i < count; ++i) {
        auto [da, db] = bwd(an->data[i], bn->data[i]);
        if (ga) ga[i] += self.grad[i] * da;
        if (gb) gb[i] += self.grad[i] * db;
      }
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_elementwise(
      a, b, "add", [](T u, T v) { return u + v; },
      [](T, T) { return std::pair<T, T>{T(1), T(1)}; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_elementwise(
      a, b, "sub", [](T u, T v) { return u - v; },
      [](T, T) { return std::pair<T, T>{T(1), T(-1)}; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_elementwise(
      a, b, "mul", [](T u, T v) { return u * v; },
      [](T u, T v) { return std::pair<T, T>{v, u}; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  auto out = Tensor<T>::zeros(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out.ptr()[i] = x.ptr()[i] * factor;
  if (needs_grad<T>({&x})) {
    attach(out, [xn = x.node(), factor](detail::Node<T>& self) {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * factor;
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset) {
  auto out = Tensor<T>::zeros(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out.ptr()[i] = x.ptr()[i] + offset;
  if (needs_grad<T>({&x})) {
    attach(out, [xn = x.node()](detail::Node<T>& self) {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul_by_scalar_tensor(const Tensor<T>& x, const Tensor<T>& s) {
  require(s.numel() == 1, "mul_by_scalar_tensor: scale must have one element");
  const T sv = s.item();
  auto out = Tensor<T>::zeros(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out.ptr()[i] = x.ptr()[i] * sv;
  if (needs_grad<T>({&x, &s})) {
    attach(out, [xn = x.node(), sn = s.node()](detail::Node<T>& self) {
      const T sv = sn->data[0];
      if (wants(xn)) {
        auto& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * sv;
      }
      if (wants(sn)) {
        T acc = 0;
        for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * xn->data[i];
        sn->grad_buffer()[0] += acc;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw Error("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  auto out = Tensor<T>::from_buffer(std::move(shape), x.vec());
  if (needs_grad<T>({&x})) {
    attach(out, [xn = x.node()](detail::Node<T>& self) {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require(x.ndim() == 2, "transpose: tensor must be 2-d");
  const int64_t r = x.dim(0), c = x.dim(1);
  auto out = Tensor<T>::zeros({c, r});
  out.matrix() = x.matrix().transpose();
  if (needs_grad<T>({&x})) {
    attach(out, [xn = x.node(), r, c](detail::Node<T>& self) {
      Eigen::Map<const MatR<T>> g(self.grad.data(), c, r);
      Eigen::Map<MatR<T>>(xn->grad_buffer().data(), r, c) += g.transpose();
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  auto out = Tensor<T>::scalar(acc);
  if (needs_grad<T>({&x})) {
    attach(out, [xn = x.node()](detail::Node<T>& self) {
      auto& gx = xn->grad_buffer();
      for (auto& g : gx) g += self.grad[0];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> row_sum(const Tensor<T>& x) {
  const int64_t k = last_dim(x), rows = x.numel() / k;
  auto out = Tensor<T>::zeros(row_shape(x));
  for (int64_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (int64_t j = 0; j < k; ++j) acc += x.ptr()[r * k + j];
    out.ptr()[r] = acc;
  }
  if (needs_grad<T>({&x})) {
    attach(out, [xn = x.node(), k, rows](detail::Node<T>& self) {
      auto& gx = xn->grad_buffer();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < k; ++j) gx[r * k + j] += self.grad[r];
    });
  }
  return out;
}

template <typename T>
Tensor<T> row_l2_norm(const Tensor<T>& x) {
  const int64_t k = last_dim(x), rows = x.numel() / k;
  auto out = Tensor<T>::zeros(row_shape(x));
  for (int64_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (int64_t j = 0; j < k; ++j) acc += x.ptr()[r * k + j] * x.ptr()[r * k + j];
    out.ptr()[r] = std::sqrt(acc);
  }
  if (needs_grad<T>({&x})) {
    attach(out, [xn = x.node(), k, rows](detail::Node<T>& self) {
      auto& gx = xn->grad_buffer();
      for (int64_t r = 0; r < rows; ++r) {
        const T norm = self.data[r];
        if (norm <= T(0)) continue;
        for (int64_t j = 0; j < k; ++j) gx[r * k + j] += self.grad[r] * xn->data[r * k + j] / norm;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> normalize_l2(const Tensor<T>& x) {
  const int64_t k = last_dim(x), rows = x.numel() / k;
  auto out = Tensor<T>::zeros(x.shape());
  auto norms = std::make_shared<std::vector<T>>(rows);
  for (int64_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (int64_t j = 0; j < k; ++j) acc += x.ptr()[r * k + j] * x.ptr()[r * k + j];
    const T norm = std::sqrt(acc);
    if (!(static_cast<double>(norm) > kNormEps)) throw Error("degenerate embedding");
    (*norms)[r] = norm;
    for (int64_t j = 0; j < k; ++j) out.ptr()[r * k + j] = x.ptr()[r * k + j] / norm;
  }
  if (needs_grad<T>({&x})) {
    attach(out, [xn = x.node(), norms, k, rows](detail::Node<T>& self) {
      auto& gx = xn->grad_buffer();
      for (int64_t r = 0; r < rows; ++r) {
        const T* y = self.data.data() + r * k;
        const T* g = self.grad.data() + r * k;
        T dot = 0;
        for (int64_t j = 0; j < k; ++j) dot += y[j] * g[j];
        const T inv = T(1) / (*norms)[r];
        for (int64_t j = 0; j < k; ++j) gx[r * k + j] += (g[j] - y[j] * dot) * inv;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> cosine_similarity(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "cosine_similarity");
  const int64_t k = last_dim(a), rows = a.numel() / k;
  auto out = Tensor<T>::zeros(row_shape(a));
  // per row: |a|, |b|
  auto norms = std::make_shared<std::vector<T>>(2 * rows);
  for (int64_t r = 0; r < rows; ++r) {
    T aa = 0, bb = 0, ab = 0;
    for (int64_t j = 0; j < k; ++j) {
      const T u = a.ptr()[r * k + j], v = b.ptr()[r * k + j];
      aa += u * u;
      bb += v * v;
      ab += u * v;
    }
    const T na = std::sqrt(aa), nb = std::sqrt(bb);
    if (!(static_cast<double>(na) > kNormEps) || !(static_cast<double>(nb) > kNormEps))
      throw Error("degenerate embedding");
    (*norms)[2 * r] = na;
    (*norms)[2 * r + 1] = nb;
    out.ptr()[r] = ab / (na * nb);
  }
  if (needs_grad<T>({&a, &b})) {
    attach(out, [an = a.node(), bn = b.node(), norms, k, rows](detail::Node<T>& self) {
      for (int64_t r = 0; r < rows; ++r) {
        const T na = (*norms)[2 * r], nb = (*norms)[2 * r + 1];
        const T cs = self.data[r], g = self.grad[r];
        const T* av = an->data.data() + r * k;
        const T* bv = bn->data.data() + r * k;
        if (wants(an)) {
          T* ga = an->grad_buffer().data() + r * k;
          for (int64_t j = 0; j < k; ++j) ga[j] += g * (bv[j] / (na * nb) - cs * av[j] / (na * na));
        }
        if (wants(bn)) {
          T* gb = bn->grad_buffer().data() + r * k;
          for (int64_t j = 0; j < k; ++j) gb[j] += g * (av[j] / (na * nb) - cs * bv[j] / (nb * nb));
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> project_linf(const Tensor<T>& raw, const Tensor<T>& x, T eps) {
  require_same_shape(raw, x, "project_linf");
  require(eps > T(0), "project_linf: eps must be positive");
  auto out = Tensor<T>::zeros(x.shape());
  const int64_t count = x.numel();
  auto pass = std::make_shared<std::vector<uint8_t>>(count);
  for (int64_t i = 0; i < count; ++i) {
    const T xv = x.ptr()[i], rv = raw.ptr()[i];
    const T v = std::clamp(std::min(xv + eps, std::max(xv - eps, rv)), T(0), T(1));
    out.ptr()[i] = v;
    (*pass)[i] = v == rv;
  }
  if (needs_grad<T>({&raw})) {
    attach(out, [rn = raw.node(), pass](detail::Node<T>& self) {
      auto& gr = rn->grad_buffer();
      for (std::size_t i = 0; i < gr.size(); ++i)
        if ((*pass)[i]) gr[i] += self.grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const std::vector<T>& targets, T prob_floor) {
  if (static_cast<int64_t>(targets.size()) != logits.numel())
    throw Error("bce_with_logits: " + std::to_string(targets.size()) + " targets for " +
                std::to_string(logits.numel()) + " logits");
  const int64_t count = logits.numel();
  auto probs = std::make_shared<std::vector<T>>(count);
  auto clipped = std::make_shared<std::vector<uint8_t>>(count);
  T acc = 0;
  for (int64_t i = 0; i < count; ++i) {
    const T l = logits.ptr()[i];
    T p = T(1) / (T(1) + std::exp(-l));
    (*clipped)[i] = p < prob_floor || p > T(1) - prob_floor;
    p = std::clamp(p, prob_floor, T(1) - prob_floor);
    (*probs)[i] = p;
    const T y = targets[i];
    acc -= y * std::log(p) + (T(1) - y) * std::log(T(1) - p);
  }
  auto out = Tensor<T>::scalar(acc / static_cast<T>(count));
  if (needs_grad<T>({&logits})) {
    attach(out, [ln = logits.node(), probs, clipped, targets, count](detail::Node<T>& self) {
      auto& gl = ln->grad_buffer();
      const T g = self.grad[0] / static_cast<T>(count);
      for (int64_t i = 0; i < count; ++i)
        if (!(*clipped)[i]) gl[i] += g * ((*probs)[i] - targets[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets) {
  require(logits.ndim() == 2, "cross_entropy: logits must be [N,M]");
  const int64_t n = logits.dim(0), m = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != n) throw Error("cross_entropy: target count mismatch");
  auto soft = std::make_shared<std::vector<T>>(n * m);
  T acc = 0;
  for (int64_t r = 0; r < n; ++r) {
    const int t = targets[r];
    if (t < 0 || t >= m) throw Error("cross_entropy: target index out of range");
    const T* row = logits.ptr() + r * m;
    const T mx = *std::max_element(row, row + m);
    T z = 0;
    for (int64_t j = 0; j < m; ++j) z += std::exp(row[j] - mx);
    for (int64_t j = 0; j < m; ++j) (*soft)[r * m + j] = std::exp(row[j] - mx) / z;
    acc -= row[t] - mx - std::log(z);
  }
  auto out = Tensor<T>::scalar(acc / static_cast<T>(n));
  if (needs_grad<T>({&logits})) {
    attach(out, [ln = logits.node(), soft, targets, n, m](detail::Node<T>& self) {
      auto& gl = ln->grad_buffer();
      const T g = self.grad[0] / static_cast<T>(n);
      for (int64_t r = 0; r < n; ++r)
        for (int64_t j = 0; j < m; ++j)
          gl[r * m + j] += g * ((*soft)[r * m + j] - (j == targets[r] ? T(1) : T(0)));
    });
  }
  return out;
}

template <typename T>
Tensor<T> embedding_mean(const Tensor<T>& table, const std::vector<std::vector<int>>& sequences) {
  require(table.ndim() == 2, "embedding_mean: table must be [V,E]");
  const int64_t vocab = table.dim(0), e = table.dim(1);
  const int64_t n = static_cast<int64_t>(sequences.size());
  require(n > 0, "embedding_mean: no sequences");
  auto out = Tensor<T>::zeros({n, e});
  for (int64_t r = 0; r < n; ++r) {
    const auto& seq = sequences[r];
    require(!seq.empty(), "embedding_mean: empty token sequence");
    for (int tok : seq) {
      if (tok < 0 || tok >= vocab) throw Error("embedding_mean: token id out of range");
      for (int64_t j = 0; j < e; ++j) out.ptr()[r * e + j] += table.ptr()[tok * e + j];
    }
    for (int64_t j = 0; j < e; ++j) out.ptr()[r * e + j] /= static_cast<T>(seq.size());
  }
  if (needs_grad<T>({&table})) {
    attach(out, [tn = table.node(), sequences, e](detail::Node<T>& self) {
      auto& gt = tn->grad_buffer();
      for (std::size_t r = 0; r < sequences.size(); ++r) {
        const T inv = T(1) / static_cast<T>(sequences[r].size());
        for (int tok : sequences[r])
          for (int64_t j = 0; j < e; ++j) gt[tok * e + j] += self.grad[r * e + j] * inv;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& items) {
  require(!items.empty(), "stack: no tensors");
  Shape shape = items.front().shape();
  std::vector<T> data;
  data.reserve(items.size() * items.front().numel());
  for (const auto& t : items) {
    if (t.shape() != shape) throw Error("stack: shape mismatch");
    data.insert(data.end(), t.vec().begin(), t.vec().end());
  }
  shape.insert(shape.begin(), static_cast<int64_t>(items.size()));
  return Tensor<T>::from(std::move(shape), std::move(data));
}

#define GAMA_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);      \
  template Tensor<T> upsample_nearest2x(const Tensor<T>&);                                        \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                           \
  template Tensor<T> instance_norm(const Tensor<T>&, T);                                          \
  template Tensor<T> activation(const Tensor<T>&, const Activation&);                             \
  template Tensor<T> exp(const Tensor<T>&);                                                       \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> scale(const Tensor<T>&, T);                                                  \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                             \
  template Tensor<T> mul_by_scalar_tensor(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                            \
  template Tensor<T> transpose(const Tensor<T>&);                                                 \
  template Tensor<T> sum(const Tensor<T>&);                                                       \
  template Tensor<T> mean(const Tensor<T>&);                                                      \
  template Tensor<T> row_sum(const Tensor<T>&);                                                   \
  template Tensor<T> row_l2_norm(const Tensor<T>&);                                               \
  template Tensor<T> normalize_l2(const Tensor<T>&);                                              \
  template Tensor<T> cosine_similarity(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> project_linf(const Tensor<T>&, const Tensor<T>&, T);                         \
  template Tensor<T> bce_with_logits(const Tensor<T>&, const std::vector<T>&, T);                 \
  template Tensor<T> cross_entropy(const Tensor<T>&, const std::vector<int>&);                    \
  template Tensor<T> embedding_mean(const Tensor<T>&, const std::vector<std::vector<int>>&);      \
  template Tensor<T> stack(const std::vector<Tensor<T>>&);

GAMA_INSTANTIATE_OPS(float)
GAMA_INSTANTIATE_OPS(double)

}  // namespace gama
