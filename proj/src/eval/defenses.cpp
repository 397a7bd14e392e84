#include "gama/defenses.hpp"

#include <algorithm>

namespace gama {

Tensor<float> median_blur(const Tensor<float>& images, int window) {
  if (window < 3 || window % 2 == 0) throw Error(ErrorKind::config, "median_blur: window must be odd and >= 3");
  if (images.ndim() != 3 && images.ndim() != 4) throw Error("median_blur: expected [T,H,W] or [N,T,H,W]");
  const int64_t h = images.dim(images.ndim() - 2), w = images.dim(images.ndim() - 1);
  const int64_t planes = images.numel() / (h * w);
  const int r = window / 2;
  std::vector<float> out(images.numel());
  std::vector<float> buf(static_cast<std::size_t>(window) * window);
  const float* src = images.ptr();
  for (int64_t p = 0; p < planes; ++p) {
    const float* plane = src + p * h * w;
    float* dst = out.data() + p * h * w;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        std::size_t k = 0;
        for (int dy = -r; dy <= r; ++dy) {
          const int64_t yy = std::clamp<int64_t>(y + dy, 0, h - 1);
          for (int dx = -r; dx <= r; ++dx) buf[k++] = plane[yy * w + std::clamp<int64_t>(x + dx, 0, w - 1)];
        }
        std::nth_element(buf.begin(), buf.begin() + k / 2, buf.end());
        dst[y * w + x] = buf[k / 2];
      }
  }
  return Tensor<float>::from(images.shape(), std::move(out));
}

namespace {

/// Temporarily stops recording parameter gradients of a model.
class FreezeGuard {
 public:
  explicit FreezeGuard(const ParamStore& store) : store_(store) {
    for (const auto& e : store_.entries()) was_.push_back(e.tensor.requires_grad());
    store_.set_requires_grad(false);
  }
  ~FreezeGuard() {
    auto& entries = store_.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto t = entries[i].tensor;
      t.set_requires_grad(was_[i]);
    }
  }

 private:
  ParamStore store_;  // shares tensor nodes with the model
  std::vector<bool> was_;
};

}  // namespace

Tensor<float> pgd_attack(const SurrogateClassifier& model, const Tensor<float>& x, const std::vector<float>& labels,
                         const PgdConfig& config) {
  if (!(config.epsilon > 0.0f)) throw Error(ErrorKind::config, "pgd: epsilon must be > 0");
  if (config.iterations < 1) throw Error(ErrorKind::config, "pgd: iterations must be >= 1");
  FreezeGuard freeze(model.params());
  auto adv = x.clone();
  const auto xs = x.data();
  for (int it = 0; it < config.iterations; ++it) {
    auto leaf = adv.detach();
    leaf.set_requires_grad(true);
    const auto loss = classifier_loss(model, model.forward(leaf).logits, labels);
    backward(loss);
    const auto g = leaf.grad();
    std::vector<float> next(leaf.numel());
    const auto cur = leaf.data();
    for (std::size_t i = 0; i < next.size(); ++i) {
      const float sign = g[i] > 0 ? 1.0f : (g[i] < 0 ? -1.0f : 0.0f);
      const float v = cur[i] + config.step * sign;
      next[i] = std::clamp(std::clamp(v, xs[i] - config.epsilon, xs[i] + config.epsilon), 0.0f, 1.0f);
    }
    adv = Tensor<float>::from(x.shape(), std::move(next));
  }
  ensure_finite(adv, "pgd_attack");
  return adv;
}

TrainedSurrogate pgd_train(const SceneDataset& train, const SurrogateConfig& config,
                           const SurrogateTrainConfig& train_config, const PgdConfig& pgd) {
  auto hook = [&](const SurrogateClassifier& model, Tensor<float>& images, const std::vector<float>& labels, int) {
    const int64_t n = images.dim(0);
    const int64_t half = n / 2;
    if (half == 0) return;
    const int64_t per = images.numel() / n;
    const int64_t c = static_cast<int64_t>(labels.size()) / n;
    Shape head_shape = images.shape();
    head_shape[0] = half;
    auto head = Tensor<float>::from(head_shape, std::vector<float>(images.ptr(), images.ptr() + half * per));
    const auto adv = pgd_attack(model, head, std::vector<float>(labels.begin(), labels.begin() + half * c), pgd);
    auto merged = images.vec();
    std::copy(adv.data().begin(), adv.data().end(), merged.begin());
    images = Tensor<float>::from_buffer(images.shape(), std::move(merged));
  };
  auto trained = train_surrogate(train, config, train_config, hook);
  trained.model.metadata["pgd"] = {{"epsilon", pgd.epsilon}, {"step", pgd.step}, {"iterations", pgd.iterations}};
  return trained;
}

}  // namespace gama
