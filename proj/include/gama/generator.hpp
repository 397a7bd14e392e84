#pragma once

#include <vector>

#include "gama/checkpoint.hpp"
#include "gama/layers.hpp"

namespace gama {

/// Default perturbation budget: 10 on the 0-255 scale.
inline constexpr float kDefaultEpsilon = 10.0f / 255.0f;

struct GeneratorConfig {
  int channels = 3;
  int base_width = 8;
  int res_blocks = 2;
};

/// Encoder-decoder perturbation generator G: two stride-2 downsampling convs,
/// residual blocks at 1/4 resolution, two nearest-upsample + conv stages and
/// a bias-free 3x3 head over instance-normalized features, squashed to [0,1]
/// by (tanh + 1) / 2.
class PerturbationGenerator {
 public:
  PerturbationGenerator(const GeneratorConfig& config, uint64_t seed);

  /// Unprojected output in [0,1], same shape as `x`.
  Tensor<float> raw(const Tensor<float>& x) const;
  /// Projected adversarial image: clamp_[0,1](min(x + eps, max(x - eps, raw))).
  Tensor<float> forward(const Tensor<float>& x, float eps) const;

  const GeneratorConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  nlohmann::json metadata;

  ModelCheckpoint to_checkpoint() const;
  static PerturbationGenerator from_checkpoint(const ModelCheckpoint& ckpt);

 private:
  GeneratorConfig config_;
  ParamStore params_;
  Conv2dLayer stem_, down1_, down2_;
  std::vector<std::pair<Conv2dLayer, Conv2dLayer>> blocks_;
  Conv2dLayer up1_, up2_, head_;
};

}  // namespace gama
