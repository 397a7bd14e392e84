#pragma once

#include "gama/generator.hpp"
#include "gama/surrogate.hpp"

namespace gama {

/// Per-channel sliding-window median with edge-replicate padding.
/// Accepts [T,H,W] or [N,T,H,W]; `window` must be odd and >= 3.
Tensor<float> median_blur(const Tensor<float>& images, int window);

struct PgdConfig {
  float epsilon = kDefaultEpsilon;
  float step = 2.5f / 255.0f;
  int iterations = 5;
};

/// Iterated sign-gradient ascent on the classifier loss, projected onto the
/// eps-ball around `x` and [0,1] after every step. No random start.
Tensor<float> pgd_attack(const SurrogateClassifier& model, const Tensor<float>& x, const std::vector<float>& labels,
                         const PgdConfig& config);

/// Adversarial training: in every batch the first half of the images is
/// replaced by PGD examples crafted against the current weights.
TrainedSurrogate pgd_train(const SceneDataset& train, const SurrogateConfig& config,
                           const SurrogateTrainConfig& train_config, const PgdConfig& pgd);

}  // namespace gama
