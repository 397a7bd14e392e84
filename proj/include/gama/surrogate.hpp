#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gama/checkpoint.hpp"
#include "gama/layers.hpp"
#include "gama/scene.hpp"

namespace gama {

enum class Task { multi_label, single_label };
std::string task_name(Task task);
Task task_from_name(const std::string& name);

/// Backbone families used to emulate cross-architecture transfer:
///   0 shallow-wide: two stride-2 convs, 32 -> 64 channels
///   1 deep-narrow:  four convs, 16 -> 16 -> 32 -> 32 channels
///   2 custom-block: stride-2 stem, one residual block, stride-2 conv to 48
inline constexpr int kNumArchitectures = 3;

struct SurrogateConfig {
  int architecture_id = 0;
  int num_classes = 6;
  int feature_dim = 64;
  CanvasDims input;
  Task task = Task::multi_label;
};

/// Multi-label classifier f. The designated feature layer is a K-dim linear
/// projection of the pooled backbone; the head maps it to C logits.
class SurrogateClassifier {
 public:
  struct Output {
    Tensor<float> logits;   // [N,C]
    Tensor<float> feature;  // [N,K], not normalized
  };

  SurrogateClassifier(const SurrogateConfig& config, uint64_t seed);

  /// images: [N,T,H,W] (or one [T,H,W] image) matching the training shape.
  Output forward(const Tensor<float>& images) const;

  const SurrogateConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  nlohmann::json metadata;

  ModelCheckpoint to_checkpoint() const;
  static SurrogateClassifier from_checkpoint(const ModelCheckpoint& ckpt);

 private:
  SurrogateConfig config_;
  ParamStore params_;
  std::vector<Conv2dLayer> convs_;
  LinearLayer feature_;
  LinearLayer head_;
};

struct SurrogateTrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double lr = 2e-3;
  uint64_t seed = 1;
};

struct TrainingCurve {
  std::vector<double> epoch_loss;
  double initial_loss = 0.0;
};

/// Hook that may rewrite a training batch in place before the update step
/// (adversarial training plugs in here).
using BatchHook = std::function<void(const SurrogateClassifier&, Tensor<float>& images,
                                     const std::vector<float>& labels, int step)>;

/// Binary cross-entropy over C sigmoid outputs (multi-label) or softmax
/// cross-entropy against the first active label (single-label).
Tensor<float> classifier_loss(const SurrogateClassifier& model, const Tensor<float>& logits,
                              const std::vector<float>& labels);

struct TrainedSurrogate {
  SurrogateClassifier model;
  TrainingCurve curve;
};

TrainedSurrogate train_surrogate(const SceneDataset& train, const SurrogateConfig& config,
                                 const SurrogateTrainConfig& train_config, const BatchHook& hook = {});

/// Sigmoid (multi-label) or softmax (single-label) scores, no gradient.
Tensor<float> predict_scores(const SurrogateClassifier& model, const Tensor<float>& images);

}  // namespace gama
