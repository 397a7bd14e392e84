#pragma once

#include <string>
#include <vector>

#include "gama/checkpoint.hpp"
#include "gama/layers.hpp"
#include "gama/scene.hpp"

namespace gama {

inline const std::string kDefaultPromptPrefix = "a photo depicts";

/// Prefix words plus "and"; class names are appended after these.
std::vector<std::string> base_vocabulary();
std::vector<std::string> split_words(const std::string& text);

/// "a photo depicts disk and cross" for classes {disk, cross}.
std::string make_prompt(const std::string& prefix, const std::vector<std::string>& names);

struct EncoderConfig {
  int embed_dim = 64;
  int token_dim = 32;
  int text_hidden = 64;
  CanvasDims input;
  std::vector<std::string> vocabulary;
};

inline constexpr double kMinTemperature = 1e-3;
inline constexpr double kMaxTemperature = 100.0;

/// Toy joint vision-language encoder: a small CNN image tower and a
/// mean-pooled token-embedding text tower, both ending in K dims and
/// L2-normalized at the interface.
class JointEncoder {
 public:
  JointEncoder(const EncoderConfig& config, uint64_t seed);

  /// [N,T,H,W] -> [N,K] unit rows.
  Tensor<float> encode_images(const Tensor<float>& images) const;
  /// One token sequence per row -> [N,K] unit rows.
  Tensor<float> encode_tokens(const std::vector<std::vector<int>>& sequences) const;
  /// Tokenizes and encodes one prompt -> [K].
  Tensor<float> encode_text(const std::string& prompt) const;

  /// Out-of-vocabulary words raise a data error naming the word.
  std::vector<int> tokenize(const std::string& prompt) const;

  /// Learned log(1 / temperature).
  Tensor<float> logit_scale() const { return logit_scale_; }
  double temperature() const;
  void clamp_temperature();

  const EncoderConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  nlohmann::json metadata;

  ModelCheckpoint to_checkpoint() const;
  static JointEncoder from_checkpoint(const ModelCheckpoint& ckpt);

 private:
  Tensor<float> image_features(const Tensor<float>& images) const;

  EncoderConfig config_;
  ParamStore params_;
  std::vector<Conv2dLayer> convs_;
  LinearLayer image_proj_;
  Tensor<float> token_table_;
  LinearLayer text_hidden_;
  LinearLayer text_proj_;
  Tensor<float> logit_scale_;
};

/// Symmetric InfoNCE: mean of row-wise and column-wise cross-entropy of
/// exp(logit_scale) * img . txt^T against the diagonal.
Tensor<float> info_nce_loss(const Tensor<float>& image_emb, const Tensor<float>& text_emb,
                            const Tensor<float>& logit_scale);

struct EncoderTrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double lr = 2e-3;
  uint64_t seed = 1;
  std::string prefix = kDefaultPromptPrefix;
};

struct TrainedEncoder {
  JointEncoder encoder;
  std::vector<double> epoch_loss;
};

/// Pairs every sample with the prompt naming all of its classes.
TrainedEncoder pretrain_joint_encoder(const SceneDataset& train, const EncoderConfig& config,
                                      const EncoderTrainConfig& train_config);

/// Mean 1-based rank of each sample's true prompt among itself and
/// `distractors` prompts naming a different class set.
double retrieval_mean_rank(const JointEncoder& encoder, const SceneDataset& held_out, int distractors,
                           uint64_t seed, const std::string& prefix = kDefaultPromptPrefix);

}  // namespace gama
