#pragma once

#include <string>
#include <vector>

#include "gama/encoder.hpp"

namespace gama {

struct ZeroShotLabels {
  std::vector<int> clean;      // class ids, most similar first
  std::vector<int> perturbed;
};

/// Ranks classes by cosine similarity between the image embedding and the
/// single-class prompt "<prefix> <name>"; returns the top_k for x and x̃
/// (each [T,H,W] or [1,T,H,W]).
ZeroShotLabels zero_shot_label_shift(const JointEncoder& encoder, const Tensor<float>& x, const Tensor<float>& x_adv,
                                     const std::vector<std::string>& class_names, int top_k,
                                     const std::string& prefix = kDefaultPromptPrefix);

/// Fraction of images whose top-k label sets differ between clean and
/// perturbed batches ([N,T,H,W] each).
double zero_shot_shift_rate(const JointEncoder& encoder, const Tensor<float>& clean, const Tensor<float>& perturbed,
                            const std::vector<std::string>& class_names, int top_k = 2,
                            const std::string& prefix = kDefaultPromptPrefix);

}  // namespace gama
