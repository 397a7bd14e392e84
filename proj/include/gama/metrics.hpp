#pragma once

#include <cstdint>
#include <vector>

#include "gama/scene.hpp"
#include "gama/tensor.hpp"

namespace gama {

/// Mean per-sample |Y ∩ Ŷ| / |Y ∪ Ŷ| as a percentage; rows are flat
/// row-major binary vectors of length `num_classes`. Two empty sets count
/// as a perfect match.
double hamming_score(const std::vector<uint8_t>& predictions, const std::vector<uint8_t>& truths, int num_classes);

/// Percentage of rows whose argmax (lowest index on ties) equals the label.
double top1_accuracy(const Tensor<float>& scores, const std::vector<int>& labels);

/// Binary predictions from per-class probabilities.
std::vector<uint8_t> threshold_predictions(const Tensor<float>& probabilities, double threshold = 0.5);

/// Row-wise argmax, ties to the lowest index.
std::vector<int> argmax_rows(const Tensor<float>& scores);

/// O_δ: pairs co-predicted on at least one row.
CooccurrenceMatrix predicted_cooccurrence(const std::vector<uint8_t>& predictions, int num_classes);

struct ContextScore {
  double precision = 1.0;          // p: share of O_δ pairs that are also in O
  double misclassification = 0.0;  // m = 1 - accuracy
  double score = 0.0;              // 2pm / (p + m)
};

/// Harmonic mean 2pm/(p+m), zero when p + m == 0.
double harmonic_context(double precision, double misclassification);

/// `accuracy` is a fraction in [0,1] of the attacked predictions.
ContextScore context_consistency_score(const std::vector<uint8_t>& predictions, int num_classes,
                                       const CooccurrenceMatrix& o, double accuracy);

}  // namespace gama
