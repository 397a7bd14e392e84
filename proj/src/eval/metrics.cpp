#include "gama/metrics.hpp"

#include <bit>

namespace gama {

double hamming_score(const std::vector<uint8_t>& predictions, const std::vector<uint8_t>& truths, int num_classes) {
  if (num_classes < 1) throw Error("hamming_score: class count must be positive");
  if (predictions.empty() || truths.empty()) throw Error(ErrorKind::data, "hamming_score: empty input");
  if (predictions.size() != truths.size() || predictions.size() % num_classes != 0)
    throw Error("hamming_score: prediction/truth size mismatch");
  const std::size_t n = predictions.size() / num_classes;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    int inter = 0, uni = 0;
    for (int c = 0; c < num_classes; ++c) {
      const bool p = predictions[i * num_classes + c] != 0, t = truths[i * num_classes + c] != 0;
      inter += p && t;
      uni += p || t;
    }
    total += uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
  }
  return 100.0 * total / static_cast<double>(n);
}

std::vector<int> argmax_rows(const Tensor<float>& scores) {
  if (scores.ndim() != 2) throw Error("argmax_rows: expected [N,C] scores");
  const int64_t n = scores.dim(0), c = scores.dim(1);
  std::vector<int> out(n);
  for (int64_t i = 0; i < n; ++i) {
    const float* row = scores.ptr() + i * c;
    int best = 0;
    for (int64_t j = 1; j < c; ++j)
      if (row[j] > row[best]) best = static_cast<int>(j);
    out[i] = best;
  }
  return out;
}

double top1_accuracy(const Tensor<float>& scores, const std::vector<int>& labels) {
  if (scores.ndim() != 2 || scores.dim(0) == 0 || labels.empty()) throw Error(ErrorKind::data, "top1_accuracy: empty input");
  if (static_cast<int64_t>(labels.size()) != scores.dim(0)) throw Error("top1_accuracy: label count mismatch");
  const auto pred = argmax_rows(scores);
  int hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return 100.0 * hits / static_cast<double>(pred.size());
}

std::vector<uint8_t> threshold_predictions(const Tensor<float>& probabilities, double threshold) {
  std::vector<uint8_t> out(probabilities.numel());
  const auto d = probabilities.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[i] >= threshold ? 1 : 0;
  return out;
}

CooccurrenceMatrix predicted_cooccurrence(const std::vector<uint8_t>& predictions, int num_classes) {
  if (num_classes < 1 || predictions.size() % num_classes != 0)
    throw Error("predicted_cooccurrence: prediction size mismatch");
  CooccurrenceMatrix o{Eigen::MatrixXi::Zero(num_classes, num_classes)};
  for (std::size_t r = 0; r < predictions.size(); r += num_classes)
    for (int i = 0; i < num_classes; ++i)
      for (int j = i + 1; j < num_classes; ++j)
        if (predictions[r + i] && predictions[r + j]) o.matrix(i, j) = o.matrix(j, i) = 1;
  return o;
}

double harmonic_context(double p, double m) { return p + m == 0.0 ? 0.0 : 2.0 * p * m / (p + m); }

ContextScore context_consistency_score(const std::vector<uint8_t>& predictions, int num_classes,
                                       const CooccurrenceMatrix& o, double accuracy) {
  if (o.num_classes() != num_classes) throw Error(ErrorKind::compatibility, "context score: class count mismatch");
  const auto od = predicted_cooccurrence(predictions, num_classes);
  int predicted = 0, consistent = 0;
  for (auto [i, j] : od.upper_pairs()) {
    ++predicted;
    consistent += o.at(i, j);
  }
  ContextScore s;
  s.precision = predicted == 0 ? 1.0 : static_cast<double>(consistent) / predicted;
  s.misclassification = 1.0 - accuracy;
  s.score = harmonic_context(s.precision, s.misclassification);
  return s;
}

}  // namespace gama
