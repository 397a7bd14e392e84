#include "gama/zero_shot.hpp"

#include <algorithm>
#include <numeric>

namespace gama {

namespace {

Tensor<float> class_prompt_embeddings(const JointEncoder& encoder, const std::vector<std::string>& names,
                                      const std::string& prefix) {
  std::vector<std::vector<int>> tokens;
  for (const auto& n : names) tokens.push_back(encoder.tokenize(make_prompt(prefix, {n})));
  return encoder.encode_tokens(tokens);
}

/// Top-k class ids per image row, by descending similarity (lowest id on ties).
std::vector<std::vector<int>> rank_rows(const Tensor<float>& image_emb, const Tensor<float>& text_emb, int top_k) {
  const auto sims = matmul(image_emb, transpose(text_emb));
  const int64_t n = sims.dim(0), c = sims.dim(1);
  std::vector<std::vector<int>> out;
  for (int64_t i = 0; i < n; ++i) {
    std::vector<int> order(c);
    std::iota(order.begin(), order.end(), 0);
    const float* row = sims.ptr() + i * c;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return row[a] > row[b]; });
    order.resize(top_k);
    out.push_back(std::move(order));
  }
  return out;
}

Tensor<float> as_batch(const Tensor<float>& x) {
  if (x.ndim() == 4) return x;
  if (x.ndim() == 3) return reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
  throw Error("zero_shot: expected [T,H,W] or [N,T,H,W] images");
}

}  // namespace

ZeroShotLabels zero_shot_label_shift(const JointEncoder& encoder, const Tensor<float>& x, const Tensor<float>& x_adv,
                                     const std::vector<std::string>& class_names, int top_k,
                                     const std::string& prefix) {
  const int c = static_cast<int>(class_names.size());
  if (top_k < 1 || top_k > c) throw Error(ErrorKind::config, "zero_shot: top_k must be in [1, C]");
  NoGradGuard no_grad;
  const auto text = class_prompt_embeddings(encoder, class_names, prefix);
  const auto a = rank_rows(encoder.encode_images(as_batch(x)), text, top_k);
  const auto b = rank_rows(encoder.encode_images(as_batch(x_adv)), text, top_k);
  if (a.size() != 1 || b.size() != 1) throw Error("zero_shot_label_shift: expected a single image");
  return {a.front(), b.front()};
}

double zero_shot_shift_rate(const JointEncoder& encoder, const Tensor<float>& clean, const Tensor<float>& perturbed,
                            const std::vector<std::string>& class_names, int top_k, const std::string& prefix) {
  const int c = static_cast<int>(class_names.size());
  if (top_k < 1 || top_k > c) throw Error(ErrorKind::config, "zero_shot: top_k must be in [1, C]");
  if (clean.shape() != perturbed.shape()) throw Error(ErrorKind::data, "zero_shot: batch shapes differ");
  NoGradGuard no_grad;
  const auto text = class_prompt_embeddings(encoder, class_names, prefix);
  auto a = rank_rows(encoder.encode_images(as_batch(clean)), text, top_k);
  auto b = rank_rows(encoder.encode_images(as_batch(perturbed)), text, top_k);
  int shifted = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::sort(a[i].begin(), a[i].end());
    std::sort(b[i].begin(), b[i].end());
    shifted += a[i] != b[i];
  }
  return a.empty() ? 0.0 : static_cast<double>(shifted) / static_cast<double>(a.size());
}

}  // namespace gama
