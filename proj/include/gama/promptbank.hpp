#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gama/encoder.hpp"
#include "gama/rng.hpp"
#include "gama/scene.hpp"

namespace gama {

struct TextPrompt {
  int first = 0;   // class id, first < second
  int second = 0;
  std::string text;

  bool operator==(const TextPrompt&) const = default;
};

/// One prompt per unordered co-occurring class pair, in (i, j) lexicographic
/// order. Throws "no co-occurring pairs" for an all-zero matrix.
std::vector<TextPrompt> build_prompts(const std::vector<std::string>& class_names, const CooccurrenceMatrix& o,
                                      const std::string& prefix = kDefaultPromptPrefix);

/// Text-embedding matrix A_t with its prompts; immutable after construction.
struct PromptBank {
  std::vector<TextPrompt> prompts;
  Tensor<float> embeddings;  // [P,K], unit rows in prompt order
  std::string prefix;
  std::string encoder_fingerprint;

  int size() const { return static_cast<int>(prompts.size()); }
  int dim() const { return static_cast<int>(embeddings.dim(1)); }
  std::span<const float> row(int p) const;
};

PromptBank embed_bank(const std::vector<TextPrompt>& prompts, const JointEncoder& encoder,
                      const std::string& encoder_fingerprint, const std::string& prefix = kDefaultPromptPrefix);

/// B row indices drawn uniformly: without replacement when B <= P, with
/// replacement otherwise.
std::vector<int> sample_candidates(const PromptBank& bank, int count, Pcg64& rng);

struct Retrieval {
  int index = -1;           // bank row (or candidate-row position for the matrix overload)
  double similarity = 0.0;  // cosine similarity to the image embedding
};

/// argmin over candidates of cs(image_emb, row); ties go to the lowest bank row.
Retrieval least_similar(std::span<const float> image_emb, const PromptBank& bank, std::span<const int> candidates);
/// argmin over rows of `candidates` [B,K]; ties go to the lowest row.
Retrieval least_similar(std::span<const float> image_emb, const Tensor<float>& candidates);

/// Writes "<path>" (JSON prompt list) and "<path>.bin" (framed f32 matrix).
void save_bank(const PromptBank& bank, const std::filesystem::path& path);
PromptBank load_bank(const std::filesystem::path& path);

}  // namespace gama
