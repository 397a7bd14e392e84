#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gama/rng.hpp"
#include "gama/tensor.hpp"

namespace gama {

inline constexpr int kMaxObjectsPerScene = 4;

enum class GlyphShape { disk, square, cross, triangle, ring, diamond, hbar, vbar, xmark, frame };

/// Names double as glyph identifiers; a distribution may use the first C of them.
const std::vector<std::string>& glyph_names();
GlyphShape glyph_from_name(const std::string& name);

/// Rendering look of one synthetic distribution. Two are built in:
/// "shapes-a" (filled glyphs, bright palette) and "shapes-b" (outlined
/// glyphs, shifted darker palette, lighter background).
struct DistributionStyle {
  std::string id;
  bool outlined = false;
  double hue_shift = 0.0;
  double value = 0.9;
  double background = 0.5;
  double background_noise = 0.04;
  double color_jitter = 0.06;
  int min_size = 9;
  int max_size = 13;
};

DistributionStyle distribution_style(const std::string& distribution_id);

struct ClassSpec {
  int class_id = 0;
  std::string name;
  GlyphShape shape = GlyphShape::disk;
  std::array<float, 3> base_color{};

  bool operator==(const ClassSpec&) const = default;
};

std::vector<ClassSpec> make_class_specs(const DistributionStyle& style, int num_classes);

struct CanvasDims {
  int channels = 3;
  int height = 32;
  int width = 32;

  bool operator==(const CanvasDims&) const = default;
};

struct Sample {
  Tensor<float> image;  // [T,H,W], values in [0,1]
  std::vector<uint8_t> labels;

  std::vector<int> active_classes() const;
};

enum class Split { full, train, test };
std::string split_name(Split s);

using ClassPair = std::pair<int, int>;

struct SceneDataset {
  std::vector<Sample> samples;
  std::string distribution_id;
  std::vector<ClassSpec> class_specs;
  Split split = Split::full;
  CanvasDims dims;
  uint64_t seed = 0;
  std::vector<ClassPair> allowed_pairs;
  std::vector<int> train_indices;
  std::vector<int> test_indices;

  int num_classes() const { return static_cast<int>(class_specs.size()); }
  std::size_t size() const { return samples.size(); }
  std::vector<std::string> class_names() const;
  /// Samples of one split as their own dataset (split indices dropped).
  SceneDataset subset(Split which) const;
  /// Stacks the given samples into [n,T,H,W] plus flat row-major labels.
  Tensor<float> batch_images(std::span<const int> indices) const;
  std::vector<float> batch_labels(std::span<const int> indices) const;
};

bool operator==(const SceneDataset& a, const SceneDataset& b);

/// Binary symmetric class co-occurrence indicator with zero diagonal.
struct CooccurrenceMatrix {
  Eigen::MatrixXi matrix;

  int num_classes() const { return static_cast<int>(matrix.rows()); }
  bool at(int i, int j) const { return matrix(i, j) != 0; }
  int nonzeros() const { return static_cast<int>(matrix.count()); }
  std::vector<ClassPair> upper_pairs() const;

  static CooccurrenceMatrix from_pairs(int num_classes, const std::vector<ClassPair>& pairs);
};

struct DatasetConfig {
  int num_classes = 6;
  int num_samples = 600;
  std::vector<ClassPair> allowed_pairs;  // empty: default_pairs(num_classes)
  uint64_t seed = 7;
  CanvasDims dims;
  std::string distribution_id = "shapes-a";
  double test_fraction = 0.2;
  double singleton_fraction = 0.25;
  double triple_fraction = 0.1;
  bool singletons_only = false;
};

/// Ring i -- i+1 plus two chords; 8 pairs at C = 6.
std::vector<ClassPair> default_pairs(int num_classes);

/// Renders one scene. Glyph boxes lie fully inside the canvas and never
/// overlap more than half of the smaller box.
Sample render_scene(const std::vector<int>& class_ids, Pcg64& rng, const CanvasDims& canvas,
                    const std::vector<ClassSpec>& specs, const DistributionStyle& style);

SceneDataset generate_dataset(const DatasetConfig& config);

CooccurrenceMatrix compute_cooccurrence(const SceneDataset& dataset);

void save_dataset(const SceneDataset& dataset, const std::filesystem::path& path);
SceneDataset load_dataset(const std::filesystem::path& path);
std::filesystem::path dataset_sidecar_path(const std::filesystem::path& path);

}  // namespace gama
