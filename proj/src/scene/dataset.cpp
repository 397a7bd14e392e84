#include <algorithm>
#include <cmath>
#include <set>

#include "gama/scene.hpp"

namespace gama {

std::vector<int> Sample::active_classes() const {
  std::vector<int> out;
  for (std::size_t c = 0; c < labels.size(); ++c)
    if (labels[c]) out.push_back(static_cast<int>(c));
  return out;
}

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::full: break;
  }
  return "full";
}

std::vector<std::string> SceneDataset::class_names() const {
  std::vector<std::string> names;
  for (const auto& spec : class_specs) names.push_back(spec.name);
  return names;
}

SceneDataset SceneDataset::subset(Split which) const {
  if (which == Split::full || split != Split::full) {
    if (which != split) throw Error(ErrorKind::data, "dataset is already the " + split_name(split) + " split");
    return *this;
  }
  SceneDataset out;
  out.distribution_id = distribution_id;
  out.class_specs = class_specs;
  out.split = which;
  out.dims = dims;
  out.seed = seed;
  out.allowed_pairs = allowed_pairs;
  for (int i : which == Split::train ? train_indices : test_indices) out.samples.push_back(samples.at(i));
  return out;
}

Tensor<float> SceneDataset::batch_images(std::span<const int> indices) const {
  const int64_t per = static_cast<int64_t>(dims.channels) * dims.height * dims.width;
  std::vector<float> data;
  data.reserve(indices.size() * per);
  for (int i : indices) {
    const auto& img = samples.at(i).image;
    data.insert(data.end(), img.vec().begin(), img.vec().end());
  }
  return Tensor<float>::from({static_cast<int64_t>(indices.size()), dims.channels, dims.height, dims.width},
                             std::move(data));
}

std::vector<float> SceneDataset::batch_labels(std::span<const int> indices) const {
  std::vector<float> out;
  out.reserve(indices.size() * num_classes());
  for (int i : indices)
    for (uint8_t b : samples.at(i).labels) out.push_back(b ? 1.0f : 0.0f);
  return out;
}

bool operator==(const SceneDataset& a, const SceneDataset& b) {
  if (a.distribution_id != b.distribution_id || a.class_specs != b.class_specs || a.split != b.split ||
      a.dims != b.dims || a.seed != b.seed || a.allowed_pairs != b.allowed_pairs ||
      a.train_indices != b.train_indices || a.test_indices != b.test_indices ||
      a.samples.size() != b.samples.size())
    return false;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const auto& sa = a.samples[i];
    const auto& sb = b.samples[i];
    if (sa.labels != sb.labels || sa.image.shape() != sb.image.shape() || sa.image.vec() != sb.image.vec())
      return false;
  }
  return true;
}

std::vector<ClassPair> CooccurrenceMatrix::upper_pairs() const {
  std::vector<ClassPair> pairs;
  for (int i = 0; i < num_classes(); ++i)
    for (int j = i + 1; j < num_classes(); ++j)
      if (at(i, j)) pairs.emplace_back(i, j);
  return pairs;
}

CooccurrenceMatrix CooccurrenceMatrix::from_pairs(int num_classes, const std::vector<ClassPair>& pairs) {
  CooccurrenceMatrix o{Eigen::MatrixXi::Zero(num_classes, num_classes)};
  for (auto [i, j] : pairs) {
    if (i == j) continue;
    o.matrix(i, j) = 1;
    o.matrix(j, i) = 1;
  }
  return o;
}

std::vector<ClassPair> default_pairs(int num_classes) {
  std::set<ClassPair> pairs;
  auto add = [&](int i, int j) {
    if (i != j) pairs.insert({std::min(i, j), std::max(i, j)});
  };
  for (int i = 0; i + 1 < num_classes; ++i) add(i, i + 1);
  add(0, num_classes - 1);
  add(0, num_classes / 2);
  add(1, num_classes / 2 + 1);
  return {pairs.begin(), pairs.end()};
}

namespace {

std::vector<ClassPair> validate(const DatasetConfig& cfg) {
  if (cfg.num_classes < 4) throw Error(ErrorKind::config, "num_classes: must be >= 4");
  if (cfg.num_classes > static_cast<int>(glyph_names().size()))
    throw Error(ErrorKind::config, "num_classes: at most " + std::to_string(glyph_names().size()) + " supported");
  if (cfg.num_samples < cfg.num_classes) throw Error(ErrorKind::config, "num_samples: must be >= num_classes");
  if (!(cfg.test_fraction >= 0.0 && cfg.test_fraction < 1.0))
    throw Error(ErrorKind::config, "test_fraction: must be in [0, 1)");
  if (cfg.singleton_fraction < 0.0 || cfg.triple_fraction < 0.0 || cfg.singleton_fraction + cfg.triple_fraction > 1.0)
    throw Error(ErrorKind::config, "singleton_fraction: fractions must be non-negative and sum to <= 1");

  std::set<ClassPair> unique;
  const auto& source = cfg.allowed_pairs.empty() && !cfg.singletons_only ? default_pairs(cfg.num_classes)
                                                                         : cfg.allowed_pairs;
  for (auto [i, j] : source) {
    if (i < 0 || j < 0 || i >= cfg.num_classes || j >= cfg.num_classes)
      throw Error(ErrorKind::config, "allowed_pairs: class id out of range");
    if (i == j) throw Error(ErrorKind::config, "allowed_pairs: self-pairs are not allowed");
    unique.insert({std::min(i, j), std::max(i, j)});
  }
  if (unique.empty() && !cfg.singletons_only) throw Error(ErrorKind::config, "allowed_pairs: must be nonempty");
  return {unique.begin(), unique.end()};
}

}  // namespace

SceneDataset generate_dataset(const DatasetConfig& config) {
  const auto style = distribution_style(config.distribution_id);
  const auto pairs = validate(config);
  const int c = config.num_classes, n = config.num_samples;

  // Label sets: forced coverage first (every pair, then classes no pair covers).
  std::vector<std::vector<int>> label_sets;
  std::vector<uint8_t> covered(c, 0);
  if (!config.singletons_only) {
    for (auto [i, j] : pairs) {
      label_sets.push_back({i, j});
      covered[i] = covered[j] = 1;
    }
  }
  for (int k = 0; k < c; ++k)
    if (!covered[k]) label_sets.push_back({k});
  const int forced = static_cast<int>(label_sets.size());
  const int n_test = static_cast<int>(std::floor(n * config.test_fraction));
  if (forced > n - n_test)
    throw Error(ErrorKind::config, "num_samples: infeasible config, " + std::to_string(forced) +
                                       " coverage scenes do not fit in " + std::to_string(n - n_test) +
                                       " training samples");

  auto label_rng = make_rng(config.seed, RngStream::dataset, 0);
  std::set<ClassPair> pair_set(pairs.begin(), pairs.end());
  auto allowed = [&](int i, int j) { return pair_set.count({std::min(i, j), std::max(i, j)}) > 0; };
  while (static_cast<int>(label_sets.size()) < n) {
    const double r = label_rng.uniform();
    if (config.singletons_only || r < config.singleton_fraction) {
      label_sets.push_back({static_cast<int>(label_rng.below(c))});
      continue;
    }
    auto [i, j] = pairs[label_rng.below(pairs.size())];
    std::vector<int> set{i, j};
    if (r < config.singleton_fraction + config.triple_fraction) {
      std::vector<int> third;
      for (int k = 0; k < c; ++k)
        if (k != i && k != j && allowed(i, k) && allowed(j, k)) third.push_back(k);
      if (!third.empty()) set.push_back(third[label_rng.below(third.size())]);
    }
    std::sort(set.begin(), set.end());
    label_sets.push_back(std::move(set));
  }

  SceneDataset ds;
  ds.distribution_id = config.distribution_id;
  ds.class_specs = make_class_specs(style, c);
  ds.split = Split::full;
  ds.dims = config.dims;
  ds.seed = config.seed;
  ds.allowed_pairs = config.singletons_only ? std::vector<ClassPair>{} : pairs;
  ds.samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    auto rng = make_rng(config.seed, RngStream::dataset, static_cast<uint64_t>(i) + 1);
    ds.samples.push_back(render_scene(label_sets[i], rng, config.dims, ds.class_specs, style));
  }

  std::vector<int> free_idx;
  for (int i = forced; i < n; ++i) free_idx.push_back(i);
  auto split_rng = make_rng(config.seed, RngStream::split);
  split_rng.shuffle(free_idx.begin(), free_idx.end());
  ds.test_indices.assign(free_idx.begin(), free_idx.begin() + n_test);
  std::sort(ds.test_indices.begin(), ds.test_indices.end());
  std::vector<uint8_t> is_test(n, 0);
  for (int i : ds.test_indices) is_test[i] = 1;
  for (int i = 0; i < n; ++i)
    if (!is_test[i]) ds.train_indices.push_back(i);
  return ds;
}

CooccurrenceMatrix compute_cooccurrence(const SceneDataset& dataset) {
  if (dataset.split == Split::test)
    throw Error(ErrorKind::data, "co-occurrence must be computed from the training split");
  std::vector<int> indices;
  if (dataset.split == Split::full && !dataset.train_indices.empty()) {
    indices = dataset.train_indices;
  } else {
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) indices.push_back(static_cast<int>(i));
  }
  if (indices.empty()) throw Error(ErrorKind::data, "co-occurrence of an empty dataset");
  const int c = dataset.num_classes();
  CooccurrenceMatrix o{Eigen::MatrixXi::Zero(c, c)};
  for (int idx : indices) {
    const auto active = dataset.samples[idx].active_classes();
    for (std::size_t a = 0; a < active.size(); ++a)
      for (std::size_t b = a + 1; b < active.size(); ++b) {
        o.matrix(active[a], active[b]) = 1;
        o.matrix(active[b], active[a]) = 1;
      }
  }
  return o;
}

}  // namespace gama
