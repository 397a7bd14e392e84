#include "gama/surrogate.hpp"

#include <cmath>
#include <numeric>

#include "gama/optim.hpp"

namespace gama {

std::string task_name(Task task) { return task == Task::multi_label ? "multi_label" : "single_label"; }

Task task_from_name(const std::string& name) {
  if (name == "multi_label") return Task::multi_label;
  if (name == "single_label") return Task::single_label;
  throw Error(ErrorKind::config, "task: expected multi_label or single_label, got '" + name + "'");
}

SurrogateClassifier::SurrogateClassifier(const SurrogateConfig& config, uint64_t seed) : config_(config) {
  if (config.architecture_id < 0 || config.architecture_id >= kNumArchitectures)
    throw Error(ErrorKind::config, "architecture_id: must be 0, 1 or 2");
  if (config.num_classes < 1 || config.feature_dim < 1)
    throw Error(ErrorKind::config, "surrogate: num_classes and feature_dim must be positive");
  auto rng = make_rng(seed, RngStream::init, 100 + static_cast<uint64_t>(config.architecture_id));
  const int t = config.input.channels;
  int pooled = 0;
  switch (config.architecture_id) {
    case 0:
      convs_.push_back(make_conv(params_, "conv0", t, 32, 3, 2, 1, rng));
      convs_.push_back(make_conv(params_, "conv1", 32, 64, 3, 2, 1, rng));
      pooled = 64;
      break;
    case 1:
      convs_.push_back(make_conv(params_, "conv0", t, 16, 3, 1, 1, rng));
      convs_.push_back(make_conv(params_, "conv1", 16, 16, 3, 2, 1, rng));
      convs_.push_back(make_conv(params_, "conv2", 16, 32, 3, 1, 1, rng));
      convs_.push_back(make_conv(params_, "conv3", 32, 32, 3, 2, 1, rng));
      pooled = 32;
      break;
    default:
      convs_.push_back(make_conv(params_, "stem", t, 24, 3, 2, 1, rng));
      convs_.push_back(make_conv(params_, "block.conv_a", 24, 24, 3, 1, 1, rng));
      convs_.push_back(make_conv(params_, "block.conv_b", 24, 24, 3, 1, 1, rng, 0.5));
      convs_.push_back(make_conv(params_, "reduce", 24, 48, 3, 2, 1, rng));
      pooled = 48;
      break;
  }
  feature_ = make_linear(params_, "feature", pooled, config.feature_dim, rng);
  head_ = make_linear(params_, "head", config.feature_dim, config.num_classes, rng);
}

SurrogateClassifier::Output SurrogateClassifier::forward(const Tensor<float>& images) const {
  const auto& in = config_.input;
  Tensor<float> x = images;
  if (x.ndim() == 3) x = reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
  if (x.ndim() != 4 || x.dim(1) != in.channels || x.dim(2) != in.height || x.dim(3) != in.width)
    throw Error(ErrorKind::compatibility, "surrogate: input " + shape_str(images.shape()) + " does not match [" +
                                              std::to_string(in.channels) + "x" + std::to_string(in.height) + "x" +
                                              std::to_string(in.width) + "]");
  if (config_.architecture_id == 2) {
    x = act(convs_[0](x));
    x = add(x, convs_[2](act(convs_[1](x))));
    x = act(x);
    x = act(convs_[3](x));
  } else {
    for (const auto& conv : convs_) x = act(conv(x));
  }
  auto feature = feature_(global_avg_pool(x));
  auto logits = head_(act(feature));
  return {logits, feature};
}

ModelCheckpoint SurrogateClassifier::to_checkpoint() const {
  ModelCheckpoint ckpt;
  ckpt.kind = ModelKind::surrogate;
  ckpt.architecture_id = static_cast<uint16_t>(config_.architecture_id);
  ckpt.tensors = params_.entries();
  ckpt.metadata = metadata.is_object() ? metadata : nlohmann::json::object();
  ckpt.metadata["task"] = task_name(config_.task);
  ckpt.metadata["num_classes"] = config_.num_classes;
  ckpt.metadata["feature_dim"] = config_.feature_dim;
  ckpt.metadata["input"] = {config_.input.channels, config_.input.height, config_.input.width};
  return ckpt;
}

SurrogateClassifier SurrogateClassifier::from_checkpoint(const ModelCheckpoint& ckpt) {
  if (ckpt.kind != ModelKind::surrogate) throw Error(ErrorKind::compatibility, "kind mismatch: not a surrogate");
  SurrogateConfig cfg;
  try {
    cfg.architecture_id = ckpt.architecture_id;
    cfg.task = task_from_name(ckpt.metadata.at("task").get<std::string>());
    cfg.num_classes = ckpt.metadata.at("num_classes").get<int>();
    cfg.feature_dim = ckpt.metadata.at("feature_dim").get<int>();
    const auto dims = ckpt.metadata.at("input").get<std::vector<int>>();
    cfg.input = {dims.at(0), dims.at(1), dims.at(2)};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::data, std::string("surrogate checkpoint metadata: ") + e.what());
  }
  SurrogateClassifier model(cfg, 0);
  model.params_.assign(ckpt.tensors);
  model.metadata = ckpt.metadata;
  return model;
}

Tensor<float> classifier_loss(const SurrogateClassifier& model, const Tensor<float>& logits,
                              const std::vector<float>& labels) {
  if (model.config().task == Task::multi_label) return bce_with_logits(logits, labels);
  const int c = model.config().num_classes;
  std::vector<int> targets;
  for (std::size_t r = 0; r * c < labels.size(); ++r) {
    int t = 0;
    while (t < c && labels[r * c + t] < 0.5f) ++t;
    if (t == c) throw Error(ErrorKind::data, "single-label sample without a label");
    targets.push_back(t);
  }
  return cross_entropy(logits, targets);
}

Tensor<float> predict_scores(const SurrogateClassifier& model, const Tensor<float>& images) {
  NoGradGuard no_grad;
  auto logits = model.forward(images).logits;
  if (model.config().task == Task::multi_label) return sigmoid(logits);
  const int64_t n = logits.dim(0), c = logits.dim(1);
  auto out = Tensor<float>::zeros({n, c});
  for (int64_t r = 0; r < n; ++r) {
    const float* row = logits.ptr() + r * c;
    float mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    float z = 0;
    for (int64_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    for (int64_t j = 0; j < c; ++j) out.ptr()[r * c + j] = std::exp(row[j] - mx) / z;
  }
  return out;
}

TrainedSurrogate train_surrogate(const SceneDataset& train, const SurrogateConfig& config,
                                 const SurrogateTrainConfig& tc, const BatchHook& hook) {
  if (train.samples.empty()) throw Error(ErrorKind::data, "train_surrogate: empty training split");
  if (train.num_classes() != config.num_classes)
    throw Error(ErrorKind::compatibility, "train_surrogate: dataset has " + std::to_string(train.num_classes()) +
                                              " classes, model expects " + std::to_string(config.num_classes));
  if (tc.epochs < 1 || tc.batch_size < 1) throw Error(ErrorKind::config, "epochs and batch_size must be >= 1");
  TrainedSurrogate out{SurrogateClassifier(config, tc.seed), {}};
  auto& model = out.model;
  Adam<float> adam(model.params().tensors(), AdamOptions{tc.lr, 0.9, 0.999, 1e-8});

  std::vector<int> order(train.samples.size());
  std::iota(order.begin(), order.end(), 0);
  {
    NoGradGuard no_grad;
    double acc = 0;
    for (std::size_t s = 0; s < order.size(); s += 64) {
      std::span<const int> idx(order.data() + s, std::min<std::size_t>(64, order.size() - s));
      auto logits = model.forward(train.batch_images(idx)).logits;
      acc += classifier_loss(model, logits, train.batch_labels(idx)).item() * idx.size();
    }
    out.curve.initial_loss = acc / order.size();
  }

  int step = 0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    auto rng = make_rng(tc.seed, RngStream::shuffle, static_cast<uint64_t>(epoch));
    rng.shuffle(order.begin(), order.end());
    double acc = 0;
    int batches = 0;
    for (std::size_t s = 0; s < order.size(); s += tc.batch_size) {
      std::span<const int> idx(order.data() + s, std::min<std::size_t>(tc.batch_size, order.size() - s));
      auto images = train.batch_images(idx);
      const auto labels = train.batch_labels(idx);
      if (hook) hook(model, images, labels, step);
      adam.zero_grad();
      auto loss = classifier_loss(model, model.forward(images).logits, labels);
      if (!std::isfinite(loss.item())) throw Error("train_surrogate: loss diverged (NaN)");
      backward(loss);
      adam.step();
      acc += loss.item();
      ++batches;
      ++step;
    }
    out.curve.epoch_loss.push_back(acc / batches);
  }
  model.metadata = {{"seed", tc.seed},
                    {"epochs", tc.epochs},
                    {"distribution_id", train.distribution_id},
                    {"final_loss", out.curve.epoch_loss.back()}};
  return out;
}

}  // namespace gama
