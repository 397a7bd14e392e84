#include "gama/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gama/optim.hpp"

namespace gama {

std::vector<std::string> base_vocabulary() { return {"a", "photo", "depicts", "and"}; }

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

std::string make_prompt(const std::string& prefix, const std::vector<std::string>& names) {
  std::string out = prefix;
  for (std::size_t i = 0; i < names.size(); ++i) out += (i == 0 ? " " : " and ") + names[i];
  return out;
}

JointEncoder::JointEncoder(const EncoderConfig& config, uint64_t seed) : config_(config) {
  if (config.embed_dim < 2) throw Error(ErrorKind::config, "embed_dim: must be >= 2");
  if (config.vocabulary.empty()) throw Error(ErrorKind::config, "encoder: empty vocabulary");
  auto rng = make_rng(seed, RngStream::init, 200);
  const int t = config.input.channels;
  convs_.push_back(make_conv(params_, "image.conv0", t, 16, 3, 2, 1, rng));
  convs_.push_back(make_conv(params_, "image.conv1", 16, 32, 3, 2, 1, rng));
  convs_.push_back(make_conv(params_, "image.conv2", 32, 64, 3, 2, 1, rng));
  image_proj_ = make_linear(params_, "image.proj", 64, config.embed_dim, rng);
  token_table_ = params_.add("text.tokens", {static_cast<int64_t>(config.vocabulary.size()), config.token_dim});
  for (auto& v : token_table_.data()) v = static_cast<float>(rng.normal());
  text_hidden_ = make_linear(params_, "text.hidden", config.token_dim, config.text_hidden, rng);
  text_proj_ = make_linear(params_, "text.proj", config.text_hidden, config.embed_dim, rng);
  logit_scale_ = params_.add("logit_scale", {1});
  logit_scale_.data()[0] = static_cast<float>(std::log(1.0 / 0.07));
}

Tensor<float> JointEncoder::image_features(const Tensor<float>& images) const {
  const auto& in = config_.input;
  Tensor<float> x = images;
  if (x.ndim() == 3) x = reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
  if (x.ndim() != 4 || x.dim(1) != in.channels || x.dim(2) != in.height || x.dim(3) != in.width)
    throw Error(ErrorKind::compatibility, "encoder: image shape " + shape_str(images.shape()) + " does not match");
  for (const auto& conv : convs_) x = act(conv(x));
  return image_proj_(global_avg_pool(x));
}

Tensor<float> JointEncoder::encode_images(const Tensor<float>& images) const {
  return normalize_l2(image_features(images));
}

Tensor<float> JointEncoder::encode_tokens(const std::vector<std::vector<int>>& sequences) const {
  auto pooled = embedding_mean(token_table_, sequences);
  return normalize_l2(text_proj_(act(text_hidden_(pooled))));
}

Tensor<float> JointEncoder::encode_text(const std::string& prompt) const {
  auto rows = encode_tokens({tokenize(prompt)});
  return reshape(rows, {config_.embed_dim});
}

std::vector<int> JointEncoder::tokenize(const std::string& prompt) const {
  std::vector<int> ids;
  for (const auto& word : split_words(prompt)) {
    auto it = std::find(config_.vocabulary.begin(), config_.vocabulary.end(), word);
    if (it == config_.vocabulary.end()) throw Error(ErrorKind::data, "out-of-vocabulary token '" + word + "'");
    ids.push_back(static_cast<int>(it - config_.vocabulary.begin()));
  }
  if (ids.empty()) throw Error(ErrorKind::data, "empty prompt");
  return ids;
}

double JointEncoder::temperature() const { return std::exp(-static_cast<double>(logit_scale_.data()[0])); }

void JointEncoder::clamp_temperature() {
  auto& s = logit_scale_.data()[0];
  s = std::clamp(s, static_cast<float>(std::log(1.0 / kMaxTemperature)),
                 static_cast<float>(std::log(1.0 / kMinTemperature)));
}

ModelCheckpoint JointEncoder::to_checkpoint() const {
  ModelCheckpoint ckpt;
  ckpt.kind = ModelKind::encoder;
  ckpt.architecture_id = 0;
  ckpt.tensors = params_.entries();
  ckpt.metadata = metadata.is_object() ? metadata : nlohmann::json::object();
  ckpt.metadata["embed_dim"] = config_.embed_dim;
  ckpt.metadata["token_dim"] = config_.token_dim;
  ckpt.metadata["text_hidden"] = config_.text_hidden;
  ckpt.metadata["input"] = {config_.input.channels, config_.input.height, config_.input.width};
  ckpt.metadata["vocabulary"] = config_.vocabulary;
  return ckpt;
}

JointEncoder JointEncoder::from_checkpoint(const ModelCheckpoint& ckpt) {
  if (ckpt.kind != ModelKind::encoder) throw Error(ErrorKind::compatibility, "kind mismatch: not an encoder");
  EncoderConfig cfg;
  try {
    cfg.embed_dim = ckpt.metadata.at("embed_dim").get<int>();
    cfg.token_dim = ckpt.metadata.at("token_dim").get<int>();
    cfg.text_hidden = ckpt.metadata.at("text_hidden").get<int>();
    const auto dims = ckpt.metadata.at("input").get<std::vector<int>>();
    cfg.input = {dims.at(0), dims.at(1), dims.at(2)};
    cfg.vocabulary = ckpt.metadata.at("vocabulary").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::data, std::string("encoder checkpoint metadata: ") + e.what());
  }
  JointEncoder enc(cfg, 0);
  enc.params_.assign(ckpt.tensors);
  enc.metadata = ckpt.metadata;
  return enc;
}

Tensor<float> info_nce_loss(const Tensor<float>& image_emb, const Tensor<float>& text_emb,
                            const Tensor<float>& logit_scale) {
  if (image_emb.shape() != text_emb.shape() || image_emb.ndim() != 2)
    throw Error("info_nce_loss: embeddings must both be [B,K]");
  const int64_t b = image_emb.dim(0);
  auto logits = mul_by_scalar_tensor(matmul(image_emb, transpose(text_emb)), exp(logit_scale));
  std::vector<int> diag(b);
  std::iota(diag.begin(), diag.end(), 0);
  return scale(add(cross_entropy(logits, diag), cross_entropy(transpose(logits), diag)), 0.5f);
}

namespace {

std::vector<std::string> names_of(const SceneDataset& ds, const std::vector<int>& classes) {
  std::vector<std::string> names;
  for (int c : classes) names.push_back(ds.class_specs[c].name);
  return names;
}

}  // namespace

TrainedEncoder pretrain_joint_encoder(const SceneDataset& train, const EncoderConfig& config,
                                      const EncoderTrainConfig& tc) {
  if (train.samples.empty()) throw Error(ErrorKind::data, "pretrain_joint_encoder: empty training split");
  if (tc.epochs < 1 || tc.batch_size < 2) throw Error(ErrorKind::config, "encoder: epochs >= 1, batch_size >= 2");
  TrainedEncoder out{JointEncoder(config, tc.seed), {}};
  auto& enc = out.encoder;

  std::vector<std::vector<int>> tokens;
  for (const auto& s : train.samples) {
    const auto active = s.active_classes();
    if (active.empty()) throw Error(ErrorKind::data, "pretrain_joint_encoder: sample without labels");
    tokens.push_back(enc.tokenize(make_prompt(tc.prefix, names_of(train, active))));
  }

  Adam<float> adam(enc.params().tensors(), AdamOptions{tc.lr, 0.9, 0.999, 1e-8});
  std::vector<int> order(train.samples.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    auto rng = make_rng(tc.seed, RngStream::shuffle, 1000 + static_cast<uint64_t>(epoch));
    rng.shuffle(order.begin(), order.end());
    double acc = 0;
    int batches = 0;
    for (std::size_t s = 0; s + 2 <= order.size(); s += tc.batch_size) {
      std::span<const int> idx(order.data() + s, std::min<std::size_t>(tc.batch_size, order.size() - s));
      if (idx.size() < 2) break;
      std::vector<std::vector<int>> batch_tokens;
      for (int i : idx) batch_tokens.push_back(tokens[i]);
      adam.zero_grad();
      auto loss = info_nce_loss(enc.encode_images(train.batch_images(idx)), enc.encode_tokens(batch_tokens),
                                enc.logit_scale());
      if (!std::isfinite(loss.item())) throw Error("pretrain_joint_encoder: loss diverged (NaN)");
      backward(loss);
      adam.step();
      enc.clamp_temperature();
      acc += loss.item();
      ++batches;
    }
    out.epoch_loss.push_back(acc / batches);
  }
  enc.metadata = {{"seed", tc.seed},
                  {"epochs", tc.epochs},
                  {"distribution_id", train.distribution_id},
                  {"prefix", tc.prefix},
                  {"temperature", enc.temperature()}};
  return out;
}

double retrieval_mean_rank(const JointEncoder& encoder, const SceneDataset& held_out, int distractors,
                           uint64_t seed, const std::string& prefix) {
  if (held_out.samples.empty()) throw Error(ErrorKind::data, "retrieval_mean_rank: empty dataset");
  NoGradGuard no_grad;
  const int c = held_out.num_classes();
  std::vector<std::vector<int>> sets;
  for (int i = 0; i < c; ++i) sets.push_back({i});
  for (int i = 0; i < c; ++i)
    for (int j = i + 1; j < c; ++j) sets.push_back({i, j});
  std::vector<std::vector<int>> set_tokens;
  for (const auto& s : sets) set_tokens.push_back(encoder.tokenize(make_prompt(prefix, names_of(held_out, s))));
  const auto set_emb = encoder.encode_tokens(set_tokens);
  const int64_t k = set_emb.dim(1);

  auto rng = make_rng(seed, RngStream::sampling, 77);
  double total = 0;
  for (std::size_t n = 0; n < held_out.samples.size(); ++n) {
    const auto active = held_out.samples[n].active_classes();
    const auto img = encoder.encode_images(held_out.samples[n].image);
    const auto truth = encoder.encode_text(make_prompt(prefix, names_of(held_out, active)));
    auto dot = [&](const float* v) {
      double d = 0;
      for (int64_t j = 0; j < k; ++j) d += static_cast<double>(img.ptr()[j]) * v[j];
      return d;
    };
    const double true_score = dot(truth.ptr());
    int rank = 1;
    for (int d = 0; d < distractors; ++d) {
      std::size_t pick;
      do {
        pick = rng.below(sets.size());
      } while (sets[pick] == active);
      if (dot(set_emb.ptr() + pick * k) > true_score) ++rank;
    }
    total += rank;
  }
  return total / static_cast<double>(held_out.samples.size());
}

}  // namespace gama
