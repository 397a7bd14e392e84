#include "gama/train_generator.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "gama/io.hpp"

namespace gama {

namespace {

Tensor<float> gather_rows(const Tensor<float>& table, std::span<const int> rows) {
  const int64_t k = table.dim(1);
  std::vector<float> data;
  data.reserve(rows.size() * k);
  for (int r : rows) data.insert(data.end(), table.ptr() + r * k, table.ptr() + (r + 1) * k);
  return Tensor<float>::from({static_cast<int64_t>(rows.size()), k}, std::move(data));
}

/// Runs `fn` over the dataset in chunks without recording, concatenating [n,*] outputs.
template <typename Fn>
Tensor<float> map_dataset(const SceneDataset& ds, Fn fn) {
  NoGradGuard no_grad;
  std::vector<int> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<float> data;
  int64_t width = 0;
  for (std::size_t s = 0; s < all.size(); s += 64) {
    std::span<const int> idx(all.data() + s, std::min<std::size_t>(64, all.size() - s));
    auto out = fn(ds.batch_images(idx));
    width = out.dim(1);
    data.insert(data.end(), out.vec().begin(), out.vec().end());
  }
  return Tensor<float>::from({static_cast<int64_t>(all.size()), width}, std::move(data));
}

}  // namespace

void validate(const TrainConfig& c) {
  if (!(c.epsilon > 0.0f)) throw Error(ErrorKind::config, "eps: must be > 0");
  if (!(c.alpha > 0.0)) throw Error(ErrorKind::config, "alpha: must be > 0");
  if (c.batch_size < 1) throw Error(ErrorKind::config, "batch: must be >= 1");
  if (c.candidates < 1) throw Error(ErrorKind::config, "candidates: must be >= 1");
  if (c.epochs < 1) throw Error(ErrorKind::config, "epochs: must be >= 1");
  if (!(c.adam.lr > 0.0)) throw Error(ErrorKind::config, "lr: must be > 0");
}

std::string to_json_line(const LossRecord& r) {
  nlohmann::json j = {{"step", r.step},
                      {"epoch", r.epoch},
                      {"l_s", r.losses.l_s},
                      {"l_img", r.losses.l_img},
                      {"l_txt", r.losses.l_txt},
                      {"total", r.losses.total},
                      {"lr", r.lr}};
  if (r.losses.l_base != 0.0) j["l_base"] = r.losses.l_base;
  return j.dump() + "\n";
}

GeneratorTrainResult train_generator(const TrainConfig& config, AttackMethod method, const SceneDataset& train,
                                     const AttackTools& tools, const StepCallback& on_step) {
  validate(config);
  if (train.samples.empty()) throw Error(ErrorKind::data, "train_generator: empty training split");
  if (tools.surrogates.empty()) throw Error(ErrorKind::config, "surrogate: at least one surrogate is required");
  const auto terms = active_terms(method);
  const bool need_encoder = uses_encoder(method), need_bank = uses_bank(method);
  if (need_encoder && !tools.encoder)
    throw Error(ErrorKind::config, "encoder: required for method " + method_name(method));
  if (need_bank && !tools.bank) throw Error(ErrorKind::config, "bank: required for method " + method_name(method));

  // Dimension agreement between f_k, the encoder and A_t.
  const int k = tools.surrogates.front()->config().feature_dim;
  std::ostringstream dims;
  bool k_ok = true;
  for (std::size_t s = 0; s < tools.surrogates.size(); ++s) {
    const int ks = tools.surrogates[s]->config().feature_dim;
    dims << "surrogate[" << s << "] K=" << ks << " ";
    k_ok &= ks == k;
  }
  if (need_encoder) {
    dims << "encoder K=" << tools.encoder->config().embed_dim << " ";
    k_ok &= tools.encoder->config().embed_dim == k;
  }
  if (need_bank) {
    dims << "bank K=" << tools.bank->dim();
    k_ok &= tools.bank->dim() == k;
  }
  if (!k_ok) throw Error(ErrorKind::compatibility, "K mismatch: " + dims.str());

  for (const auto* s : tools.surrogates) {
    const auto& meta = s->metadata;
    if (meta.is_object() && meta.contains("distribution_id") && meta["distribution_id"] != train.distribution_id)
      throw Error(ErrorKind::compatibility, "surrogate trained on '" + meta["distribution_id"].get<std::string>() +
                                                "' but dataset is '" + train.distribution_id + "'");
    if (s->config().num_classes != train.num_classes())
      throw Error(ErrorKind::compatibility, "surrogate class count does not match dataset");
  }

  // Load and freeze: private copies with gradients disabled.
  std::vector<uint32_t> original_sums;
  std::vector<SurrogateClassifier> frozen;
  for (const auto* s : tools.surrogates) {
    original_sums.push_back(s->params().checksum());
    frozen.push_back(SurrogateClassifier::from_checkpoint(s->to_checkpoint()));
    frozen.back().params().set_requires_grad(false);
  }
  const uint32_t encoder_sum = need_encoder ? tools.encoder->params().checksum() : 0;

  // f, T and I are frozen, so their clean-image outputs are fixed per sample.
  Tensor<float> rho_img_all;
  if (need_encoder) rho_img_all = map_dataset(train, [&](const Tensor<float>& x) { return tools.encoder->encode_images(x); });
  std::vector<Tensor<float>> z_all, logits_all;
  for (const auto& f : frozen) {
    z_all.push_back(map_dataset(train, [&](const Tensor<float>& x) { return normalize_l2(f.forward(x).feature); }));
    if (terms.baseline) logits_all.push_back(map_dataset(train, [&](const Tensor<float>& x) { return f.forward(x).logits; }));
  }

  GeneratorTrainResult result{PerturbationGenerator(config.generator, config.seed), {}};
  auto& gen = result.generator;
  Adam<float> adam(gen.params().tensors(), config.adam);
  auto sampler = make_rng(config.seed, RngStream::sampling);
  const float inv_s = 1.0f / static_cast<float>(frozen.size());

  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> candidates;
  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    auto shuffle_rng = make_rng(config.seed, RngStream::shuffle, 5000 + static_cast<uint64_t>(epoch));
    shuffle_rng.shuffle(order.begin(), order.end());
    if (need_bank && config.resample_per_epoch) candidates = sample_candidates(*tools.bank, config.candidates, sampler);

    for (std::size_t s = 0; s < order.size(); s += config.batch_size) {
      std::span<const int> idx(order.data() + s, std::min<std::size_t>(config.batch_size, order.size() - s));
      const auto x = train.batch_images(idx);

      Tensor<float> rho_img, rho_txt;
      if (need_encoder) rho_img = gather_rows(rho_img_all, idx);
      if (need_bank) {
        if (!config.resample_per_epoch) candidates = sample_candidates(*tools.bank, config.candidates, sampler);
        std::vector<int> chosen;
        for (std::size_t i = 0; i < idx.size(); ++i)
          chosen.push_back(least_similar(rho_img.data().subspan(i * k, k), *tools.bank, candidates).index);
        rho_txt = gather_rows(tools.bank->embeddings, chosen);
      }

      adam.zero_grad();
      const auto x_adv = gen.forward(x, config.epsilon);
      LossParts<float> parts;
      auto accumulate = [&](std::optional<Tensor<float>>& slot, const Tensor<float>& term) {
        auto weighted = scale(term, inv_s);
        slot = slot ? add(*slot, weighted) : weighted;
      };
      for (std::size_t f = 0; f < frozen.size(); ++f) {
        const auto out = frozen[f].forward(x_adv);
        const auto z = gather_rows(z_all[f], idx);
        const auto z_adv = normalize_l2(out.feature);
        if (terms.l_s) accumulate(parts.l_s, loss_s(z, z_adv));
        if (terms.l_img) accumulate(parts.l_img, loss_img(rho_img, z_adv));
        if (terms.l_txt) accumulate(parts.l_txt, loss_txt(z_adv, z, rho_txt, static_cast<float>(config.alpha)));
        if (terms.baseline)
          accumulate(parts.l_base, baseline_loss(method, gather_rows(logits_all[f], idx), out.logits,
                                                 train.batch_labels(idx)));
      }
      auto combined = total_loss(method, parts);
      if (!std::isfinite(combined.breakdown.total)) throw Error("train_generator: loss diverged (NaN)");
      backward(combined.total);
      for (const auto& f : frozen)
        if (f.params().any_grad()) throw Error("train_generator: gradient reached a frozen surrogate");
      adam.step();

      LossRecord rec{step, epoch, combined.breakdown, adam.options().lr};
      result.log.push_back(rec);
      if (on_step) on_step(rec);
      ++step;
    }
  }

  for (std::size_t s = 0; s < tools.surrogates.size(); ++s)
    if (tools.surrogates[s]->params().checksum() != original_sums[s])
      throw Error("train_generator: frozen surrogate weights were mutated");
  if (need_encoder && tools.encoder->params().checksum() != encoder_sum)
    throw Error("train_generator: frozen encoder weights were mutated");

  auto fingerprints = nlohmann::json::array();
  for (auto sum : original_sums) fingerprints.push_back(io::hex32(sum));
  gen.metadata = {{"method", method_name(method)},
                  {"epsilon", config.epsilon},
                  {"alpha", config.alpha},
                  {"lr", config.adam.lr},
                  {"beta1", config.adam.beta1},
                  {"beta2", config.adam.beta2},
                  {"batch_size", config.batch_size},
                  {"candidates", config.candidates},
                  {"epochs", config.epochs},
                  {"seed", config.seed},
                  {"ensemble_size", tools.surrogates.size()},
                  {"distribution_id", train.distribution_id},
                  {"surrogate_fingerprints", fingerprints}};
  return result;
}

}  // namespace gama
