#include "gama/generator.hpp"

namespace gama {

PerturbationGenerator::PerturbationGenerator(const GeneratorConfig& config, uint64_t seed) : config_(config) {
  if (config.base_width < 1 || config.res_blocks < 0 || config.channels < 1)
    throw Error(ErrorKind::config, "generator: invalid architecture config");
  auto rng = make_rng(seed, RngStream::init, 300);
  const int c = config.channels, b = config.base_width;
  // Activations carry a sqrt(2) gain, so convs use unit-gain init.
  stem_ = make_conv(params_, "stem", c, b, 3, 1, 1, rng, 1.0);
  down1_ = make_conv(params_, "down1", b, 2 * b, 3, 2, 1, rng, 1.0);
  down2_ = make_conv(params_, "down2", 2 * b, 4 * b, 3, 2, 1, rng, 1.0);
  for (int i = 0; i < config.res_blocks; ++i) {
    const auto name = "res" + std::to_string(i);
    auto first = make_conv(params_, name + ".conv_a", 4 * b, 4 * b, 3, 1, 1, rng, 1.0);
    auto second = make_conv(params_, name + ".conv_b", 4 * b, 4 * b, 3, 1, 1, rng, 0.5);
    blocks_.emplace_back(first, second);
  }
  up1_ = make_conv(params_, "up1", 4 * b, 2 * b, 3, 1, 1, rng, 1.0);
  up2_ = make_conv(params_, "up2", 2 * b, b, 3, 1, 1, rng, 1.0);
  head_ = make_conv(params_, "head", b, c, 3, 1, 1, rng, 1.0, /*bias=*/false);
}

Tensor<float> PerturbationGenerator::raw(const Tensor<float>& x) const {
  const bool single = x.ndim() == 3;
  Tensor<float> h = single ? reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)}) : x;
  if (h.ndim() != 4 || h.dim(1) != config_.channels)
    throw Error(ErrorKind::compatibility, "generator: input " + shape_str(x.shape()) + " has wrong channel count");
  if (h.dim(2) % 4 != 0 || h.dim(3) % 4 != 0)
    throw Error(ErrorKind::compatibility, "generator: image sides must be multiples of 4");
  h = fused_act(stem_(h));
  h = fused_act(down1_(h));
  h = fused_act(down2_(h));
  for (const auto& [a, b] : blocks_) h = add(h, b(fused_act(a(h))));
  h = fused_act(up1_(upsample_nearest2x(h)));
  h = fused_act(up2_(upsample_nearest2x(h)));
  // The head sees per-channel standardized features and has no bias, so the
  // squashed output cannot drift to a constant per-channel shift; the
  // perturbation has to carry spatial structure.
  auto out = scale(add_scalar(tanh(head_(instance_norm(h))), 1.0f), 0.5f);
  return single ? reshape(out, x.shape()) : out;
}

Tensor<float> PerturbationGenerator::forward(const Tensor<float>& x, float eps) const {
  if (!(eps > 0.0f)) throw Error(ErrorKind::config, "eps: must be > 0");
  return project_linf(raw(x), x, eps);
}

ModelCheckpoint PerturbationGenerator::to_checkpoint() const {
  ModelCheckpoint ckpt;
  ckpt.kind = ModelKind::generator;
  ckpt.architecture_id = 0;
  ckpt.tensors = params_.entries();
  ckpt.metadata = metadata.is_object() ? metadata : nlohmann::json::object();
  ckpt.metadata["channels"] = config_.channels;
  ckpt.metadata["base_width"] = config_.base_width;
  ckpt.metadata["res_blocks"] = config_.res_blocks;
  return ckpt;
}

PerturbationGenerator PerturbationGenerator::from_checkpoint(const ModelCheckpoint& ckpt) {
  if (ckpt.kind != ModelKind::generator) throw Error(ErrorKind::compatibility, "kind mismatch: not a generator");
  GeneratorConfig cfg;
  try {
    cfg.channels = ckpt.metadata.at("channels").get<int>();
    cfg.base_width = ckpt.metadata.at("base_width").get<int>();
    cfg.res_blocks = ckpt.metadata.at("res_blocks").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::data, std::string("generator checkpoint metadata: ") + e.what());
  }
  PerturbationGenerator gen(cfg, 0);
  gen.params_.assign(ckpt.tensors);
  gen.metadata = ckpt.metadata;
  return gen;
}

}  // namespace gama
