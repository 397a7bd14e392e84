#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gama/ops.hpp"
#include "gama/rng.hpp"

namespace gama {

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

/// Ordered, named parameter table of one model.
class ParamStore {
 public:
  Tensor<float> add(const std::string& name, Shape shape);
  Tensor<float> get(const std::string& name) const;

  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::vector<Tensor<float>> tensors() const;
  void set_requires_grad(bool on);
  void zero_grad();
  bool any_grad() const;
  /// CRC32 over names, shapes and values; changes iff any weight bit changes.
  uint32_t checksum() const;
  /// Copies values from `other`; names and shapes must match exactly.
  void assign(const std::vector<NamedTensor>& other);

 private:
  std::vector<NamedTensor> entries_;
};

struct Conv2dLayer {
  Tensor<float> weight;
  Tensor<float> bias;
  int stride = 1;
  int pad = 1;

  Tensor<float> operator()(const Tensor<float>& x) const { return conv2d(x, weight, bias, stride, pad); }
};

struct LinearLayer {
  Tensor<float> weight;
  Tensor<float> bias;

  Tensor<float> operator()(const Tensor<float>& x) const { return linear(x, weight, bias); }
};

/// He-style normal init: std = gain / sqrt(fan_in), zero bias.
Conv2dLayer make_conv(ParamStore& store, const std::string& name, int in_ch, int out_ch, int kernel,
                      int stride, int pad, Pcg64& rng, double gain = 1.4142135623730951,
                      bool bias = true);
LinearLayer make_linear(ParamStore& store, const std::string& name, int in, int out, Pcg64& rng,
                        double gain = 1.0);

/// Leaky ReLU used by the classifiers and encoder towers.
inline Tensor<float> act(const Tensor<float>& x) { return leaky_relu(x, 0.2); }
/// Fused-leaky style activation of the generator (slope 0.2, gain sqrt 2).
inline Tensor<float> fused_act(const Tensor<float>& x) { return leaky_relu(x, 0.2, 1.4142135623730951); }

}  // namespace gama
