#include "gama/layers.hpp"

#include <cmath>

#include "gama/io.hpp"

namespace gama {

Tensor<float> ParamStore::add(const std::string& name, Shape shape) {
  for (const auto& e : entries_)
    if (e.name == name) throw Error("duplicate parameter name " + name);
  auto t = Tensor<float>::zeros(std::move(shape));
  t.set_requires_grad(true);
  entries_.push_back({name, t});
  return t;
}

Tensor<float> ParamStore::get(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw Error("no parameter named " + name);
}

std::vector<Tensor<float>> ParamStore::tensors() const {
  std::vector<Tensor<float>> out;
  for (const auto& e : entries_) out.push_back(e.tensor);
  return out;
}

void ParamStore::set_requires_grad(bool on) {
  for (auto& e : entries_) e.tensor.set_requires_grad(on);
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

bool ParamStore::any_grad() const {
  for (const auto& e : entries_)
    if (e.tensor.has_grad()) return true;
  return false;
}

uint32_t ParamStore::checksum() const {
  io::ByteWriter w;
  for (const auto& e : entries_) {
    w.text(e.name);
    for (int64_t d : e.tensor.shape()) w.u32(static_cast<uint32_t>(d));
    w.f32s(e.tensor.data());
  }
  return io::crc32(w.buffer());
}

void ParamStore::assign(const std::vector<NamedTensor>& other) {
  if (other.size() != entries_.size())
    throw Error(ErrorKind::compatibility, "parameter count mismatch: expected " + std::to_string(entries_.size()) +
                                              ", got " + std::to_string(other.size()));
  for (std::size_t i = 0; i < other.size(); ++i) {
    auto& mine = entries_[i];
    const auto& theirs = other[i];
    if (mine.name != theirs.name || mine.tensor.shape() != theirs.tensor.shape())
      throw Error(ErrorKind::compatibility, "parameter mismatch at '" + theirs.name + "' " +
                                                shape_str(theirs.tensor.shape()) + ", expected '" + mine.name +
                                                "' " + shape_str(mine.tensor.shape()));
    std::copy(theirs.tensor.vec().begin(), theirs.tensor.vec().end(), mine.tensor.data().begin());
  }
}

Conv2dLayer make_conv(ParamStore& store, const std::string& name, int in_ch, int out_ch, int kernel,
                      int stride, int pad, Pcg64& rng, double gain, bool bias) {
  Conv2dLayer layer;
  layer.weight = store.add(name + ".weight", {out_ch, in_ch, kernel, kernel});
  if (bias) layer.bias = store.add(name + ".bias", {out_ch});
  layer.stride = stride;
  layer.pad = pad;
  const double std = gain / std::sqrt(static_cast<double>(in_ch * kernel * kernel));
  for (auto& v : layer.weight.data()) v = static_cast<float>(rng.normal() * std);
  return layer;
}

LinearLayer make_linear(ParamStore& store, const std::string& name, int in, int out, Pcg64& rng,
                        double gain) {
  LinearLayer layer;
  layer.weight = store.add(name + ".weight", {out, in});
  layer.bias = store.add(name + ".bias", {out});
  const double std = gain / std::sqrt(static_cast<double>(in));
  for (auto& v : layer.weight.data()) v = static_cast<float>(rng.normal() * std);
  return layer;
}

}  // namespace gama
