#include "gama/checkpoint.hpp"

namespace gama {

namespace {

constexpr char kMagic[4] = {'G', 'A', 'M', 'C'};
constexpr uint16_t kVersion = 1;

}  // namespace

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::surrogate: return "surrogate";
    case ModelKind::encoder: return "encoder";
    case ModelKind::generator: return "generator";
  }
  return "unknown";
}

std::filesystem::path checkpoint_sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

void write_tensor_record(io::ByteWriter& w, const NamedTensor& t) {
  w.u16(static_cast<uint16_t>(t.name.size()));
  w.text(t.name);
  w.u8(static_cast<uint8_t>(t.tensor.ndim()));
  for (int64_t d : t.tensor.shape()) w.u32(static_cast<uint32_t>(d));
  w.f32s(t.tensor.data());
}

NamedTensor read_tensor_record(io::ByteReader& r) {
  NamedTensor t;
  t.name = r.text(r.u16());
  const int ndim = r.u8();
  Shape shape(ndim);
  for (auto& d : shape) {
    d = r.u32();
    if (d == 0) throw Error(ErrorKind::data, "tensor '" + t.name + "' has a zero dimension");
  }
  const int64_t count = ndim == 0 ? 1 : shape_numel(shape);
  if (static_cast<std::size_t>(count) * 4 > r.remaining())
    throw Error(ErrorKind::data, "tensor '" + t.name + "': truncated payload");
  std::vector<float> data(count);
  r.f32s(data);
  t.tensor = Tensor<float>::from(ndim == 0 ? Shape{1} : shape, std::move(data));
  return t;
}

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt) {
  io::ByteWriter w;
  w.bytes(std::span(reinterpret_cast<const uint8_t*>(kMagic), 4));
  w.u16(kVersion);
  w.u8(static_cast<uint8_t>(ckpt.kind));
  w.u16(ckpt.architecture_id);
  w.u32(static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) write_tensor_record(w, t);
  w.seal();
  auto meta = ckpt.metadata;
  meta["model_kind"] = model_kind_name(ckpt.kind);
  meta["architecture_id"] = ckpt.architecture_id;
  io::write_file_atomic(path, w.buffer());
  io::write_text_atomic(checkpoint_sidecar_path(path), meta.dump(2) + "\n");
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path, std::optional<ModelKind> expected) {
  const auto bytes = io::read_file(path);
  const std::string what = "checkpoint " + path.string();
  {
    io::ByteReader head(bytes, what);
    if (head.text(4) != std::string(kMagic, 4)) throw Error(ErrorKind::data, what + ": bad magic");
    if (head.u16() != kVersion) throw Error(ErrorKind::data, what + ": unsupported version");
  }
  io::ByteReader r(io::verify_crc(bytes, what), what);
  r.raw(6);
  ModelCheckpoint ckpt;
  const uint8_t kind = r.u8();
  if (kind > 2) throw Error(ErrorKind::data, what + ": unknown model kind");
  ckpt.kind = static_cast<ModelKind>(kind);
  if (expected && *expected != ckpt.kind)
    throw Error(ErrorKind::compatibility, what + ": kind mismatch (file holds a " + model_kind_name(ckpt.kind) +
                                              ", expected " + model_kind_name(*expected) + ")");
  ckpt.architecture_id = r.u16();
  const uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) ckpt.tensors.push_back(read_tensor_record(r));
  if (r.remaining() != 0) throw Error(ErrorKind::data, what + ": trailing bytes after tensor table");

  const auto sidecar = checkpoint_sidecar_path(path);
  if (std::filesystem::exists(sidecar)) {
    try {
      ckpt.metadata = nlohmann::json::parse(io::read_text(sidecar));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::data, what + ": bad metadata sidecar: " + e.what());
    }
  }
  return ckpt;
}

}  // namespace gama
