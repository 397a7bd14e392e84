#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gama/io.hpp"
#include "gama/layers.hpp"

namespace gama {

enum class ModelKind : uint8_t { surrogate = 0, encoder = 1, generator = 2 };
std::string model_kind_name(ModelKind kind);

/// Binary layout (little-endian): "GAMC", u16 version = 1, u8 kind,
/// u16 architecture_id, u32 tensor count, tensor records, CRC32 trailer.
/// Metadata lives in the "<path>.json" sidecar.
struct ModelCheckpoint {
  ModelKind kind = ModelKind::surrogate;
  uint16_t architecture_id = 0;
  std::vector<NamedTensor> tensors;
  nlohmann::json metadata = nlohmann::json::object();
};

/// Record: u16 name length, UTF-8 name, u8 ndim, u32 dims, f32 payload.
void write_tensor_record(io::ByteWriter& w, const NamedTensor& t);
NamedTensor read_tensor_record(io::ByteReader& r);

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt);
/// When `expected` is given a different stored kind is a "kind mismatch".
ModelCheckpoint load_checkpoint(const std::filesystem::path& path,
                                std::optional<ModelKind> expected = std::nullopt);
std::filesystem::path checkpoint_sidecar_path(const std::filesystem::path& path);

}  // namespace gama
