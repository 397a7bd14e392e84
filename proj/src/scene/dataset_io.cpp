#include <json.hpp>

#include "gama/io.hpp"
#include "gama/scene.hpp"

namespace gama {

namespace {

constexpr char kMagic[4] = {'G', 'A', 'M', 'D'};
constexpr uint16_t kVersion = 1;

}  // namespace

std::filesystem::path dataset_sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

void save_dataset(const SceneDataset& dataset, const std::filesystem::path& path) {
  const int c = dataset.num_classes();
  const auto& d = dataset.dims;
  io::ByteWriter w;
  w.bytes(std::span(reinterpret_cast<const uint8_t*>(kMagic), 4));
  w.u16(kVersion);
  w.u16(static_cast<uint16_t>(c));
  w.u32(static_cast<uint32_t>(dataset.samples.size()));
  w.u8(static_cast<uint8_t>(d.channels));
  w.u16(static_cast<uint16_t>(d.height));
  w.u16(static_cast<uint16_t>(d.width));
  const std::size_t label_bytes = (c + 7) / 8;
  for (const auto& s : dataset.samples) {
    std::vector<uint8_t> packed(label_bytes, 0);
    for (int k = 0; k < c; ++k)
      if (s.labels[k]) packed[k / 8] |= static_cast<uint8_t>(1u << (k % 8));
    w.bytes(packed);
    w.f32s(s.image.data());
  }
  w.seal();

  nlohmann::json manifest;
  manifest["distribution_id"] = dataset.distribution_id;
  manifest["seed"] = dataset.seed;
  manifest["split"] = split_name(dataset.split);
  manifest["class_names"] = dataset.class_names();
  auto pairs = nlohmann::json::array();
  for (auto [i, j] : dataset.allowed_pairs) pairs.push_back({i, j});
  manifest["allowed_pairs"] = pairs;
  manifest["split_indices"] = {{"train", dataset.train_indices}, {"test", dataset.test_indices}};

  io::write_file_atomic(path, w.buffer());
  io::write_text_atomic(dataset_sidecar_path(path), manifest.dump(2) + "\n");
}

SceneDataset load_dataset(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  const std::string what = "dataset " + path.string();
  {
    io::ByteReader head(bytes, what);
    if (head.text(4) != std::string(kMagic, 4)) throw Error(ErrorKind::data, what + ": bad magic");
    if (head.u16() != kVersion) throw Error(ErrorKind::data, what + ": unsupported version");
  }
  io::ByteReader r(io::verify_crc(bytes, what), what);
  r.raw(6);
  const int c = r.u16();
  const uint32_t n = r.u32();
  CanvasDims dims;
  dims.channels = r.u8();
  dims.height = r.u16();
  dims.width = r.u16();

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_text(dataset_sidecar_path(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::data, what + ": bad sidecar manifest: " + e.what());
  }

  SceneDataset ds;
  ds.dims = dims;
  try {
    ds.distribution_id = manifest.at("distribution_id").get<std::string>();
    ds.seed = manifest.at("seed").get<uint64_t>();
    const auto split = manifest.value("split", std::string("full"));
    ds.split = split == "train" ? Split::train : split == "test" ? Split::test : Split::full;
    const auto names = manifest.at("class_names").get<std::vector<std::string>>();
    if (static_cast<int>(names.size()) != c) throw Error(ErrorKind::data, what + ": class count mismatch");
    ds.class_specs = make_class_specs(distribution_style(ds.distribution_id), c);
    for (int k = 0; k < c; ++k)
      if (ds.class_specs[k].name != names[k]) throw Error(ErrorKind::data, what + ": class name mismatch");
    for (const auto& p : manifest.at("allowed_pairs")) ds.allowed_pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    ds.train_indices = manifest.at("split_indices").at("train").get<std::vector<int>>();
    ds.test_indices = manifest.at("split_indices").at("test").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::data, what + ": bad sidecar manifest: " + e.what());
  }

  const std::size_t label_bytes = (c + 7) / 8;
  const int64_t pixels = static_cast<int64_t>(dims.channels) * dims.height * dims.width;
  ds.samples.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    Sample s;
    auto packed = r.raw(label_bytes);
    s.labels.resize(c);
    for (int k = 0; k < c; ++k) s.labels[k] = (packed[k / 8] >> (k % 8)) & 1u;
    std::vector<float> px(pixels);
    r.f32s(px);
    s.image = Tensor<float>::from({dims.channels, dims.height, dims.width}, std::move(px));
    ds.samples.push_back(std::move(s));
  }
  if (r.remaining() != 0) throw Error(ErrorKind::data, what + ": trailing bytes");
  for (int i : ds.train_indices)
    if (i < 0 || i >= static_cast<int>(n)) throw Error(ErrorKind::data, what + ": split index out of range");
  for (int i : ds.test_indices)
    if (i < 0 || i >= static_cast<int>(n)) throw Error(ErrorKind::data, what + ": split index out of range");
  return ds;
}

}  // namespace gama
