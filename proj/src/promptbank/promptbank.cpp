#include "gama/promptbank.hpp"

#include <cmath>
#include <numeric>

#include <json.hpp>

#include "gama/checkpoint.hpp"
#include "gama/io.hpp"

namespace gama {

namespace {

constexpr char kMagic[4] = {'G', 'A', 'M', 'B'};
constexpr uint16_t kVersion = 1;

double cosine(std::span<const float> a, std::span<const float> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    ab += static_cast<double>(a[j]) * b[j];
    aa += static_cast<double>(a[j]) * a[j];
    bb += static_cast<double>(b[j]) * b[j];
  }
  if (aa <= kNormEps * kNormEps || bb <= kNormEps * kNormEps) throw Error("degenerate embedding");
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

std::filesystem::path matrix_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".bin";
  return p;
}

}  // namespace

std::vector<TextPrompt> build_prompts(const std::vector<std::string>& class_names, const CooccurrenceMatrix& o,
                                      const std::string& prefix) {
  const int c = o.num_classes();
  if (static_cast<int>(class_names.size()) != c)
    throw Error(ErrorKind::compatibility, "build_prompts: " + std::to_string(class_names.size()) +
                                              " class names for a " + std::to_string(c) + "-class matrix");
  if (o.matrix != o.matrix.transpose()) throw Error(ErrorKind::data, "build_prompts: co-occurrence matrix not symmetric");
  for (int i = 0; i < c; ++i)
    if (o.at(i, i)) throw Error(ErrorKind::data, "build_prompts: co-occurrence diagonal must be zero");
  std::vector<TextPrompt> prompts;
  for (auto [i, j] : o.upper_pairs()) prompts.push_back({i, j, make_prompt(prefix, {class_names[i], class_names[j]})});
  if (prompts.empty()) throw Error(ErrorKind::data, "no co-occurring pairs");
  return prompts;
}

std::span<const float> PromptBank::row(int p) const {
  const int k = dim();
  return embeddings.data().subspan(static_cast<std::size_t>(p) * k, k);
}

PromptBank embed_bank(const std::vector<TextPrompt>& prompts, const JointEncoder& encoder,
                      const std::string& encoder_fingerprint, const std::string& prefix) {
  if (prompts.empty()) throw Error(ErrorKind::data, "embed_bank: empty prompt list");
  NoGradGuard no_grad;
  std::vector<std::vector<int>> tokens;
  for (const auto& p : prompts) tokens.push_back(encoder.tokenize(p.text));
  return PromptBank{prompts, encoder.encode_tokens(tokens), prefix, encoder_fingerprint};
}

std::vector<int> sample_candidates(const PromptBank& bank, int count, Pcg64& rng) {
  const int p = bank.size();
  if (p == 0) throw Error(ErrorKind::data, "sample_candidates: empty bank");
  if (count < 1) throw Error(ErrorKind::config, "sample_candidates: B must be >= 1");
  std::vector<int> out;
  if (count <= p) {
    std::vector<int> rows(p);
    std::iota(rows.begin(), rows.end(), 0);
    for (int i = 0; i < count; ++i) {
      const auto j = i + static_cast<int>(rng.below(static_cast<uint64_t>(p - i)));
      std::swap(rows[i], rows[j]);
      out.push_back(rows[i]);
    }
  } else {
    for (int i = 0; i < count; ++i) out.push_back(static_cast<int>(rng.below(static_cast<uint64_t>(p))));
  }
  return out;
}

Retrieval least_similar(std::span<const float> image_emb, const PromptBank& bank, std::span<const int> candidates) {
  if (candidates.empty()) throw Error("least_similar: empty candidate set");
  if (static_cast<int>(image_emb.size()) != bank.dim()) throw Error("least_similar: dimension mismatch");
  Retrieval best;
  for (int row : candidates) {
    if (row < 0 || row >= bank.size()) throw Error("least_similar: candidate row out of range");
    const double cs = cosine(image_emb, bank.row(row));
    if (best.index < 0 || cs < best.similarity || (cs == best.similarity && row < best.index)) best = {row, cs};
  }
  return best;
}

Retrieval least_similar(std::span<const float> image_emb, const Tensor<float>& candidates) {
  if (candidates.ndim() != 2 || candidates.dim(0) == 0) throw Error("least_similar: empty candidate set");
  const auto k = static_cast<std::size_t>(candidates.dim(1));
  if (image_emb.size() != k) throw Error("least_similar: dimension mismatch");
  Retrieval best;
  for (int64_t r = 0; r < candidates.dim(0); ++r) {
    const double cs = cosine(image_emb, candidates.data().subspan(r * k, k));
    if (best.index < 0 || cs < best.similarity) best = {static_cast<int>(r), cs};
  }
  return best;
}

void save_bank(const PromptBank& bank, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.bytes(std::span(reinterpret_cast<const uint8_t*>(kMagic), 4));
  w.u16(kVersion);
  w.u32(1);
  write_tensor_record(w, {"A_t", bank.embeddings});
  w.seal();

  nlohmann::json doc;
  doc["prefix"] = bank.prefix;
  doc["encoder_fingerprint"] = bank.encoder_fingerprint;
  doc["P"] = bank.size();
  doc["K"] = bank.dim();
  doc["matrix_file"] = matrix_path(path).filename().string();
  auto list = nlohmann::json::array();
  for (const auto& p : bank.prompts) list.push_back({{"i", p.first}, {"j", p.second}, {"text", p.text}});
  doc["prompts"] = list;
  io::write_file_atomic(matrix_path(path), w.buffer());
  io::write_text_atomic(path, doc.dump(2) + "\n");
}

PromptBank load_bank(const std::filesystem::path& path) {
  const std::string what = "prompt bank " + path.string();
  PromptBank bank;
  std::filesystem::path bin;
  try {
    const auto doc = nlohmann::json::parse(io::read_text(path));
    bank.prefix = doc.at("prefix").get<std::string>();
    bank.encoder_fingerprint = doc.at("encoder_fingerprint").get<std::string>();
    for (const auto& p : doc.at("prompts"))
      bank.prompts.push_back({p.at("i").get<int>(), p.at("j").get<int>(), p.at("text").get<std::string>()});
    bin = path.parent_path() / doc.at("matrix_file").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::data, what + ": " + e.what());
  }
  const auto bytes = io::read_file(bin);
  {
    io::ByteReader head(bytes, what);
    if (head.text(4) != std::string(kMagic, 4)) throw Error(ErrorKind::data, what + ": bad magic");
    if (head.u16() != kVersion) throw Error(ErrorKind::data, what + ": unsupported version");
  }
  io::ByteReader r(io::verify_crc(bytes, what), what);
  r.raw(6);
  if (r.u32() != 1) throw Error(ErrorKind::data, what + ": expected a single matrix");
  bank.embeddings = read_tensor_record(r).tensor;
  if (bank.embeddings.ndim() != 2 || bank.embeddings.dim(0) != bank.size())
    throw Error(ErrorKind::data, what + ": matrix rows do not match prompt count");
  return bank;
}

}  // namespace gama
