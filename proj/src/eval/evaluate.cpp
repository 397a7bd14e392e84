#include "gama/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "gama/defenses.hpp"
#include "gama/io.hpp"
#include "gama/metrics.hpp"

namespace gama {

namespace {

constexpr int kChunk = 64;
constexpr double kBudgetSlack = 1e-6;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

Tensor<float> concat_rows(const std::vector<Tensor<float>>& parts) {
  std::vector<float> data;
  int64_t rows = 0, width = 0;
  for (const auto& p : parts) {
    rows += p.dim(0);
    width = p.dim(1);
    data.insert(data.end(), p.vec().begin(), p.vec().end());
  }
  return Tensor<float>::from({rows, width}, std::move(data));
}

}  // namespace

std::string defense_name(Defense d) {
  switch (d) {
    case Defense::none: return "none";
    case Defense::median3: return "median3";
    case Defense::pgd: return "pgd";
  }
  return "none";
}

Defense defense_from_name(const std::string& name) {
  if (name == "none") return Defense::none;
  if (name == "median3") return Defense::median3;
  if (name == "pgd") return Defense::pgd;
  throw Error(ErrorKind::config, "defense: unknown defense '" + name + "' (expected none, median3 or pgd)");
}

std::string scenario_name(Scenario s) { return s == Scenario::white ? "white" : "black"; }

Victim make_victim(std::string id, SurrogateClassifier model) {
  const auto fingerprint = io::hex32(model.params().checksum());
  std::string dist;
  if (model.metadata.is_object() && model.metadata.contains("distribution_id"))
    dist = model.metadata["distribution_id"].get<std::string>();
  return Victim{std::move(id), std::move(model), fingerprint, dist};
}

double linf_distance(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape() != b.shape()) throw Error(ErrorKind::data, "linf_distance: shape mismatch");
  double m = 0.0;
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(static_cast<double>(x[i]) - y[i]));
  return m;
}

void verify_budget(const Tensor<float>& x, const Tensor<float>& x_adv, float eps) {
  const double d = linf_distance(x, x_adv);
  if (!(d <= eps + kBudgetSlack))
    throw Error("budget violation: ||x_adv - x||_inf = " + std::to_string(d) + " > eps = " + std::to_string(eps));
  for (float v : x_adv.data())
    if (!(v >= 0.0f && v <= 1.0f)) throw Error("budget violation: perturbed pixel outside [0,1]");
}

double probe_generator_budget(const PerturbationGenerator& generator, float eps, const CanvasDims& dims, int count,
                              uint64_t seed) {
  NoGradGuard no_grad;
  auto rng = make_rng(seed, RngStream::sampling, 0xB0D6E7);
  double worst = 0.0;
  const int64_t per = static_cast<int64_t>(dims.channels) * dims.height * dims.width;
  for (int done = 0; done < count; done += kChunk) {
    const int n = std::min(kChunk, count - done);
    std::vector<float> data(static_cast<std::size_t>(n * per));
    for (auto& v : data) v = static_cast<float>(rng.uniform());
    const auto x = Tensor<float>::from({n, dims.channels, dims.height, dims.width}, std::move(data));
    const auto x_adv = generator.forward(x, eps);
    verify_budget(x, x_adv, eps);
    worst = std::max(worst, linf_distance(x, x_adv));
  }
  return worst;
}

Tensor<float> resize_bilinear(const Tensor<float>& images, int height, int width) {
  if (images.ndim() != 4) throw Error("resize_bilinear: expected [N,T,H,W]");
  const int64_t n = images.dim(0), t = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (h == height && w == width) return images;
  std::vector<float> out(static_cast<std::size_t>(n * t * height * width));
  const float sy = static_cast<float>(h) / height, sx = static_cast<float>(w) / width;
  for (int64_t p = 0; p < n * t; ++p) {
    const float* src = images.ptr() + p * h * w;
    float* dst = out.data() + p * height * width;
    for (int y = 0; y < height; ++y) {
      const float fy = std::clamp((y + 0.5f) * sy - 0.5f, 0.0f, static_cast<float>(h - 1));
      const int y0 = static_cast<int>(fy), y1 = std::min<int>(y0 + 1, static_cast<int>(h - 1));
      const float wy = fy - y0;
      for (int x = 0; x < width; ++x) {
        const float fx = std::clamp((x + 0.5f) * sx - 0.5f, 0.0f, static_cast<float>(w - 1));
        const int x0 = static_cast<int>(fx), x1 = std::min<int>(x0 + 1, static_cast<int>(w - 1));
        const float wx = fx - x0;
        const float top = src[y0 * w + x0] * (1 - wx) + src[y0 * w + x1] * wx;
        const float bot = src[y1 * w + x0] * (1 - wx) + src[y1 * w + x1] * wx;
        dst[y * width + x] = top * (1 - wy) + bot * wy;
      }
    }
  }
  return Tensor<float>::from({n, t, height, width}, std::move(out));
}

AttackReport evaluate_attack(const PerturbationGenerator* generator, const std::vector<const Victim*>& victims,
                             const SceneDataset& dataset, const EvalOptions& options) {
  if (dataset.samples.empty()) throw Error(ErrorKind::data, "evaluate: empty dataset");
  if (victims.empty()) throw Error(ErrorKind::config, "evaluate: no victims");
  NoGradGuard no_grad;

  // Perturb once; every victim sees the same x̃. The budget is checked before any scoring.
  std::vector<Tensor<float>> clean_chunks, adv_chunks;
  std::vector<std::vector<int>> chunk_indices;
  for (std::size_t s = 0; s < dataset.size(); s += kChunk) {
    std::vector<int> idx;
    for (std::size_t i = s; i < std::min(dataset.size(), s + kChunk); ++i) idx.push_back(static_cast<int>(i));
    auto x = dataset.batch_images(idx);
    auto x_adv = generator ? generator->forward(x, options.epsilon) : x.clone();
    verify_budget(x, x_adv, options.epsilon);
    clean_chunks.push_back(std::move(x));
    adv_chunks.push_back(std::move(x_adv));
    chunk_indices.push_back(std::move(idx));
  }

  const int c_data = dataset.num_classes();
  std::vector<int> all(dataset.size());
  std::iota(all.begin(), all.end(), 0);
  const auto truth_f = dataset.batch_labels(all);
  std::vector<uint8_t> truths(truth_f.size());
  for (std::size_t i = 0; i < truths.size(); ++i) truths[i] = truth_f[i] > 0.5f;
  std::vector<int> first_label(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto active = dataset.samples[i].active_classes();
    first_label[i] = active.empty() ? 0 : active.front();
  }

  AttackReport report;
  for (const Victim* v : victims) {
    const auto& cfg = v->model.config();
    if (cfg.num_classes != c_data)
      throw Error(ErrorKind::compatibility, "evaluate: victim '" + v->id + "' has " + std::to_string(cfg.num_classes) +
                                                " classes, dataset has " + std::to_string(c_data));
    if (cfg.input.channels != dataset.dims.channels)
      throw Error(ErrorKind::compatibility, "evaluate: victim '" + v->id + "' expects a different channel count");

    auto prepare = [&](const Tensor<float>& x) {
      auto y = resize_bilinear(x, cfg.input.height, cfg.input.width);
      return options.defense == Defense::median3 ? median_blur(y, 3) : y;
    };
    std::vector<Tensor<float>> clean_scores, adv_scores, clean_feat, adv_feat;
    for (std::size_t k = 0; k < clean_chunks.size(); ++k) {
      auto oc = v->model.forward(prepare(clean_chunks[k]));
      auto oa = v->model.forward(prepare(adv_chunks[k]));
      clean_scores.push_back(oc.logits);
      adv_scores.push_back(oa.logits);
      if (options.keep_outputs) {
        clean_feat.push_back(oc.feature);
        adv_feat.push_back(oa.feature);
      }
    }
    const auto logits_clean = concat_rows(clean_scores), logits_adv = concat_rows(adv_scores);

    AttackRow row;
    row.generator_id = options.generator_id;
    row.surrogate_id = options.surrogate_id;
    row.victim_id = v->id;
    row.task = task_name(cfg.task);
    row.defense = defense_name(options.defense);
    const bool same_weights = std::find(options.surrogate_fingerprints.begin(), options.surrogate_fingerprints.end(),
                                        v->fingerprint) != options.surrogate_fingerprints.end();
    const bool same_distribution =
        options.surrogate_distribution == dataset.distribution_id && v->distribution_id == dataset.distribution_id;
    row.scenario = scenario_name(same_weights && same_distribution ? Scenario::white : Scenario::black);
    row.epsilon = options.epsilon;

    VictimOutputs out;
    if (cfg.task == Task::multi_label) {
      row.metric = "hamming";
      out.clean_predictions = threshold_predictions(sigmoid(logits_clean), options.threshold);
      out.attacked_predictions = threshold_predictions(sigmoid(logits_adv), options.threshold);
      row.clean = hamming_score(out.clean_predictions, truths, c_data);
      row.attacked = hamming_score(out.attacked_predictions, truths, c_data);
    } else {
      row.metric = "top1";
      row.clean = top1_accuracy(logits_clean, first_label);
      row.attacked = top1_accuracy(logits_adv, first_label);
      auto one_hot = [&](const Tensor<float>& logits) {
        std::vector<uint8_t> p(logits.numel(), 0);
        const auto am = argmax_rows(logits);
        for (std::size_t i = 0; i < am.size(); ++i) p[i * c_data + am[i]] = 1;
        return p;
      };
      out.clean_predictions = one_hot(logits_clean);
      out.attacked_predictions = one_hot(logits_adv);
    }
    report.rows.push_back(row);
    if (options.keep_outputs) {
      out.clean_features = concat_rows(clean_feat);
      out.attacked_features = concat_rows(adv_feat);
      report.outputs.push_back(std::move(out));
    }
  }
  return report;
}

std::string format_report(const std::vector<AttackRow>& rows) {
  std::string s = kReportHeader + "\n";
  for (const auto& r : rows) {
    s += r.generator_id + "," + r.surrogate_id + "," + r.victim_id + "," + r.task + "," + r.defense + "," +
         r.scenario + "," + r.metric + "," + format_double(r.clean) + "," + format_double(r.attacked) + "," +
         format_double(r.epsilon) + "\n";
  }
  return s;
}

void write_report_csv(const std::vector<AttackRow>& rows, const std::filesystem::path& path) {
  io::write_text_atomic(path, format_report(rows));
}

std::vector<AttackRow> read_report_csv(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader)
    throw Error(ErrorKind::data, "report " + path.string() + ": unexpected header");
  std::vector<AttackRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 10) throw Error(ErrorKind::data, "report " + path.string() + ":" + std::to_string(lineno) + ": expected 10 fields");
    try {
      rows.push_back({f[0], f[1], f[2], f[3], f[4], f[5], f[6], std::stod(f[7]), std::stod(f[8]), std::stod(f[9])});
    } catch (const std::exception&) {
      throw Error(ErrorKind::data, "report " + path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
  }
  return rows;
}

}  // namespace gama
