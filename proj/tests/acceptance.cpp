// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "gama/checkpoint.hpp"
#include "gama/cli.hpp"
#include "gama/defenses.hpp"
#include "gama/evaluate.hpp"
#include "gama/io.hpp"
#include "gama/metrics.hpp"
#include "gama/pca.hpp"
#include "gama/promptbank.hpp"
#include "support/grad_cases.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace gama;
using namespace gama::testing;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  int id;
  bool pass;
  std::string detail;
};

std::vector<Verdict> verdicts;

void report(int id, bool pass, const std::string& detail) {
  verdicts.push_back({id, pass, detail});
  std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

/// Runs one CLI invocation, appending its output to the work log.
class Runner {
 public:
  explicit Runner(fs::path log) : log_(log, std::ios::app) {}

  void operator()(std::vector<std::string> args) {
    std::ostringstream out, err;
    std::string line = "$ gama";
    for (const auto& a : args) line += " " + a;
    log_ << line << "\n";
    const auto t0 = Clock::now();
    const int code = cli::run(args, out, err);
    log_ << out.str() << err.str() << "[exit " << code << ", " << fmt("%.1f", seconds_since(t0)) << " s]\n";
    log_.flush();
    if (code != 0) throw std::runtime_error(line + " failed with exit " + std::to_string(code) + ": " + err.str());
  }

 private:
  std::ofstream log_;
};

// ---------------------------------------------------------------------------

void criterion_gradients() {
  const auto t0 = Clock::now();
  const auto results = run_gradient_cases(50, 2024);
  const double elapsed = seconds_since(t0);
  double worst = 0;
  std::string worst_name;
  for (const auto& r : results)
    if (r.worst >= worst) {
      worst = r.worst;
      worst_name = r.name;
    }
  report(1, worst < 1e-3 && elapsed < 120.0,
         std::to_string(results.size()) + " primitives/losses x 50 instances, max rel err " + fmt("%.2e", worst) + " (" +
             worst_name + "), " + fmt("%.1f", elapsed) + " s");
}

/// Independent budget check: 1000 uniform images, max |x_adv - x| and range.
struct BudgetCheck {
  double worst = 0;
  bool in_range = true;
};

BudgetCheck check_budget(const PerturbationGenerator& gen, float eps, uint64_t seed) {
  NoGradGuard g;
  Pcg64 rng(seed, 77);
  BudgetCheck b;
  for (int done = 0; done < 1000; done += 50) {
    std::vector<float> v(50 * 3 * 32 * 32);
    for (auto& p : v) p = static_cast<float>(rng.uniform());
    const auto x = Tensor<float>::from({50, 3, 32, 32}, v);
    const auto y = gen.forward(x, eps);
    for (int64_t i = 0; i < x.numel(); ++i) {
      b.worst = std::max(b.worst, static_cast<double>(std::abs(y.ptr()[i] - x.ptr()[i])));
      b.in_range &= y.ptr()[i] >= 0.0f && y.ptr()[i] <= 1.0f;
    }
  }
  return b;
}

void criterion_retrieval() {
  Pcg64 rng(31);
  int agree = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int p = 16 + static_cast<int>(rng.below(49)), k = 64, b = 16;
    std::vector<float> rows(p * k);
    for (auto& v : rows) v = static_cast<float>(rng.normal());
    if (trial % 10 == 0)  // exact ties: duplicated rows
      for (int j = 0; j < k; ++j) rows[(p - 1) * k + j] = rows[j];
    for (int r = 0; r < p; ++r) {
      double n = 0;
      for (int j = 0; j < k; ++j) n += double(rows[r * k + j]) * rows[r * k + j];
      for (int j = 0; j < k; ++j) rows[r * k + j] = static_cast<float>(rows[r * k + j] / std::sqrt(n));
    }
    PromptBank bank;
    bank.prompts.resize(p);
    bank.embeddings = Tensor<float>::from({p, k}, rows);
    std::vector<float> img(k);
    for (auto& v : img) v = static_cast<float>(rng.normal());
    if (trial % 10 == 0)  // make the duplicated rows the minimizers
      for (int j = 0; j < k; ++j) img[j] = -rows[j];
    auto candidates = sample_candidates(bank, b, rng);
    if (trial % 10 == 0) {
      candidates[0] = p - 1;
      candidates[1] = 0;
    }

    // Exhaustive argmin; ties go to the lowest bank row.
    int best = -1;
    double best_sim = 0;
    for (int c : candidates) {
      double dot = 0, na = 0, nb = 0;
      for (int j = 0; j < k; ++j) {
        dot += double(img[j]) * rows[c * k + j];
        na += double(img[j]) * img[j];
        nb += double(rows[c * k + j]) * rows[c * k + j];
      }
      const double sim = dot / std::sqrt(na * nb);
      if (best < 0 || sim < best_sim - 1e-12 || (std::abs(sim - best_sim) <= 1e-12 && c < best)) {
        best = c;
        best_sim = sim;
      }
    }
    agree += least_similar(img, bank, candidates).index == best;
  }
  report(3, agree == 100, std::to_string(agree) + "/100 random banks (K=64, B=16, 10 with exact ties) agree");
}

void criterion_metrics() {
  Pcg64 rng(41);
  double worst_h = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int c = 2 + static_cast<int>(rng.below(9)), n = 1 + static_cast<int>(rng.below(20));
    std::vector<uint8_t> y(n * c), yh(n * c);
    const double density = rng.uniform(0.1, 0.7);
    for (auto& v : y) v = rng.uniform() < density;
    for (auto& v : yh) v = rng.uniform() < density;
    worst_h = std::max(worst_h, std::abs(hamming_score(yh, y, c) - hamming_by_sets(yh, y, c)));
  }

  // Context score: predictions built so that p = a / (a + b) exactly, where
  // a rows co-predict a pair inside O and b rows a pair outside it.
  double worst_c = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int c = 6;
    const auto o = CooccurrenceMatrix::from_pairs(c, {{0, 1}, {2, 3}, {4, 5}});
    const int a = 1 + static_cast<int>(rng.below(3)), b = static_cast<int>(rng.below(3));
    std::vector<uint8_t> pred;
    const std::vector<std::pair<int, int>> inside{{0, 1}, {2, 3}, {4, 5}}, outside{{0, 2}, {1, 4}, {3, 5}};
    for (int i = 0; i < a; ++i) {
      std::vector<uint8_t> row(c, 0);
      row[inside[i].first] = row[inside[i].second] = 1;
      pred.insert(pred.end(), row.begin(), row.end());
    }
    for (int i = 0; i < b; ++i) {
      std::vector<uint8_t> row(c, 0);
      row[outside[i].first] = row[outside[i].second] = 1;
      pred.insert(pred.end(), row.begin(), row.end());
    }
    const double accuracy = rng.uniform();
    const double p = double(a) / (a + b), m = 1 - accuracy;
    const auto s = context_consistency_score(pred, c, o, accuracy);
    worst_c = std::max({worst_c, std::abs(s.score - 2 * p * m / (p + m)), std::abs(s.precision - p)});
  }

  int median_ok = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 4 + static_cast<int>(rng.below(29)), w = 4 + static_cast<int>(rng.below(29));
    std::vector<float> v(3 * h * w);
    for (auto& x : v) x = static_cast<float>(rng.uniform());
    median_ok += std::ranges::equal(median_blur(Tensor<float>::from({3, h, w}, v), 3).vec(), median_by_sort(v, 3, h, w, 3));
  }
  report(4, worst_h == 0.0 && worst_c < 1e-9 && median_ok == 50,
         "hamming max |diff| " + fmt("%.1e", worst_h) + " over 1000 pairs; context max err " + fmt("%.1e", worst_c) +
             " over 100; median blur " + std::to_string(median_ok) + "/50 exact");
}

void criterion_closed_forms() {
  Pcg64 rng(51);
  double worst_img = 0, worst_txt = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 64;
    const auto a = unit_rows(rng, 1, k), b = unit_rows(rng, 1, k), rho = unit_rows(rng, 1, k);
    double cs = 0, d2 = 0;
    for (int j = 0; j < k; ++j) {
      cs += a.ptr()[j] * b.ptr()[j];
      d2 += (a.ptr()[j] - rho.ptr()[j]) * (a.ptr()[j] - rho.ptr()[j]);
    }
    worst_img = std::max(worst_img, std::abs(loss_img(a, b).item() - (-(2 - 2 * cs) / k)));
    worst_txt = std::max(worst_txt, std::abs(loss_txt(a, a, rho, 1.0).item() - (d2 + 1.0) / k));
    // Single precision, as used in training.
    Tensor<float> af = Tensor<float>::from({1, k}, std::vector<float>(a.vec().begin(), a.vec().end()));
    Tensor<float> bf = Tensor<float>::from({1, k}, std::vector<float>(b.vec().begin(), b.vec().end()));
    Tensor<float> rf = Tensor<float>::from({1, k}, std::vector<float>(rho.vec().begin(), rho.vec().end()));
    worst_img = std::max(worst_img, std::abs(loss_img(af, bf).item() - (-(2 - 2 * cs) / k)));
    worst_txt = std::max(worst_txt, std::abs(loss_txt(af, af, rf, 1.0f).item() - (d2 + 1.0) / k));
  }
  report(5, worst_img < 1e-6 && worst_txt < 1e-6,
         "loss_img max err " + fmt("%.1e", worst_img) + ", loss_txt(z~=z) max err " + fmt("%.1e", worst_txt));
}

void criterion_pca_oracle(double separation_min, int runs) {
  Pcg64 rng(61);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(7)), n = 5 + static_cast<int>(rng.below(60));
    Eigen::MatrixXd x(n, k);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) x(i, j) = rng.normal() * (0.5 + rng.uniform());
    const auto r = pca_top2(x);
    const auto ev = jacobi_eigenvalues(sample_covariance(x));
    worst = std::max({worst, std::abs(r.eigenvalues(0) - ev[0]), std::abs(r.eigenvalues(1) - ev[1])});
  }
  report(10, worst < 1e-6 && separation_min > 0.0 && runs > 0,
         "max |lambda - Jacobi| " + fmt("%.1e", worst) + " over 100 draws (K<=8); min centroid separation " +
             fmt("%.4f", separation_min) + " over " + std::to_string(runs) + " trained runs");
}

// ---------------------------------------------------------------------------
// End-to-end pipeline

struct SeedResult {
  uint64_t seed = 0;
  double clean_surrogate = 0, white_attacked = 0;
  double clean_black = 0, black_attacked = 0;
  std::map<std::string, double> ablation;  // method -> black-box attacked
  double median_attacked = 0, pgd_attacked = 0;
  double budget_worst = 0;
  bool budget_in_range = true;
  double separation = 0;
  double seconds = 0;
};

struct Pipeline {
  fs::path dir;
  uint64_t seed;
  Runner& run;

  std::string p(const std::string& name) const { return (dir / name).string(); }
  std::string s(uint64_t v) const { return std::to_string(v); }

  // The scene set stays at the default dataset seed; `seed` drives training only.
  void prepare() {
    run({"dataset", "--out", p("scenes.gamd")});
    run({"train-surrogate", "--dataset", p("scenes.gamd"), "--out", p("surrogate_arch0.gamc"), "--arch", "0", "--seed",
         s(seed)});
    run({"pretrain-encoder", "--dataset", p("scenes.gamd"), "--out", p("encoder.gamc"), "--seed", s(seed)});
    run({"build-bank", "--encoder", p("encoder.gamc"), "--dataset", p("scenes.gamd"), "--out", p("bank.json")});
  }

  void victims() {
    run({"train-surrogate", "--dataset", p("scenes.gamd"), "--out", p("victim_arch1.gamc"), "--arch", "1", "--seed",
         s(seed + 100)});
    run({"train-surrogate", "--dataset", p("scenes.gamd"), "--out", p("victim_arch1_pgd.gamc"), "--arch", "1", "--seed",
         s(seed + 100), "--pgd"});
    io::write_text_atomic(dir / "victims.json",
                          R"({"victims": [)"
                          R"({"id": "arch0", "checkpoint": "surrogate_arch0.gamc", "pgd_checkpoint": "surrogate_arch0.gamc"},)"
                          R"({"id": "arch1", "checkpoint": "victim_arch1.gamc", "pgd_checkpoint": "victim_arch1_pgd.gamc"}]})");
  }

  void train(const std::string& method) {
    run({"train-generator", "--method", method, "--surrogate", p("surrogate_arch0.gamc"), "--encoder",
         p("encoder.gamc"), "--bank", p("bank.json"), "--dataset", p("scenes.gamd"), "--seed", s(seed), "--out",
         p(method + ".gamc")});
  }

  void evaluate(const std::string& method, const std::string& defense, bool extras = false) {
    std::vector<std::string> args{"evaluate",
                                  "--generator",
                                  p(method + ".gamc"),
                                  "--victims",
                                  p("victims.json"),
                                  "--dataset",
                                  p("scenes.gamd"),
                                  "--defense",
                                  defense,
                                  "--out",
                                  p("eval_" + method + "_" + defense + ".csv"),
                                  "--generator-id",
                                  method + "_s" + s(seed)};
    if (extras) {
      args.insert(args.end(), {"--embeddings-out", p("embeddings_" + method + ".csv"), "--predictions-out",
                               p("predictions_" + method + ".csv")});
    }
    run(args);
  }
};

const AttackRow& row_for(const std::vector<AttackRow>& rows, const std::string& victim) {
  for (const auto& r : rows)
    if (r.victim_id == victim) return r;
  throw std::runtime_error("no report row for victim " + victim);
}

double centroid_distance_from_csv(const fs::path& csv) {
  std::istringstream in(io::read_text(csv));
  std::string line;
  std::getline(in, line);
  double sx[2] = {0, 0}, sy[2] = {0, 0};
  int n[2] = {0, 0};
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string x, y, g;
    std::getline(ls, x, ',');
    std::getline(ls, y, ',');
    std::getline(ls, g, ',');
    const int k = g == "clean" ? 0 : 1;
    sx[k] += std::stod(x);
    sy[k] += std::stod(y);
    ++n[k];
  }
  if (n[0] == 0 || n[1] == 0) return 0.0;
  return std::hypot(sx[0] / n[0] - sx[1] / n[1], sy[0] / n[0] - sy[1] / n[1]);
}

SeedResult run_seed(const fs::path& root, uint64_t seed, Runner& run) {
  const auto t0 = Clock::now();
  SeedResult r;
  r.seed = seed;
  Pipeline pl{root / ("seed_" + std::to_string(seed)), seed, run};
  fs::create_directories(pl.dir);
  pl.prepare();
  pl.victims();
  const std::vector<std::string> methods{"gama", "ablate_img_txt", "ablate_img_only"};
  for (const auto& m : methods) pl.train(m);

  for (const auto& m : methods) {
    const auto gen = PerturbationGenerator::from_checkpoint(load_checkpoint(pl.dir / (m + ".gamc")));
    const auto b = check_budget(gen, kDefaultEpsilon, seed);
    r.budget_worst = std::max(r.budget_worst, b.worst);
    r.budget_in_range &= b.in_range;
  }

  pl.evaluate("gama", "none", true);
  pl.evaluate("gama", "median3");
  pl.evaluate("gama", "pgd");
  for (const auto& m : methods)
    if (m != "gama") pl.evaluate(m, "none");

  const auto none = read_report_csv(pl.dir / "eval_gama_none.csv");
  r.clean_surrogate = row_for(none, "arch0").clean;
  r.white_attacked = row_for(none, "arch0").attacked;
  r.clean_black = row_for(none, "arch1").clean;
  r.black_attacked = row_for(none, "arch1").attacked;
  if (row_for(none, "arch0").scenario != "white" || row_for(none, "arch1").scenario != "black")
    throw std::runtime_error("unexpected scenario labels in evaluation");
  r.median_attacked = row_for(read_report_csv(pl.dir / "eval_gama_median3.csv"), "arch1").attacked;
  r.pgd_attacked = row_for(read_report_csv(pl.dir / "eval_gama_pgd.csv"), "arch1").attacked;
  for (const auto& m : methods)
    r.ablation[m] = row_for(read_report_csv(pl.dir / ("eval_" + m + "_none.csv")), "arch1").attacked;

  run({"report", "--mode", "pca", "--inputs", pl.p("embeddings_gama.csv"), "--victim", "arch1", "--out",
       pl.p("pca_gama.csv")});
  r.separation = centroid_distance_from_csv(pl.dir / "pca_gama.csv");
  run({"report", "--mode", "transfer_matrix", "--inputs", pl.p("eval_gama_none.csv"), pl.p("eval_gama_median3.csv"),
       pl.p("eval_gama_pgd.csv"), "--out", pl.p("transfer_matrix.csv")});
  run({"report", "--mode", "ablation", "--inputs", pl.p("eval_gama_none.csv"), pl.p("eval_ablate_img_txt_none.csv"),
       pl.p("eval_ablate_img_only_none.csv"), "--out", pl.p("ablation.csv")});
  r.seconds = seconds_since(t0);
  return r;
}

/// Second run of one seed's core pipeline in a fresh directory; compares bytes.
std::pair<int, std::vector<std::string>> determinism(const fs::path& root, uint64_t seed, Runner& run) {
  const fs::path first = root / ("seed_" + std::to_string(seed));
  Pipeline pl{root / ("rerun_" + std::to_string(seed)), seed, run};
  fs::remove_all(pl.dir);
  fs::create_directories(pl.dir);
  pl.prepare();
  pl.victims();
  pl.train("gama");
  pl.evaluate("gama", "none", true);
  pl.evaluate("gama", "pgd");
  const std::vector<std::string> files{"scenes.gamd",          "scenes.gamd.json",       "surrogate_arch0.gamc",
                                       "surrogate_arch0.gamc.json", "encoder.gamc",      "bank.json",
                                       "bank.json.bin",        "victim_arch1.gamc",      "victim_arch1_pgd.gamc",
                                       "gama.gamc",            "gama.gamc.json",         "gama.gamc.log.jsonl",
                                       "eval_gama_none.csv",   "eval_gama_pgd.csv",      "embeddings_gama.csv",
                                       "predictions_gama.csv"};
  std::vector<std::string> differing;
  for (const auto& f : files)
    if (io::read_file(first / f) != io::read_file(pl.dir / f)) differing.push_back(f);
  return {static_cast<int>(files.size()), differing};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance run"};
  std::string work = "acceptance_work";
  std::vector<uint64_t> seeds{1, 2, 3};
  app.add_option("--work-dir", work, "Scratch directory for pipeline artifacts");
  app.add_option("--seeds", seeds, "Master seeds of the end-to-end runs");
  std::vector<int> allowed;
  app.add_option("--allow-fail", allowed,
                 "Criteria whose failure is a known, documented shortfall; still reported as FAIL but do not "
                 "change the exit status");
  CLI11_PARSE(app, argc, argv);

  const auto t_all = Clock::now();
  const fs::path root = fs::absolute(work);
  fs::remove_all(root);
  fs::create_directories(root);
  Runner run(root / "pipeline.log");
  std::printf("work dir: %s (command log in pipeline.log)\n", root.c_str());

  try {
    criterion_gradients();

    {
      const auto gen = PerturbationGenerator(GeneratorConfig{}, 99);
      const auto b = check_budget(gen, kDefaultEpsilon, 5);
      std::printf("  random generator: max |x~ - x| = %.8f (eps %.8f), in [0,1]: %s\n", b.worst, kDefaultEpsilon,
                  b.in_range ? "yes" : "no");
      if (b.worst > kDefaultEpsilon + 1e-6 || !b.in_range) report(2, false, "randomly initialized generator over budget");
    }
    criterion_retrieval();
    criterion_metrics();
    criterion_closed_forms();

    const auto t_e2e = Clock::now();
    std::vector<SeedResult> results;
    for (auto seed : seeds) {
      results.push_back(run_seed(root, seed, run));
      const auto& r = results.back();
      std::printf(
          "  seed %llu: surrogate clean %.2f, white-box attacked %.2f | black-box clean %.2f attacked %.2f | "
          "L %.2f, L_i+L_t %.2f, L_i %.2f | median3 %.2f, pgd-trained %.2f | sep %.4f | %.0f s\n",
          static_cast<unsigned long long>(seed), r.clean_surrogate, r.white_attacked, r.clean_black, r.black_attacked,
          r.ablation.at("gama"), r.ablation.at("ablate_img_txt"), r.ablation.at("ablate_img_only"), r.median_attacked,
          r.pgd_attacked, r.separation, r.seconds);
      std::fflush(stdout);
    }
    const double e2e_seconds = seconds_since(t_e2e);

    // 2: random generator (above) plus every trained generator.
    {
      const auto gen = PerturbationGenerator(GeneratorConfig{}, 99);
      const auto b = check_budget(gen, kDefaultEpsilon, 5);
      double worst = b.worst;
      bool in_range = b.in_range;
      for (const auto& r : results) {
        worst = std::max(worst, r.budget_worst);
        in_range &= r.budget_in_range;
      }
      const int trained = static_cast<int>(results.size()) * 3;
      report(2, worst <= kDefaultEpsilon + 1e-6 && in_range,
             "max |x~ - x| " + fmt("%.8f", worst) + " <= eps " + fmt("%.8f", kDefaultEpsilon) +
                 " + 1e-6 over 1000 images for the random and " + std::to_string(trained) +
                 " trained generators; every evaluation re-probes before writing rows");
    }

    // 6
    {
      bool a = true, b = true, c = true;
      std::string detail;
      for (const auto& r : results) {
        const double white_drop = 1 - r.white_attacked / r.clean_surrogate;
        const double black_drop = 1 - r.black_attacked / r.clean_black;
        a &= r.clean_surrogate >= 70.0;
        b &= white_drop >= 0.5;
        c &= black_drop >= 0.25;
        detail += "seed " + std::to_string(r.seed) + ": clean " + fmt("%.1f", r.clean_surrogate) + ", white drop " +
                  fmt("%.1f%%", 100 * white_drop) + ", black drop " + fmt("%.1f%%", 100 * black_drop) + "; ";
      }
      const bool fast = e2e_seconds < 15 * 60;
      report(6, a && b && c && fast,
             detail + "(a) " + (a ? "ok" : "no") + " (b) " + (b ? "ok" : "no") + " (c) " + (c ? "ok" : "no") +
                 ", end-to-end " + fmt("%.0f", e2e_seconds) + " s for " + std::to_string(results.size()) + " seeds");
    }

    // 7: black-box attacked scores averaged over seeds; lower is stronger.
    {
      double full = 0, img_txt = 0, img = 0;
      for (const auto& r : results) {
        full += r.ablation.at("gama") / results.size();
        img_txt += r.ablation.at("ablate_img_txt") / results.size();
        img += r.ablation.at("ablate_img_only") / results.size();
      }
      int violations = 0;
      bool within = true;
      for (auto [lo, hi] : {std::pair{full, img_txt}, std::pair{img_txt, img}}) {
        if (lo > hi) {
          ++violations;
          within &= lo - hi <= 2.0;
        }
      }
      report(7, violations == 0 || (violations == 1 && within),
             "mean black-box attacked hamming: L " + fmt("%.2f", full) + " <= L_i+L_t " + fmt("%.2f", img_txt) +
                 " <= L_i " + fmt("%.2f", img));
    }

    // 8: on the black-box victim, defended scores vs undefended attacked score.
    {
      double none = 0, median = 0, pgd = 0;
      for (const auto& r : results) {
        none += r.black_attacked / results.size();
        median += r.median_attacked / results.size();
        pgd += r.pgd_attacked / results.size();
      }
      report(8, median >= none && pgd >= none,
             "mean black-box attacked hamming: undefended " + fmt("%.2f", none) + ", median3 " + fmt("%.2f", median) +
                 ", PGD-trained " + fmt("%.2f", pgd));
    }

    // 9
    {
      const auto [count, differing] = determinism(root, seeds.front(), run);
      std::string detail = std::to_string(count - static_cast<int>(differing.size())) + "/" + std::to_string(count) +
                           " artifacts bit-identical across two runs of seed " + std::to_string(seeds.front());
      for (const auto& f : differing) detail += "; differs: " + f;
      report(9, differing.empty(), detail);
    }

    // 10
    {
      double sep = results.empty() ? 0.0 : results.front().separation;
      for (const auto& r : results) sep = std::min(sep, r.separation);
      criterion_pca_oracle(sep, static_cast<int>(results.size()));
    }
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }

  std::sort(verdicts.begin(), verdicts.end(), [](const Verdict& a, const Verdict& b) { return a.id < b.id; });
  int failed = 0, blocking = 0;
  std::string known;
  for (const auto& v : verdicts) {
    if (v.pass) continue;
    ++failed;
    if (std::ranges::find(allowed, v.id) != allowed.end())
      known += (known.empty() ? "" : ", ") + std::to_string(v.id);
    else
      ++blocking;
  }
  std::printf("%d/%zu criteria passed in %.0f s\n", static_cast<int>(verdicts.size()) - failed, verdicts.size(),
              seconds_since(t_all));
  if (!known.empty()) std::printf("known shortfalls (not counted against the exit status): criterion %s\n", known.c_str());
  return blocking == 0 ? 0 : 1;
}
