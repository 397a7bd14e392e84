#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gama/generator.hpp"
#include "gama/surrogate.hpp"

namespace gama {

enum class Defense { none, median3, pgd };
std::string defense_name(Defense d);
Defense defense_from_name(const std::string& name);

enum class Scenario { white, black };
std::string scenario_name(Scenario s);

/// A frozen victim g. `fingerprint` identifies the weights (checkpoint
/// checksum); a victim is attacked white-box when its fingerprint is one the
/// generator was trained against and it was trained on the evaluation
/// distribution.
struct Victim {
  std::string id;
  SurrogateClassifier model;
  std::string fingerprint;
  std::string distribution_id;
};

/// Builds a victim from a loaded model, fingerprinting its parameters.
Victim make_victim(std::string id, SurrogateClassifier model);

struct AttackRow {
  std::string generator_id;
  std::string surrogate_id;
  std::string victim_id;
  std::string task;
  std::string defense;
  std::string scenario;
  std::string metric;
  double clean = 0.0;
  double attacked = 0.0;
  double epsilon = 0.0;
};

struct EvalOptions {
  float epsilon = kDefaultEpsilon;
  Defense defense = Defense::none;
  double threshold = 0.5;
  std::string generator_id = "generator";
  std::string surrogate_id = "surrogate";
  /// Parameter fingerprints of the surrogate(s) the generator was trained on.
  std::vector<std::string> surrogate_fingerprints;
  /// Distribution the surrogate(s) were trained on.
  std::string surrogate_distribution;
  /// Keep per-victim predictions and features for diagnostics.
  bool keep_outputs = false;
};

struct VictimOutputs {
  std::vector<uint8_t> clean_predictions;     // thresholded, [N*C]
  std::vector<uint8_t> attacked_predictions;
  Tensor<float> clean_features;               // [N,K]
  Tensor<float> attacked_features;
};

struct AttackReport {
  std::vector<AttackRow> rows;
  std::vector<VictimOutputs> outputs;  // parallel to rows when keep_outputs
};

/// Largest |x̃ - x| over all elements; throws a data error on shape mismatch.
double linf_distance(const Tensor<float>& a, const Tensor<float>& b);

/// Aborts (internal error) unless every element satisfies |x̃-x| <= eps + 1e-6
/// and x̃ lies in [0,1].
void verify_budget(const Tensor<float>& x, const Tensor<float>& x_adv, float eps);

/// Runs `generator` on `count` uniform random images and verifies the budget.
double probe_generator_budget(const PerturbationGenerator& generator, float eps, const CanvasDims& dims, int count,
                              uint64_t seed);

/// Bilinear resampling of [N,T,H,W] to the given spatial size (align-corners off).
Tensor<float> resize_bilinear(const Tensor<float>& images, int height, int width);

/// Scores every victim on clean and perturbed versions of `dataset`.
/// A null generator means the zero perturbation (x̃ = x).
AttackReport evaluate_attack(const PerturbationGenerator* generator, const std::vector<const Victim*>& victims,
                             const SceneDataset& dataset, const EvalOptions& options);

inline const std::string kReportHeader =
    "generator_id,surrogate_id,victim_id,task,defense,scenario,metric,clean,attacked,epsilon";

std::string format_report(const std::vector<AttackRow>& rows);
void write_report_csv(const std::vector<AttackRow>& rows, const std::filesystem::path& path);
std::vector<AttackRow> read_report_csv(const std::filesystem::path& path);

}  // namespace gama
