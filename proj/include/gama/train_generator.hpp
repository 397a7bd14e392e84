#pragma once

#include <functional>
#include <vector>

#include "gama/encoder.hpp"
#include "gama/generator.hpp"
#include "gama/losses.hpp"
#include "gama/optim.hpp"
#include "gama/promptbank.hpp"
#include "gama/surrogate.hpp"

namespace gama {

struct TrainConfig {
  float epsilon = kDefaultEpsilon;
  double alpha = 1.0;
  AdamOptions adam{1e-4, 0.5, 0.999, 1e-8};
  int batch_size = 16;
  int candidates = 16;  // B prompt candidates per draw
  int epochs = 10;
  uint64_t seed = 1;
  /// Draw prompt candidates once per epoch instead of once per iteration.
  bool resample_per_epoch = false;
  GeneratorConfig generator;
};

void validate(const TrainConfig& config);

struct LossRecord {
  int step = 0;
  int epoch = 0;
  LossBreakdown losses;
  double lr = 0;
};

/// One newline-terminated JSON object: step, epoch, l_s, l_img, l_txt, total, lr.
std::string to_json_line(const LossRecord& record);

struct GeneratorTrainResult {
  PerturbationGenerator generator;
  std::vector<LossRecord> log;
};

/// Frozen inputs to generator training. Models are only read; training runs
/// against private frozen copies and verifies afterwards that the originals'
/// weights are bit-identical. `encoder`/`bank` may be null when the method
/// does not use them.
struct AttackTools {
  std::vector<const SurrogateClassifier*> surrogates;
  const JointEncoder* encoder = nullptr;
  const PromptBank* bank = nullptr;
};

using StepCallback = std::function<void(const LossRecord&)>;

/// Generator training loop. With more than one surrogate every loss term is
/// the mean over surrogates.
GeneratorTrainResult train_generator(const TrainConfig& config, AttackMethod method, const SceneDataset& train,
                                     const AttackTools& tools, const StepCallback& on_step = {});

}  // namespace gama
