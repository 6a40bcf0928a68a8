#ifndef CPMTL_TRAINER_HPP_
#define CPMTL_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cpmtl/descent.hpp"
#include "cpmtl/hypergen.hpp"
#include "cpmtl/objectives.hpp"
#include "cpmtl/preferences.hpp"

namespace cpmtl {

enum class TrainMode { Linear, Constrained };
enum class OptimizerKind { Adam, Sgd };

const char* to_string(TrainMode m);
const char* to_string(OptimizerKind k);
TrainMode train_mode_from_string(const std::string& s);
OptimizerKind optimizer_from_string(const std::string& s);

/// Linear scalarization trains on simplex preferences, the constrained
/// formulation on unit-sphere ones.
NormMode preference_mode(TrainMode m);

struct TrainingConfig {
  TrainMode mode = TrainMode::Constrained;
  std::uint64_t steps = 10000;
  double learning_rate = 3e-4;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t reference_count = 3;
  std::size_t batch_preferences = 1;
  double activation_slack = 1e-3;
  double criticality = 1e-8;
  // Dataset rows per step; the whole dataset when >= its size.
  std::size_t data_batch = 128;
  std::uint64_t seed = 1;
  // 0 disables periodic checkpoints.
  std::uint64_t checkpoint_every = 0;
  bool normalize_gradients = false;

  void validate() const;
  DescentOptions descent_options() const;

  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

struct OptimizerState {
  Vector m;
  Vector v;
  std::uint64_t updates = 0;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

struct TrainerState {
  ProblemDescriptor problem;
  GeneratorSpec spec;
  GeneratorParams params;
  OptimizerState opt;
  std::uint64_t step = 0;
  Rng rng;
};

struct StepReport {
  std::uint64_t step = 0;
  TrainMode mode = TrainMode::Constrained;
  std::vector<PreferenceVector> preferences;
  std::vector<LossVector> losses;
  double direction_norm = 0.0;
  bool critical = false;
  std::size_t active_constraints = 0;
  // Descent inequalities at the sampled point; set for non-critical
  // single-preference constrained steps only.
  std::optional<bool> lemma1;
};

/// One line: step, mode, preferences, losses, direction norm, critical flag.
std::string format_log_record(const StepReport& r);

TrainerState init_state(const TrainingConfig& cfg, const Problem& problem);
TrainerState init_state(const TrainingConfig& cfg, const Problem& problem, const GeneratorSpec& spec);

/// Sample, differentiate through the generator, pick a direction, update.
StepReport train_step(TrainerState& state, const TrainingConfig& cfg, const Problem& problem);

using CheckpointSink = std::function<void(const TrainerState&)>;
using LogSink = std::function<void(const StepReport&)>;

/// Advances `state` until state.step == cfg.steps.
void run_until(TrainerState& state, const TrainingConfig& cfg, const Problem& problem, const LogSink& log = {},
               const CheckpointSink& checkpoint = {});

struct TrainResult {
  TrainerState state;
  std::vector<StepReport> log;
};

TrainResult train(const TrainingConfig& cfg, const Problem& problem, const CheckpointSink& checkpoint = {});

}  // namespace cpmtl

#endif  // CPMTL_TRAINER_HPP_
