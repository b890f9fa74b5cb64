#pragma once

#include "uigan/adversary.hpp"
#include "uigan/config.hpp"
#include "uigan/datagen.hpp"
#include "uigan/generator.hpp"
#include "uigan/losses.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace uigan {

struct TrainConfig {
  std::filesystem::path dataset;
  int steps_phase1 = 200;
  int steps_phase2 = 200;
  int steps_phase3 = 1000;
  int batch_size = 4;
  double lr_block3 = 1e-3;     // phase 3, UI-block3
  double lr_block12 = 1e-4;    // phase 3, UI-blocks 1 and 2
  double lr_pretrain = 1e-3;   // phases 1 and 2
  double lr_discriminator = 1e-4;
  LossWeights weights;
  ModelConfig model;
  uint64_t seed = 0;
  int checkpoint_every = 0;    // steps; 0 disables periodic checkpoints
  std::filesystem::path checkpoint_dir;
  std::filesystem::path metrics_log;
  int log_every = 10;
  bool freeze_block1_in_phase2 = true;

  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;
};

/// Learning rates of the phase-3 generator groups (block1, block2, block3).
struct PhaseThreeRates {
  double block1, block2, block3;
};

/// Everything needed to continue training bit-exactly.
class TrainState {
 public:
  explicit TrainState(const TrainConfig& config);

  int phase = 1;        // phase currently running (4 once training is complete)
  int phase_step = 0;   // steps completed within `phase`
  int64_t global_step = 0;

  Generator generator{nullptr};
  Discriminators discriminators;
  std::unique_ptr<torch::optim::Adam> g_optimizer;  // rebuilt at each phase start
  std::unique_ptr<torch::optim::Adam> d_optimizer;  // phase 3 only

  /// Writes a single-file checkpoint: config JSON (without output paths),
  /// counters and all parameter and optimizer tensors.
  void save(const std::filesystem::path& path, const TrainConfig& config) const;
  /// Restores a checkpoint written by save(); the returned config is the one
  /// stored in the archive.
  static std::pair<TrainState, TrainConfig> load(const std::filesystem::path& path);

  /// Builds the optimizers for `phase` and marks exactly that phase's
  /// parameter groups trainable.
  void prepare(const TrainConfig& config);

  PhaseThreeRates phase3_rates() const;
};

/// Loss values from one step, for logging. NaN marks "not computed".
struct StepReport {
  int phase = 0;
  int64_t step = 0;
  double net1 = NAN, net2 = NAN, net3 = NAN, total = NAN;
  double d_local = NAN, d_global = NAN;
  double psnr_train = NAN;
};

using StepCallback = std::function<void(const StepReport&)>;

/// Three-step procedure: UI-block1 pretraining on L_net1, UI-block2
/// pretraining on L_net2, then alternating D/G updates on the full model.
class Trainer {
 public:
  Trainer(TrainConfig config, Dataset dataset, std::shared_ptr<FeatureExtractor> fx = nullptr);

  void run_phase1(TrainState& state);
  void run_phase2(TrainState& state);
  void run_phase3(TrainState& state);
  /// Runs whichever phases remain, resuming mid-phase if needed.
  void run(TrainState& state);

  /// One discriminator update on the given batch (phase 3 half-step).
  StepReport discriminator_step(TrainState& state, const std::vector<int64_t>& batch);
  /// One generator update on the given batch for the current phase.
  StepReport generator_step(TrainState& state, const std::vector<int64_t>& batch);

  /// Seed-determined batch for a global step.
  std::vector<int64_t> batch_indices(int64_t global_step) const;

  void set_step_callback(StepCallback cb) { callback_ = std::move(cb); }
  const TrainConfig& config() const { return config_; }
  const Dataset& dataset() const { return dataset_; }

 private:
  void run_phase(TrainState& state, int phase, int steps);
  StageTargets targets(const std::vector<int64_t>& batch) const;
  StepReport discriminator_update(TrainState& state, const std::vector<int64_t>& batch, const torch::Tensor& fake);
  StepReport generator_update(TrainState& state, const std::vector<int64_t>& batch, const StageOutputs& out);
  StageOutputs generator_forward(TrainState& state, const std::vector<int64_t>& batch) const;
  void finish_step(TrainState& state, const StepReport& report);
  void log_metrics(const StepReport& report);

  TrainConfig config_;
  Dataset dataset_;
  std::shared_ptr<FeatureExtractor> fx_;
  StepCallback callback_;
};

}  // namespace uigan
