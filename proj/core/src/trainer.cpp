#include "uigan/trainer.hpp"

#include "uigan/evalkit.hpp"
#include "uigan/io.hpp"
#include "uigan/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace uigan {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// TrainConfig
// ---------------------------------------------------------------------------

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.dataset = j.value("dataset", std::string());
  if (j.contains("steps")) {
    const auto& s = j.at("steps");
    c.steps_phase1 = s.value("phase1", c.steps_phase1);
    c.steps_phase2 = s.value("phase2", c.steps_phase2);
    c.steps_phase3 = s.value("phase3", c.steps_phase3);
  }
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("learning_rates")) {
    const auto& lr = j.at("learning_rates");
    c.lr_block3 = lr.value("block3", c.lr_block3);
    c.lr_block12 = lr.value("block12", c.lr_block12);
    c.lr_pretrain = lr.value("pretrain", c.lr_pretrain);
    c.lr_discriminator = lr.value("discriminator", c.lr_discriminator);
  }
  if (j.contains("weights")) c.weights = j.at("weights").get<LossWeights>();
  if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
  c.seed = j.value("seed", c.seed);
  c.model.seed = c.seed;
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.checkpoint_dir = j.value("checkpoint_dir", std::string());
  c.metrics_log = j.value("metrics_log", std::string());
  c.log_every = j.value("log_every", c.log_every);
  c.freeze_block1_in_phase2 = j.value("freeze_block1_in_phase2", c.freeze_block1_in_phase2);
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const fs::path& path) {
  const auto bytes = io::read_file(path);
  try {
    auto config = from_json(json::parse(bytes.begin(), bytes.end()));
    if (config.dataset.is_relative() && !config.dataset.empty()) config.dataset = path.parent_path() / config.dataset;
    return config;
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

json TrainConfig::to_json() const {
  return {{"dataset", dataset.string()},
          {"steps", {{"phase1", steps_phase1}, {"phase2", steps_phase2}, {"phase3", steps_phase3}}},
          {"batch_size", batch_size},
          {"learning_rates",
           {{"block3", lr_block3}, {"block12", lr_block12}, {"pretrain", lr_pretrain}, {"discriminator", lr_discriminator}}},
          {"weights", weights},
          {"model", model},
          {"seed", seed},
          {"checkpoint_every", checkpoint_every},
          {"checkpoint_dir", checkpoint_dir.string()},
          {"metrics_log", metrics_log.string()},
          {"log_every", log_every},
          {"freeze_block1_in_phase2", freeze_block1_in_phase2}};
}

void TrainConfig::validate() const {
  if (steps_phase1 < 0 || steps_phase2 < 0 || steps_phase3 < 0) throw Error("train config: negative phase length");
  if (batch_size < 1) throw Error("train config: batch_size must be >= 1");
  for (double lr : {lr_block3, lr_block12, lr_pretrain, lr_discriminator}) {
    if (!(lr > 0.0)) throw Error("train config: learning rates must be positive");
  }
  if (checkpoint_every < 0) throw Error("train config: checkpoint_every must be >= 0");
}

// ---------------------------------------------------------------------------
// TrainState
// ---------------------------------------------------------------------------

namespace {

void set_trainable(torch::nn::Module& module, bool trainable) {
  for (auto& p : module.parameters()) p.set_requires_grad(trainable);
}

torch::optim::AdamOptions adam(double lr) { return torch::optim::AdamOptions(lr); }

}  // namespace

TrainState::TrainState(const TrainConfig& config)
    : generator(make_generator(config.model)), discriminators(Discriminators::make(config.model)) {}

void TrainState::prepare(const TrainConfig& config) {
  g_optimizer.reset();
  d_optimizer.reset();
  set_trainable(*generator, false);
  set_trainable(*discriminators.local, false);
  set_trainable(*discriminators.global, false);
  if (phase > kNumStages) return;

  auto& b1 = *generator->block(1);
  auto& b2 = *generator->block(2);
  auto& b3 = *generator->block(3);
  if (phase == 1) {
    set_trainable(b1, true);
    g_optimizer = std::make_unique<torch::optim::Adam>(b1.parameters(), adam(config.lr_pretrain));
  } else if (phase == 2) {
    set_trainable(b2, true);
    std::vector<torch::optim::OptimizerParamGroup> groups;
    groups.emplace_back(b2.parameters(), std::make_unique<torch::optim::AdamOptions>(config.lr_pretrain));
    if (!config.freeze_block1_in_phase2) {
      set_trainable(b1, true);
      groups.emplace_back(b1.parameters(), std::make_unique<torch::optim::AdamOptions>(config.lr_pretrain));
    }
    g_optimizer = std::make_unique<torch::optim::Adam>(std::move(groups), adam(config.lr_pretrain));
  } else {
    set_trainable(*generator, true);
    std::vector<torch::optim::OptimizerParamGroup> groups;
    groups.emplace_back(b1.parameters(), std::make_unique<torch::optim::AdamOptions>(config.lr_block12));
    groups.emplace_back(b2.parameters(), std::make_unique<torch::optim::AdamOptions>(config.lr_block12));
    groups.emplace_back(b3.parameters(), std::make_unique<torch::optim::AdamOptions>(config.lr_block3));
    g_optimizer = std::make_unique<torch::optim::Adam>(std::move(groups), adam(config.lr_block3));
    d_optimizer = std::make_unique<torch::optim::Adam>(discriminators.parameters(), adam(config.lr_discriminator));
  }
}

PhaseThreeRates TrainState::phase3_rates() const {
  if (phase != 3 || !g_optimizer) throw Error("phase3_rates: state is not in phase 3");
  const auto& groups = g_optimizer->param_groups();
  auto lr = [&](size_t i) { return static_cast<const torch::optim::AdamOptions&>(groups.at(i).options()).lr(); };
  return {lr(0), lr(1), lr(2)};
}

void TrainState::save(const fs::path& path, const TrainConfig& config) const {
  // Output locations stay out of the archive so identical runs write identical bytes.
  auto stored = config.to_json();
  stored.erase("checkpoint_dir");
  stored.erase("metrics_log");
  const json meta = {{"config", stored},
                     {"phase", phase},
                     {"phase_step", phase_step},
                     {"global_step", global_step},
                     {"format", "uigan-checkpoint-1"}};
  torch::serialize::OutputArchive archive;
  archive.write("meta", c10::IValue(meta.dump()));
  auto sub = [&](const char* key, const auto& writer) {
    torch::serialize::OutputArchive a;
    writer(a);
    archive.write(key, a);
  };
  sub("generator", [&](auto& a) { generator->save(a); });
  sub("local_d", [&](auto& a) { discriminators.local->save(a); });
  sub("global_d", [&](auto& a) { discriminators.global->save(a); });
  if (g_optimizer) sub("g_optimizer", [&](auto& a) { g_optimizer->save(a); });
  if (d_optimizer) sub("d_optimizer", [&](auto& a) { d_optimizer->save(a); });
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  try {
    archive.save_to(path.string());
  } catch (const c10::Error& e) {
    throw Error("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
}

std::pair<TrainState, TrainConfig> TrainState::load(const fs::path& path) {
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw Error("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  c10::IValue meta_value;
  archive.read("meta", meta_value);
  const auto meta = json::parse(meta_value.toStringRef());
  auto config = TrainConfig::from_json(meta.at("config"));

  TrainState state(config);
  state.phase = meta.at("phase").get<int>();
  state.phase_step = meta.at("phase_step").get<int>();
  state.global_step = meta.at("global_step").get<int64_t>();
  auto sub = [&](const char* key, const auto& reader) {
    torch::serialize::InputArchive a;
    if (!archive.try_read(key, a)) return false;
    reader(a);
    return true;
  };
  sub("generator", [&](auto& a) { state.generator->load(a); });
  sub("local_d", [&](auto& a) { state.discriminators.local->load(a); });
  sub("global_d", [&](auto& a) { state.discriminators.global->load(a); });
  state.prepare(config);
  if (state.g_optimizer) sub("g_optimizer", [&](auto& a) { state.g_optimizer->load(a); });
  if (state.d_optimizer) sub("d_optimizer", [&](auto& a) { state.d_optimizer->load(a); });
  return {std::move(state), std::move(config)};
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig config, Dataset dataset, std::shared_ptr<FeatureExtractor> fx)
    : config_(std::move(config)), dataset_(std::move(dataset)), fx_(fx ? std::move(fx) : default_feature_extractor()) {
  config_.validate();
  if (dataset_.size() == 0) throw Error("trainer: empty dataset");
}

std::vector<int64_t> Trainer::batch_indices(int64_t global_step) const {
  // Batches walk an endless sequence of per-epoch permutations.
  const int64_t n = dataset_.size();
  std::vector<int64_t> out;
  int64_t cached_epoch = -1;
  std::vector<int64_t> perm;
  for (int64_t pos = global_step * config_.batch_size; pos < (global_step + 1) * config_.batch_size; ++pos) {
    const int64_t epoch = pos / n;
    if (epoch != cached_epoch) {
      perm.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
      Rng rng(mix_seed(config_.seed, static_cast<uint64_t>(epoch)));
      rng.shuffle(perm);
      cached_epoch = epoch;
    }
    out.push_back(perm[static_cast<size_t>(pos % n)]);
  }
  return out;
}

StageTargets Trainer::targets(const std::vector<int64_t>& batch) const {
  const auto idx = torch::tensor(batch, torch::kInt64);
  StageTargets t;
  for (int s = 0; s < kNumStages; ++s) {
    t.images[s] = dataset_.image_targets[s].index_select(0, idx);
    t.heatmaps[s] = dataset_.heatmap_targets[s].index_select(0, idx);
  }
  return t;
}

namespace {

std::vector<Box> boxes_for(const Dataset& ds, const std::vector<int64_t>& batch) {
  std::vector<Box> boxes;
  for (auto i : batch) boxes.push_back(ds.pairs[static_cast<size_t>(i)].mask.box);
  return boxes;
}

double value_of(const torch::Tensor& t) { return t.defined() ? t.item<double>() : NAN; }

}  // namespace

StageOutputs Trainer::generator_forward(TrainState& state, const std::vector<int64_t>& batch) const {
  ForwardOptions options;
  options.last_stage = std::min(state.phase, kNumStages);
  return state.generator->forward(dataset_.lr.index_select(0, torch::tensor(batch, torch::kInt64)), options);
}

StepReport Trainer::discriminator_step(TrainState& state, const std::vector<int64_t>& batch) {
  if (state.phase != 3 || !state.d_optimizer) throw Error("discriminator_step: only valid in phase 3");
  torch::Tensor fake;
  {
    torch::NoGradGuard no_grad;
    fake = generator_forward(state, batch).final_image();
  }
  return discriminator_update(state, batch, fake);
}

StepReport Trainer::discriminator_update(TrainState& state, const std::vector<int64_t>& batch,
                                         const torch::Tensor& fake) {
  if (state.phase != 3 || !state.d_optimizer) throw Error("discriminator_step: only valid in phase 3");
  const auto real = dataset_.hr.index_select(0, torch::tensor(batch, torch::kInt64));
  auto& local = state.discriminators.local;
  auto& global = state.discriminators.global;
  set_trainable(*local, true);
  set_trainable(*global, true);

  StepReport report;
  report.phase = 3;
  report.step = state.global_step;
  auto loss = d_loss(global(real), global(fake));
  report.d_global = loss.item<double>();
  const auto boxes = boxes_for(dataset_, batch);
  const auto real_crops = crop_regions(real, boxes);
  if (real_crops.size(0) > 0) {
    const auto local_loss = d_loss(local(real_crops), local(crop_regions(fake, boxes)));
    report.d_local = local_loss.item<double>();
    loss = loss + local_loss;
  }
  state.d_optimizer->zero_grad();
  loss.backward();
  state.d_optimizer->step();
  set_trainable(*local, false);
  set_trainable(*global, false);
  return report;
}

StepReport Trainer::generator_step(TrainState& state, const std::vector<int64_t>& batch) {
  if (!state.g_optimizer) throw Error("generator_step: optimizer not prepared");
  return generator_update(state, batch, generator_forward(state, batch));
}

StepReport Trainer::generator_update(TrainState& state, const std::vector<int64_t>& batch, const StageOutputs& out) {
  const int phase = state.phase;
  const auto tgt = targets(batch);
  std::optional<DiscriminatorScores> scores;
  if (phase == 3) {
    scores.emplace();
    const auto crops = crop_regions(out.final_image(), boxes_for(dataset_, batch));
    if (crops.size(0) > 0) scores->local = state.discriminators.local(crops);
    scores->global = state.discriminators.global(out.final_image());
  }
  // Phase 2 optimises L_net2 alone; phase 3 optimises L_G over all stages.
  const int first = phase == 2 ? 2 : 1;
  const auto losses = stage_losses(out, tgt, *fx_, config_.weights, scores, first);
  const auto& objective = phase == 1 ? losses.net1 : phase == 2 ? losses.net2 : losses.total;

  state.g_optimizer->zero_grad();
  objective.backward();
  state.g_optimizer->step();

  StepReport report;
  report.phase = phase;
  report.step = state.global_step;
  report.net1 = value_of(losses.net1);
  report.net2 = value_of(losses.net2);
  report.net3 = value_of(losses.net3);
  report.total = value_of(losses.total);
  report.psnr_train = psnr(out.final_image().detach(), tgt.images[phase - 1]);
  return report;
}

void Trainer::log_metrics(const StepReport& r) {
  if (config_.metrics_log.empty()) return;
  const bool fresh = !fs::exists(config_.metrics_log) || fs::file_size(config_.metrics_log) == 0;
  std::ofstream out(config_.metrics_log, std::ios::app);
  if (!out) throw Error("cannot append to " + config_.metrics_log.string());
  if (fresh) out << "step,phase,L_net1,L_net2,L_net3,L_G,D_local,D_global,psnr_train\n";
  auto field = [&](double v) {
    out << ',';
    if (std::isfinite(v)) out << v;
  };
  out << r.step << ',' << r.phase;
  field(r.net1);
  field(r.net2);
  field(r.net3);
  field(r.total);
  field(r.d_local);
  field(r.d_global);
  field(r.psnr_train);
  out << '\n';
}

void Trainer::finish_step(TrainState& state, const StepReport& report) {
  ++state.phase_step;
  ++state.global_step;
  if (config_.log_every > 0 && state.global_step % config_.log_every == 0) log_metrics(report);
  if (callback_) callback_(report);
  if (config_.checkpoint_every > 0 && state.global_step % config_.checkpoint_every == 0 &&
      !config_.checkpoint_dir.empty()) {
    char name[32];
    std::snprintf(name, sizeof(name), "step_%08lld.pt", static_cast<long long>(state.global_step));
    state.save(config_.checkpoint_dir / name, config_);
  }
}

void Trainer::run_phase(TrainState& state, int phase, int steps) {
  if (state.phase > phase) return;
  if (state.phase < phase) {
    throw Error("phase order violation: phase " + std::to_string(phase) + " requested while phase " +
                std::to_string(state.phase) + " is incomplete");
  }
  if (!state.g_optimizer) state.prepare(config_);
  while (state.phase_step < steps) {
    const auto batch = batch_indices(state.global_step);
    StepReport report;
    if (phase == 3) {
      // One generator pass serves both halves: D sees its detached output.
      const auto out = generator_forward(state, batch);
      const auto d = discriminator_update(state, batch, out.final_image().detach());
      report = generator_update(state, batch, out);
      report.d_local = d.d_local;
      report.d_global = d.d_global;
    } else {
      report = generator_step(state, batch);
    }
    finish_step(state, report);
  }
  state.phase = phase + 1;
  state.phase_step = 0;
  state.prepare(config_);
}

void Trainer::run_phase1(TrainState& state) { run_phase(state, 1, config_.steps_phase1); }
void Trainer::run_phase2(TrainState& state) { run_phase(state, 2, config_.steps_phase2); }
void Trainer::run_phase3(TrainState& state) { run_phase(state, 3, config_.steps_phase3); }

void Trainer::run(TrainState& state) {
  run_phase1(state);
  run_phase2(state);
  run_phase3(state);
  if (!config_.checkpoint_dir.empty()) state.save(config_.checkpoint_dir / "final.pt", config_);
}

}  // namespace uigan
