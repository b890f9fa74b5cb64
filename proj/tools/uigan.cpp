#include "uigan/datagen.hpp"
#include "uigan/evalkit.hpp"
#include "uigan/io.hpp"
#include "uigan/service.hpp"
#include "uigan/trainer.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>

namespace fs = std::filesystem;
using namespace uigan;

namespace {

int cmd_synth(const fs::path& out, int n, uint64_t seed, bool augment) {
  BuildOptions options;
  options.n = n;
  options.seed = seed;
  options.augment = augment;
  const int written = build_dataset(out, options);
  std::printf("wrote %d pairs to %s\n", written, out.c_str());
  return 0;
}

int cmd_train(const fs::path& config_path, const std::string& resume) {
  auto config = TrainConfig::load(config_path);
  auto dataset = Dataset::load(config.dataset);
  std::optional<TrainState> state;
  if (!resume.empty()) {
    auto loaded = TrainState::load(resume);
    state.emplace(std::move(loaded.first));
    std::printf("resuming at phase %d step %d (global %lld)\n", state->phase, state->phase_step,
                static_cast<long long>(state->global_step));
  } else {
    state.emplace(config);
  }
  Trainer trainer(config, std::move(dataset));
  trainer.set_step_callback([&](const StepReport& r) {
    if (config.log_every > 0 && (r.step + 1) % config.log_every == 0) {
      std::printf("phase %d step %lld  L_net1 %.4f  L_net2 %.4f  L_net3 %.4f  psnr %.2f\n", r.phase,
                  static_cast<long long>(r.step + 1), r.net1, r.net2, r.net3, r.psnr_train);
      std::fflush(stdout);
    }
  });
  trainer.run(*state);
  return 0;
}

int cmd_eval(const fs::path& ckpt, const fs::path& dataset_dir, const fs::path& out, const std::string& sweep) {
  auto state = TrainState::load(ckpt).first;
  const auto dataset = Dataset::load(dataset_dir);
  std::vector<std::string> variants = {"baseline"};
  if (sweep == "masks") variants = mask_variants();
  if (sweep == "priors") variants = prior_variants();
  const auto reports = ablation_sweep(state.generator, dataset, variants);
  nlohmann::json j;
  if (reports.size() == 1) {
    j = reports.front().to_json();
  } else {
    j = nlohmann::json::array();
    for (const auto& r : reports) j.push_back(r.to_json());
  }
  io::write_file(out, j.dump(2));
  for (const auto& r : reports) {
    std::printf("%-9s n=%lld  psnr %.3f  ssim %.4f  nrmse %.4f\n", r.variant.c_str(), static_cast<long long>(r.n()),
                r.psnr_mean, r.ssim_mean, r.nrmse_mean);
  }
  return 0;
}

int cmd_infer(const fs::path& ckpt, const fs::path& input, const fs::path& out, const fs::path& mask,
              const fs::path& stages_dir) {
  const auto service = ModelService::from_checkpoint(ckpt);
  nlohmann::json request = {{"lr_png_base64", io::base64_encode(io::read_file(input))}};
  if (!mask.empty()) request["mask_png_base64"] = io::base64_encode(io::read_file(mask));
  const auto response = service.handle_hallucinate(request);
  if (response.status != 200) {
    std::fprintf(stderr, "error %d: %s\n", response.status, response.body.value("error", "").c_str());
    return 1;
  }
  io::write_file(out, io::base64_decode(response.body.at("hr_png_base64").get<std::string>()));
  if (!stages_dir.empty()) {
    fs::create_directories(stages_dir);
    const auto& stages = response.body.at("stages");
    for (size_t s = 0; s < stages.size(); ++s) {
      io::write_file(stages_dir / ("stage" + std::to_string(s + 1) + ".png"),
                     io::base64_decode(stages[s].get<std::string>()));
    }
  }
  for (const auto& p : response.body.at("landmarks")) std::printf("%.1f,%.1f\n", p[0].get<double>(), p[1].get<double>());
  return 0;
}

int cmd_serve(const fs::path& ckpt, const std::string& host, int port) {
  const auto service = ModelService::from_checkpoint(ckpt);
  std::printf("serving %s (ckpt %s) on %s:%d\n", ckpt.c_str(), service.checkpoint_id().c_str(), host.c_str(), port);
  std::fflush(stdout);
  serve(service, host, port);
  return 0;
}

int cmd_compare(const fs::path& a, const fs::path& b) {
  const auto x = io::read_png(a), y = io::read_png(b);
  std::printf("{\"psnr\": %.17g, \"ssim\": %.17g}\n", psnr(x, y), ssim(x, y));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Face hallucination and inpainting with facial priors"};
  app.require_subcommand(1);

  fs::path synth_out;
  int synth_n = 100;
  uint64_t synth_seed = 0;
  bool synth_augment = false;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic paired dataset");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--n", synth_n, "Number of base pairs")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Dataset seed");
  synth->add_flag("--augment", synth_augment, "Add the 8 rotation/flip variants of each pair");

  fs::path train_config;
  std::string train_resume;
  auto* train = app.add_subcommand("train", "Run the three-phase training schedule");
  train->add_option("--config", train_config, "Training config JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--resume", train_resume, "Checkpoint to resume from")->check(CLI::ExistingFile);

  fs::path eval_ckpt, eval_dataset, eval_out;
  std::string eval_sweep;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  eval->add_option("--ckpt", eval_ckpt)->required()->check(CLI::ExistingFile);
  eval->add_option("--dataset", eval_dataset)->required();
  eval->add_option("--out", eval_out, "Report JSON path")->required();
  eval->add_option("--sweep", eval_sweep, "Ablation sweep")->check(CLI::IsMember({"masks", "priors"}));

  fs::path infer_ckpt, infer_in, infer_out, infer_mask, infer_stages;
  auto* infer = app.add_subcommand("infer", "Hallucinate one 16x16 PNG");
  infer->add_option("--ckpt", infer_ckpt)->required()->check(CLI::ExistingFile);
  infer->add_option("--in", infer_in, "16x16 input PNG")->required()->check(CLI::ExistingFile);
  infer->add_option("--out", infer_out, "128x128 output PNG")->required();
  infer->add_option("--mask", infer_mask, "16x16 mask PNG, white = occluded")->check(CLI::ExistingFile);
  infer->add_option("--stages-dir", infer_stages, "Also write the per-stage previews here");

  fs::path serve_ckpt;
  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP JSON API");
  serve_cmd->add_option("--ckpt", serve_ckpt)->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--port", serve_port)->check(CLI::Range(1, 65535));
  serve_cmd->add_option("--host", serve_host);

  fs::path compare_a, compare_b;
  auto* compare = app.add_subcommand("compare", "PSNR and SSIM between two PNGs of equal size");
  compare->add_option("--a", compare_a)->required()->check(CLI::ExistingFile);
  compare->add_option("--b", compare_b)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(synth_out, synth_n, synth_seed, synth_augment);
    if (*train) return cmd_train(train_config, train_resume);
    if (*eval) return cmd_eval(eval_ckpt, eval_dataset, eval_out, eval_sweep);
    if (*infer) return cmd_infer(infer_ckpt, infer_in, infer_out, infer_mask, infer_stages);
    if (*serve_cmd) return cmd_serve(serve_ckpt, serve_host, serve_port);
    if (*compare) return cmd_compare(compare_a, compare_b);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "uigan: %s\n", e.what());
    return 1;
  }
  return 0;
}
