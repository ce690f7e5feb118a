#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cfp2ffa/checkpoint.hpp"
#include "cfp2ffa/dataset.hpp"
#include "cfp2ffa/diffusion_schedule.hpp"
#include "cfp2ffa/dynamic_controller.hpp"
#include "cfp2ffa/train_config.hpp"

namespace cfp2ffa {

struct StepReport {
  double loss_g_adv = 0.0;
  double loss_d = 0.0;
  double loss_corr = 0.0;
  double loss_smooth = 0.0;
  double loss_g_total = 0.0;
  double d_real_mean = 0.0;
  double d_fake_mean = 0.0;
  std::vector<std::int64_t> steps;
  ControllerState controller;
  double seconds = 0.0;

  bool finite() const;
};

/// Raised when a loss turns NaN/Inf; carries a textual snapshot of the step.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& what, std::string snapshot)
      : std::runtime_error(what), snapshot_(std::move(snapshot)) {}
  const std::string& snapshot() const { return snapshot_; }

 private:
  std::string snapshot_;
};

/// Inputs the discriminator sees in one step: both branches share `steps`.
struct NoisedPair {
  torch::Tensor real;
  torch::Tensor fake;
  torch::Tensor real_noise;
  torch::Tensor fake_noise;
  std::vector<std::int64_t> steps;
};

/// Labels the generator receives under `config`: the true labels for the
/// full variant, none otherwise.
std::vector<CategoryLabel> category_input(const TrainConfig& config,
                                          const std::vector<CategoryLabel>& labels);

/// G + R objective: adv + lambda_corr * corr + lambda_smooth * smooth.
torch::Tensor compose_generator_loss(const torch::Tensor& adv, const torch::Tensor& corr,
                                     const torch::Tensor& smooth, const TrainConfig& config);

/// Alternating optimization of D and (G, R) with the adaptive controller in
/// the loop. Owns the networks, optimizers and the controller.
class SynthesisTrainer {
 public:
  explicit SynthesisTrainer(TrainConfig config);
  SynthesisTrainer(TrainConfig config, SynthesisNetworks networks);

  /// One full step; throws NonFiniteLossError on NaN/Inf losses.
  StepReport train_step(const Batch& batch);

  // The pieces of train_step, exposed for auditing.
  torch::Tensor generate(const Batch& batch);
  /// Samples t per image and noises real and (detached) fake images at the
  /// same t. Baseline: t = 0 and no noise.
  NoisedPair noise_for_discriminator(const torch::Tensor& real, const torch::Tensor& fake);
  /// Returns (loss_d, mean real score, mean fake score).
  std::tuple<double, double, double> update_discriminator(const NoisedPair& inputs);
  /// Feeds the batch-mean real score to the controller (diffusion variants).
  void update_controller(double d_real_mean);

  const TrainConfig& config() const { return config_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const DynamicController& controller() const { return controller_; }
  SynthesisNetworks& networks() { return networks_; }
  const SynthesisNetworks& networks() const { return networks_; }

  /// Called after each applied controller update.
  std::function<void(const ControllerState&, double)> on_controller_update;

 private:
  TrainConfig config_;
  NoiseSchedule schedule_;
  DynamicController controller_;
  SynthesisNetworks networks_;
  torch::optim::Adam opt_d_;
  torch::optim::Adam opt_gr_;
  std::mt19937_64 rng_;
  at::Generator noise_gen_;
};

struct EpochSummary {
  std::int64_t epoch = 0;
  double loss_g_adv = 0.0;
  double loss_d = 0.0;
  double loss_corr = 0.0;
  double loss_smooth = 0.0;
  double val_corr = 0.0;
  double r = 0.0;
  std::int64_t T = 0;
};

struct TrainingResult {
  std::vector<EpochSummary> history;
  std::filesystem::path final_checkpoint;
  ControllerState controller;
};

/// Mean correction loss of a generator/registration pair over samples, with
/// each variant's category input.
double validation_correction_loss(SynthesisNetworks& networks, const TrainConfig& config,
                                  const std::vector<PairedSample>& samples);

/// Trains on the train split of `manifest` and writes under `out_dir`:
///   losses.csv, epochs.csv, controller_trace.csv (diffusion variants only),
///   checkpoints/latest.ckpt per epoch (epoch_NNN.ckpt when kept),
///   checkpoints/final.ckpt, samples/epoch_NNN.png.
TrainingResult run_training(const DatasetManifest& manifest, const TrainConfig& config,
                            const std::filesystem::path& out_dir);

}  // namespace cfp2ffa
