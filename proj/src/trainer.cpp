#include "cfp2ffa/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <sstream>

#include "cfp2ffa/image_io.hpp"
#include "cfp2ffa/losses.hpp"

namespace fs = std::filesystem;

namespace cfp2ffa {

namespace {

torch::optim::AdamOptions adam_options(const TrainConfig& c) {
  return torch::optim::AdamOptions(c.lr)
      .betas({c.adam_beta1, c.adam_beta2})
      .weight_decay(c.weight_decay);
}

std::vector<torch::Tensor> generator_side_parameters(SynthesisNetworks& nets) {
  auto params = nets.generator->parameters();
  auto reg = nets.registration->parameters();
  params.insert(params.end(), reg.begin(), reg.end());
  return params;
}

void set_requires_grad(torch::nn::Module& module, bool on) {
  for (auto& p : module.parameters()) p.requires_grad_(on);
}

std::string format_row(std::initializer_list<double> values) {
  std::string line;
  char buf[40];
  bool first = true;
  for (double v : values) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    if (!first) line += ',';
    line += buf;
    first = false;
  }
  return line;
}

}  // namespace

std::vector<CategoryLabel> category_input(const TrainConfig& config,
                                          const std::vector<CategoryLabel>& labels) {
  if (!config.uses_category()) return {};
  return labels;
}

bool StepReport::finite() const {
  return std::isfinite(loss_g_adv) && std::isfinite(loss_d) && std::isfinite(loss_corr) &&
         std::isfinite(loss_smooth) && std::isfinite(loss_g_total);
}

torch::Tensor compose_generator_loss(const torch::Tensor& adv, const torch::Tensor& corr,
                                     const torch::Tensor& smooth, const TrainConfig& config) {
  auto loss = adv;
  if (config.lambda_corr != 0.0) loss = loss + config.lambda_corr * corr;
  if (config.lambda_smooth != 0.0) loss = loss + config.lambda_smooth * smooth;
  return loss;
}

SynthesisTrainer::SynthesisTrainer(TrainConfig config)
    : SynthesisTrainer(config, SynthesisNetworks::build(config)) {}

SynthesisTrainer::SynthesisTrainer(TrainConfig config, SynthesisNetworks networks)
    : config_((config.validate(), config)),
      schedule_(NoiseSchedule::build(config.schedule_steps, config.beta_min, config.beta_max)),
      controller_(config.t_init, config.controller_lambda, 0, config.schedule_steps - 1,
                  config.controller_every),
      networks_(std::move(networks)),
      opt_d_(networks_.discriminator->parameters(), adam_options(config)),
      opt_gr_(generator_side_parameters(networks_), adam_options(config)),
      rng_(config.seed ^ 0x5DEECE66DULL),
      noise_gen_(at::detail::createCPUGenerator(config.seed + 0x2545F491ULL)) {
  networks_.train(true);
}

torch::Tensor SynthesisTrainer::generate(const Batch& batch) {
  const auto labels = category_input(config_, batch.labels);
  return networks_.generator->forward(batch.cfp, labels);
}

NoisedPair SynthesisTrainer::noise_for_discriminator(const torch::Tensor& real,
                                                     const torch::Tensor& fake) {
  NoisedPair out;
  const auto n = real.size(0);
  out.steps.assign(static_cast<std::size_t>(n), 0);
  if (!config_.uses_diffusion()) {
    out.real = real;
    out.fake = fake.detach();
    return out;
  }
  for (auto& t : out.steps) t = controller_.sample_t(rng_);
  out.real_noise = torch::randn(real.sizes(), noise_gen_, real.options());
  out.fake_noise = torch::randn(fake.sizes(), noise_gen_, fake.options());
  out.real = forward_diffuse(schedule_, real, out.steps, out.real_noise);
  out.fake = forward_diffuse(schedule_, fake.detach(), out.steps, out.fake_noise);
  return out;
}

std::tuple<double, double, double> SynthesisTrainer::update_discriminator(const NoisedPair& in) {
  auto& D = networks_.discriminator;
  set_requires_grad(*D, true);
  opt_d_.zero_grad();
  auto real_logits = D->forward_logits(in.real, in.steps);
  auto fake_logits = D->forward_logits(in.fake.detach(), in.steps);
  auto loss = adversarial_loss_d_logits(real_logits, fake_logits);
  if (!std::isfinite(loss.item<double>())) {
    throw NonFiniteLossError("non-finite discriminator loss",
                             "loss_d = " + std::to_string(loss.item<double>()) + "\n");
  }
  loss.backward();
  opt_d_.step();
  return {loss.item<double>(), torch::sigmoid(real_logits).mean().item<double>(),
          torch::sigmoid(fake_logits).mean().item<double>()};
}

void SynthesisTrainer::update_controller(double d_real_mean) {
  if (!config_.uses_diffusion()) return;
  if (controller_.update(std::clamp(d_real_mean, 0.0, 1.0)) && on_controller_update) {
    on_controller_update(controller_.state(), d_real_mean);
  }
}

StepReport SynthesisTrainer::train_step(const Batch& batch) {
  const auto start = std::chrono::steady_clock::now();
  StepReport report;

  auto fake = generate(batch);

  // (i)-(iv): discriminator on noised real / detached fake, then controller.
  auto noised = noise_for_discriminator(batch.ffa, fake);
  std::tie(report.loss_d, report.d_real_mean, report.d_fake_mean) = update_discriminator(noised);
  update_controller(report.d_real_mean);

  // (v): generator + registration. The fake branch reuses the step's t and
  // noise so D sees the same corruption as during its own update.
  auto& D = networks_.discriminator;
  set_requires_grad(*D, false);
  torch::Tensor fake_for_d = fake;
  if (config_.uses_diffusion()) {
    fake_for_d = forward_diffuse(schedule_, fake, noised.steps, noised.fake_noise);
  }
  auto adv = adversarial_loss_g_logits(D->forward_logits(fake_for_d, noised.steps));
  auto field = networks_.registration->forward(fake, batch.ffa);
  auto corr = correction_loss(batch.ffa, fake, field);
  auto smooth = smoothness_loss(field);
  auto total = compose_generator_loss(adv, corr, smooth, config_);

  report.loss_g_adv = adv.item<double>();
  report.loss_corr = corr.item<double>();
  report.loss_smooth = smooth.item<double>();
  report.loss_g_total = total.item<double>();
  report.steps = noised.steps;
  report.controller = controller_.state();

  if (!report.finite()) {
    std::ostringstream snap;
    snap << "loss_g_adv = " << report.loss_g_adv << "\nloss_d = " << report.loss_d
         << "\nloss_corr = " << report.loss_corr << "\nloss_smooth = " << report.loss_smooth
         << "\nd_real_mean = " << report.d_real_mean << "\nr = " << report.controller.r()
         << "\nT = " << report.controller.T << "\nsamples =";
    for (const auto& id : batch.ids) snap << ' ' << id;
    snap << '\n';
    throw NonFiniteLossError("non-finite loss during training", snap.str());
  }

  opt_gr_.zero_grad();
  total.backward();
  opt_gr_.step();
  set_requires_grad(*D, true);

  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

double validation_correction_loss(SynthesisNetworks& networks, const TrainConfig& config,
                                  const std::vector<PairedSample>& samples) {
  if (samples.empty()) return 0.0;
  torch::NoGradGuard no_grad;
  networks.train(false);
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); i += 4) {
    std::vector<std::size_t> idx;
    for (std::size_t k = i; k < std::min(samples.size(), i + 4); ++k) idx.push_back(k);
    auto batch = make_batch(samples, idx);
    auto fake = networks.generator->forward(batch.cfp, category_input(config, batch.labels));
    auto field = networks.registration->forward(fake, batch.ffa);
    total += correction_loss(batch.ffa, fake, field).item<double>() * static_cast<double>(idx.size());
  }
  networks.train(true);
  return total / static_cast<double>(samples.size());
}

namespace {

void write_sample_grid(SynthesisNetworks& nets, const TrainConfig& config,
                       const std::vector<PairedSample>& samples, const fs::path& path) {
  const auto count = std::min<std::size_t>(samples.size(), static_cast<std::size_t>(config.sample_grid_count));
  if (count == 0) return;
  torch::NoGradGuard no_grad;
  nets.train(false);
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), 0);
  auto batch = make_batch(samples, idx);
  auto fake = nets.generator->forward(batch.cfp, category_input(config, batch.labels));
  nets.train(true);
  // One row per sample: CFP | real FFA | synthesized FFA.
  auto rows = torch::stack({batch.cfp, batch.ffa, fake}, 1).flatten(0, 1);
  write_png(path, tile_images(rows, 3));
}

}  // namespace

TrainingResult run_training(const DatasetManifest& manifest, const TrainConfig& config,
                            const fs::path& out_dir) {
  config.validate();
  const auto train = load_samples(manifest, Split::Train, config.image_size);
  const auto val = load_samples(manifest, Split::Validation, config.image_size);
  if (train.empty()) throw std::runtime_error("training split is empty");

  fs::create_directories(out_dir / "checkpoints");
  fs::create_directories(out_dir / "samples");

  SynthesisTrainer trainer(config);
  std::unique_ptr<ControllerTrace> trace;
  if (config.uses_diffusion()) {
    trace = std::make_unique<ControllerTrace>(out_dir / "controller_trace.csv");
    trainer.on_controller_update = [&trace](const ControllerState& s, double score) {
      trace->record(s, score);
    };
  }

  std::ofstream losses(out_dir / "losses.csv");
  std::ofstream epochs(out_dir / "epochs.csv");
  if (!losses || !epochs) throw std::runtime_error("cannot write logs under " + out_dir.string());
  losses << "epoch,step,loss_g_adv,loss_d,loss_corr,loss_smooth,loss_g_total,d_real_mean,d_fake_mean,r,T\n";
  epochs << "epoch,loss_g_adv,loss_d,loss_corr,loss_smooth,val_corr,r,T\n";

  std::mt19937_64 order_rng(config.seed * 0x9E3779B97F4A7C15ULL + 17);
  std::mt19937_64 augment_rng(config.seed + 101);
  TrainingResult result;
  std::int64_t global_step = 0;
  const auto bs = static_cast<std::size_t>(config.batch_size);

  for (std::int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), order_rng);

    EpochSummary summary;
    summary.epoch = epoch;
    std::size_t steps = 0;
    const auto epoch_start = std::chrono::steady_clock::now();
    for (std::size_t first = 0; first < order.size(); first += bs) {
      std::vector<PairedSample> chunk;
      for (std::size_t k = first; k < std::min(order.size(), first + bs); ++k) {
        chunk.push_back(config.augment ? augment(train[order[k]], augment_rng) : train[order[k]]);
      }
      std::vector<std::size_t> idx(chunk.size());
      std::iota(idx.begin(), idx.end(), 0);

      StepReport report;
      try {
        report = trainer.train_step(make_batch(chunk, idx));
      } catch (const NonFiniteLossError& e) {
        std::ofstream snap(out_dir / "abort_snapshot.txt");
        snap << "epoch = " << epoch << "\nglobal_step = " << global_step << '\n' << e.snapshot();
        throw;
      }
      ++global_step;
      ++steps;
      losses << epoch << ',' << global_step << ','
             << format_row({report.loss_g_adv, report.loss_d, report.loss_corr, report.loss_smooth,
                            report.loss_g_total, report.d_real_mean, report.d_fake_mean,
                            report.controller.r()})
             << ',' << report.controller.T << '\n';
      summary.loss_g_adv += report.loss_g_adv;
      summary.loss_d += report.loss_d;
      summary.loss_corr += report.loss_corr;
      summary.loss_smooth += report.loss_smooth;
    }
    const double n = static_cast<double>(steps);
    summary.loss_g_adv /= n;
    summary.loss_d /= n;
    summary.loss_corr /= n;
    summary.loss_smooth /= n;
    summary.val_corr = validation_correction_loss(trainer.networks(), config, val);
    summary.r = trainer.controller().state().r();
    summary.T = trainer.controller().state().T;
    epochs << epoch << ','
           << format_row({summary.loss_g_adv, summary.loss_d, summary.loss_corr,
                          summary.loss_smooth, summary.val_corr, summary.r})
           << ',' << summary.T << '\n';
    losses.flush();
    epochs.flush();
    result.history.push_back(summary);

    CheckpointHeader header;
    header.config = config;
    header.controller = trainer.controller().state();
    header.epoch = epoch;
    save_checkpoint(out_dir / "checkpoints" / "latest.ckpt", trainer.networks(), header);
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%03lld", static_cast<long long>(epoch));
    if (config.keep_epoch_checkpoints) {
      fs::copy_file(out_dir / "checkpoints" / "latest.ckpt",
                    out_dir / "checkpoints" / (std::string(name) + ".ckpt"),
                    fs::copy_options::overwrite_existing);
    }
    write_sample_grid(trainer.networks(), config, val.empty() ? train : val,
                      out_dir / "samples" / (std::string(name) + ".png"));

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    std::fprintf(stderr, "[%s seed %llu] epoch %lld/%lld corr %.4f val_corr %.4f d %.4f T %lld (%.1fs)\n",
                 std::string(to_string(config.variant)).c_str(),
                 static_cast<unsigned long long>(config.seed), static_cast<long long>(epoch),
                 static_cast<long long>(config.epochs), summary.loss_corr, summary.val_corr,
                 summary.loss_d, static_cast<long long>(summary.T), secs);
  }

  result.final_checkpoint = out_dir / "checkpoints" / "final.ckpt";
  fs::rename(out_dir / "checkpoints" / "latest.ckpt", result.final_checkpoint);
  result.controller = trainer.controller().state();
  return result;
}

}  // namespace cfp2ffa
