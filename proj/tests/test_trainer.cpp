#include <gtest/gtest.h>

#include <filesystem>
#include <map>

#include "cfp2ffa/checkpoint.hpp"
#include "cfp2ffa/evaluation.hpp"
#include "cfp2ffa/losses.hpp"
#include "cfp2ffa/phantom.hpp"
#include "cfp2ffa/trainer.hpp"
#include "test_helpers.hpp"

using namespace cfp2ffa;
using cfp2ffa::testing::random_batch;
using cfp2ffa::testing::TempDir;
using cfp2ffa::testing::tiny_config;

namespace {

std::map<std::string, torch::Tensor> snapshot(const torch::nn::Module& m) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& p : m.named_parameters()) out[p.key()] = p.value().detach().clone();
  return out;
}

bool unchanged(const torch::nn::Module& m, const std::map<std::string, torch::Tensor>& before) {
  for (const auto& p : m.named_parameters()) {
    if (!torch::equal(p.value(), before.at(p.key()))) return false;
  }
  return true;
}

void expect_same_reports(const StepReport& a, const StepReport& b) {
  EXPECT_EQ(a.loss_g_adv, b.loss_g_adv);
  EXPECT_EQ(a.loss_d, b.loss_d);
  EXPECT_EQ(a.loss_corr, b.loss_corr);
  EXPECT_EQ(a.loss_smooth, b.loss_smooth);
  EXPECT_EQ(a.d_real_mean, b.d_real_mean);
  EXPECT_EQ(a.steps, b.steps);
  EXPECT_EQ(a.controller, b.controller);
}

}  // namespace

TEST(TrainConfig, ProfilesEchoDefaults) {
  auto full = TrainConfig::profile_defaults("full");
  EXPECT_EQ(full.lr, 1e-4);
  EXPECT_EQ(full.weight_decay, 1e-5);
  EXPECT_EQ(full.epochs, 100);
  EXPECT_EQ(full.image_size, 1024);
  EXPECT_EQ(full.batch_size, 2);
  auto desk = TrainConfig::profile_defaults("desk");
  EXPECT_EQ(desk.image_size, 128);
  EXPECT_EQ(desk.batch_size, 4);
  EXPECT_EQ(desk.epochs, 20);
  EXPECT_EQ(desk.t_init, 10);
  EXPECT_EQ(desk.controller_lambda, 0.1);
  EXPECT_THROW(TrainConfig::profile_defaults("huge"), std::invalid_argument);
}

TEST(TrainConfig, RoundTripsThroughKeyValueText) {
  auto c = tiny_config(Variant::M1, 9);
  c.lr = 3.3e-4;
  c.augment = true;
  auto back = TrainConfig::from_config(c.to_config(), TrainConfig{});
  EXPECT_EQ(back.to_config().items(), c.to_config().items());
  KeyValueConfig bad;
  bad.set("learning_rate", 0.1);
  EXPECT_THROW(TrainConfig::from_config(bad, TrainConfig{}), std::invalid_argument);
}

TEST(TrainConfig, VariantFlags) {
  EXPECT_FALSE(tiny_config(Variant::Baseline).uses_diffusion());
  EXPECT_FALSE(tiny_config(Variant::Baseline).uses_category());
  EXPECT_TRUE(tiny_config(Variant::M1).uses_diffusion());
  EXPECT_FALSE(tiny_config(Variant::M1).uses_category());
  EXPECT_TRUE(tiny_config(Variant::Full).uses_diffusion());
  EXPECT_TRUE(tiny_config(Variant::Full).uses_category());
  auto c = tiny_config(Variant::Full);
  c.image_size = 36;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Trainer, BaselineBypassesNoiseAndController) {
  SynthesisTrainer trainer(tiny_config(Variant::Baseline));
  auto batch = random_batch(2, 32, 1);
  auto fake = trainer.generate(batch);
  auto noised = trainer.noise_for_discriminator(batch.ffa, fake);
  EXPECT_EQ(noised.steps, (std::vector<std::int64_t>{0, 0}));
  EXPECT_TRUE(torch::equal(noised.real, batch.ffa));
  EXPECT_TRUE(torch::equal(noised.fake, fake.detach()));
  int updates = 0;
  trainer.on_controller_update = [&](const ControllerState&, double) { ++updates; };
  for (int i = 0; i < 3; ++i) trainer.train_step(batch);
  EXPECT_EQ(updates, 0);
  EXPECT_EQ(trainer.controller().state().update_count, 0u);
}

TEST(Trainer, DiffusionBranchesShareSteps) {
  SynthesisTrainer trainer(tiny_config(Variant::M1));
  auto batch = random_batch(4, 32, 2);
  auto fake = trainer.generate(batch);
  auto noised = trainer.noise_for_discriminator(batch.ffa, fake);
  ASSERT_EQ(noised.steps.size(), 4u);
  for (auto t : noised.steps) {
    EXPECT_GE(t, 0);
    EXPECT_LE(t, trainer.controller().state().T);
  }
  const auto& s = trainer.schedule();
  EXPECT_TRUE(torch::allclose(noised.real, forward_diffuse(s, batch.ffa, noised.steps, noised.real_noise)));
  EXPECT_TRUE(torch::allclose(noised.fake, forward_diffuse(s, fake.detach(), noised.steps, noised.fake_noise)));
  EXPECT_FALSE(noised.fake.requires_grad());
}

TEST(Trainer, M1ForcesNoneCategory) {
  auto config = tiny_config(Variant::M1);
  SynthesisTrainer trainer(config);
  EXPECT_FALSE(trainer.networks().generator->category);
  const std::vector<CategoryLabel> labels = {CategoryLabel::DR};
  EXPECT_TRUE(category_input(config, labels).empty());
  EXPECT_EQ(category_input(tiny_config(Variant::Full), labels), labels);
}

TEST(Trainer, ControllerSeesEveryStep) {
  SynthesisTrainer trainer(tiny_config(Variant::Full));
  std::vector<double> scores;
  trainer.on_controller_update = [&](const ControllerState&, double d) { scores.push_back(d); };
  auto batch = random_batch(2, 32, 3);
  for (int i = 0; i < 3; ++i) {
    auto r = trainer.train_step(batch);
    EXPECT_TRUE(r.finite());
    EXPECT_GE(r.controller.T, 0);
    EXPECT_LE(r.controller.T, 999);
  }
  EXPECT_EQ(scores.size(), 3u);
  EXPECT_EQ(trainer.controller().state().update_count, 3u);
}

TEST(Trainer, DiscriminatorUpdateLeavesGeneratorAlone) {
  SynthesisTrainer trainer(tiny_config(Variant::Full));
  auto batch = random_batch(2, 32, 4);
  const auto g_before = snapshot(*trainer.networks().generator);
  const auto r_before = snapshot(*trainer.networks().registration);
  const auto d_before = snapshot(*trainer.networks().discriminator);
  auto fake = trainer.generate(batch);
  trainer.update_discriminator(trainer.noise_for_discriminator(batch.ffa, fake));
  EXPECT_TRUE(unchanged(*trainer.networks().generator, g_before));
  EXPECT_TRUE(unchanged(*trainer.networks().registration, r_before));
  EXPECT_FALSE(unchanged(*trainer.networks().discriminator, d_before));
  for (const auto& p : trainer.networks().generator->parameters()) {
    EXPECT_FALSE(p.grad().defined() && p.grad().abs().sum().item<double>() > 0.0);
  }
}

TEST(Trainer, GeneratorStepLeavesDiscriminatorAlone) {
  auto config = tiny_config(Variant::M1);
  SynthesisTrainer trainer(config);
  auto batch = random_batch(2, 32, 5);
  trainer.train_step(batch);
  // After a full step D holds only the gradients of its own update.
  SynthesisTrainer probe(config);
  auto fake = probe.generate(batch);
  auto noised = probe.noise_for_discriminator(batch.ffa, fake);
  probe.update_discriminator(noised);
  std::map<std::string, torch::Tensor> d_grads;
  for (const auto& p : probe.networks().discriminator->named_parameters()) {
    d_grads[p.key()] = p.value().grad().clone();
  }
  for (const auto& p : trainer.networks().discriminator->named_parameters()) {
    EXPECT_TRUE(torch::equal(p.value().grad(), d_grads.at(p.key()))) << p.key();
  }
}

TEST(Trainer, ZeroWeightsLeaveOnlyAdversarialGradient) {
  auto config = tiny_config(Variant::Full);
  config.lambda_corr = 0.0;
  config.lambda_smooth = 0.0;
  SynthesisTrainer trainer(config);
  auto batch = random_batch(2, 32, 6);
  const auto r_before = snapshot(*trainer.networks().registration);
  trainer.train_step(batch);
  EXPECT_TRUE(unchanged(*trainer.networks().registration, r_before));

  auto adv = torch::tensor(0.7, torch::requires_grad());
  auto corr = torch::tensor(0.3, torch::requires_grad());
  auto smooth = torch::tensor(0.2, torch::requires_grad());
  auto total = compose_generator_loss(adv, corr, smooth, config);
  total.backward();
  EXPECT_EQ(adv.grad().item<double>(), 1.0);
  EXPECT_FALSE(corr.grad().defined());
  EXPECT_FALSE(smooth.grad().defined());

  auto weighted = tiny_config(Variant::Full);
  auto c2 = torch::tensor(0.3, torch::requires_grad());
  compose_generator_loss(torch::tensor(0.7), c2, torch::tensor(0.2), weighted).backward();
  EXPECT_EQ(c2.grad().item<double>(), 20.0);
}

TEST(Trainer, FixedSeedGivesIdenticalReports) {
  auto batch = random_batch(2, 32, 7);
  SynthesisTrainer a(tiny_config(Variant::Full, 3));
  SynthesisTrainer b(tiny_config(Variant::Full, 3));
  for (int i = 0; i < 3; ++i) expect_same_reports(a.train_step(batch), b.train_step(batch));
}

TEST(Trainer, BaselineIgnoresControllerConfiguration) {
  auto batch = random_batch(2, 32, 8);
  auto c1 = tiny_config(Variant::Baseline, 5);
  auto c2 = c1;
  c2.t_init = 400;
  c2.controller_lambda = 0.7;
  c2.controller_every = 4;
  c2.beta_max = 0.02;
  SynthesisTrainer a(c1), b(c2);
  for (int i = 0; i < 3; ++i) {
    auto ra = a.train_step(batch);
    auto rb = b.train_step(batch);
    EXPECT_EQ(ra.loss_g_total, rb.loss_g_total);
    EXPECT_EQ(ra.loss_d, rb.loss_d);
  }
  const auto na = a.networks().named_tensors();
  const auto nb = b.networks().named_tensors();
  ASSERT_EQ(na.size(), nb.size());
  for (std::size_t i = 0; i < na.size(); ++i) EXPECT_TRUE(torch::equal(na[i].second, nb[i].second));
}

TEST(Trainer, NonFiniteInputAbortsWithSnapshot) {
  SynthesisTrainer trainer(tiny_config(Variant::Full));
  auto batch = random_batch(2, 32, 9);
  batch.cfp[0][0][0][0] = std::nan("");
  try {
    trainer.train_step(batch);
    FAIL() << "expected NonFiniteLossError";
  } catch (const NonFiniteLossError& e) {
    EXPECT_FALSE(e.snapshot().empty());
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir("ckpt");
  auto config = tiny_config(Variant::Full, 4);
  SynthesisTrainer trainer(config);
  trainer.train_step(random_batch(2, 32, 10));
  CheckpointHeader header;
  header.config = config;
  header.controller = trainer.controller().state();
  header.epoch = 7;
  save_checkpoint(dir / "m.ckpt", trainer.networks(), header);

  auto loaded = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(loaded.header.epoch, 7);
  EXPECT_EQ(loaded.header.controller, header.controller);
  EXPECT_EQ(loaded.header.config.to_config().items(), config.to_config().items());
  const auto a = trainer.networks().named_tensors();
  const auto b = loaded.networks.named_tensors();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_TRUE(torch::equal(a[i].second, b[i].second)) << a[i].first;
  }
  EXPECT_EQ(read_checkpoint_header(dir / "m.ckpt").epoch, 7);

  auto x = random_batch(2, 32, 11);
  trainer.networks().train(false);
  loaded.networks.train(false);
  torch::NoGradGuard no_grad;
  EXPECT_TRUE(torch::equal(trainer.networks().generator->forward(x.cfp, x.labels),
                           loaded.networks.generator->forward(x.cfp, x.labels)));
}

TEST(Checkpoint, RejectsCorruptFiles) {
  TempDir dir("ckpt_bad");
  {
    std::ofstream out(dir / "bad.ckpt", std::ios::binary);
    out << "NOTACKPT and some bytes";
  }
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), std::runtime_error);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), std::runtime_error);

  auto config = tiny_config(Variant::Baseline);
  auto nets = SynthesisNetworks::build(config);
  CheckpointHeader header;
  header.config = config;
  save_checkpoint(dir / "ok.ckpt", nets, header);
  auto bytes = cfp2ffa::testing::read_file(dir / "ok.ckpt");
  bytes[8] = 99;  // format version
  {
    std::ofstream out(dir / "v.ckpt", std::ios::binary);
    out << bytes;
  }
  EXPECT_THROW(load_checkpoint(dir / "v.ckpt"), std::runtime_error);
  bytes = cfp2ffa::testing::read_file(dir / "ok.ckpt");
  {
    std::ofstream out(dir / "trunc.ckpt", std::ios::binary);
    out << bytes.substr(0, bytes.size() / 2);
  }
  EXPECT_THROW(load_checkpoint(dir / "trunc.ckpt"), std::runtime_error);
}

TEST(RunTraining, PhantomSmoke) {
  TempDir dir("train");
  PhantomConfig pc;
  pc.image_size = 32;
  auto manifest = split(generate_phantom_dataset(10, 3, pc, dir / "data"), 0.7, 1);
  auto config = tiny_config(Variant::M1);
  config.epochs = 2;
  auto result = run_training(manifest, config, dir / "m1");
  ASSERT_EQ(result.history.size(), 2u);
  for (const auto& e : result.history) {
    EXPECT_TRUE(std::isfinite(e.loss_corr) && std::isfinite(e.loss_d) && std::isfinite(e.val_corr));
  }
  for (const char* f : {"losses.csv", "epochs.csv", "controller_trace.csv", "checkpoints/final.ckpt",
                        "samples/epoch_001.png", "samples/epoch_002.png"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "m1" / f)) << f;
  }

  // Reloading the final checkpoint reproduces the validation outputs.
  auto loaded = load_checkpoint(result.final_checkpoint);
  EXPECT_EQ(loaded.header.epoch, 2);
  const auto val = load_samples(manifest, Split::Validation, 32);
  auto again = load_checkpoint(result.final_checkpoint);
  auto a = synthesize(loaded.networks, loaded.header.config, val);
  auto b = synthesize(again.networks, again.header.config, val);
  EXPECT_TRUE(torch::equal(a.fake, b.fake));
  EXPECT_DOUBLE_EQ(validation_correction_loss(loaded.networks, config, val), result.history.back().val_corr);

  auto base = tiny_config(Variant::Baseline);
  run_training(manifest, base, dir / "baseline");
  EXPECT_FALSE(std::filesystem::exists(dir / "baseline" / "controller_trace.csv"));
}
