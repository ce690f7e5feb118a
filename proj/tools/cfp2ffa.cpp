// cfp2ffa: phantom data, synthesis training/evaluation and diagnosis runs.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cfp2ffa/commands.hpp"
#include "cfp2ffa/experiment.hpp"

namespace fs = std::filesystem;
using namespace cfp2ffa;

namespace {

std::string default_data_root() {
  const char* env = std::getenv("CFP2FFA_DATA_ROOT");
  return env ? env : "";
}

KeyValueConfig load_overrides(const std::string& path) {
  return path.empty() ? KeyValueConfig{} : KeyValueConfig::load(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CFP to FFA synthesis and dual-modality diagnosis"};
  app.set_version_flag("--version", code_version());
  app.require_subcommand(1);

  // phantom-gen
  auto* gen = app.add_subcommand("phantom-gen", "render a paired phantom dataset");
  std::int64_t gen_n = 0;
  std::uint64_t gen_seed = 0;
  std::string gen_out, gen_config;
  std::int64_t gen_size = 0;
  gen->add_option("--n", gen_n, "number of pairs (>= 5)")->required()->check(CLI::Range(std::int64_t{5}, std::int64_t{1} << 40));
  gen->add_option("--seed", gen_seed, "random seed")->required();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--config", gen_config, "phantom config file (key = value)");
  gen->add_option("--image-size", gen_size, "image side in pixels");

  // synth-train
  auto* train = app.add_subcommand("synth-train", "train a synthesis variant");
  std::string tr_variant = "full", tr_profile = "desk", tr_data = default_data_root(), tr_out, tr_config;
  std::optional<std::uint64_t> tr_seed;
  std::optional<std::int64_t> tr_epochs, tr_size, tr_batch, tr_blocks;
  std::optional<double> tr_lr;
  bool tr_augment = false, tr_keep = false;
  train->add_option("--variant", tr_variant, "baseline | m1 | full")->check(CLI::IsMember({"baseline", "m1", "full"}));
  train->add_option("--profile", tr_profile, "desk | full")->check(CLI::IsMember({"desk", "full"}));
  train->add_option("--data", tr_data, "dataset root (default $CFP2FFA_DATA_ROOT)");
  train->add_option("--seed", tr_seed, "random seed");
  train->add_option("--out", tr_out, "output directory")->required();
  train->add_option("--config", tr_config, "training config overrides (key = value)");
  train->add_option("--epochs", tr_epochs);
  train->add_option("--image-size", tr_size);
  train->add_option("--batch-size", tr_batch);
  train->add_option("--res-blocks", tr_blocks, "generator residual blocks");
  train->add_option("--lr", tr_lr);
  train->add_flag("--augment", tr_augment, "random joint flips");
  train->add_flag("--keep-epoch-checkpoints", tr_keep);

  // synth-eval
  auto* eval = app.add_subcommand("synth-eval", "score a checkpoint on its validation split");
  std::string ev_ckpt, ev_data = default_data_root(), ev_out, ev_extractor = "random";
  std::uint64_t ev_seed = 1;
  eval->add_option("--checkpoint", ev_ckpt)->required();
  eval->add_option("--data", ev_data, "dataset root (default $CFP2FFA_DATA_ROOT)");
  eval->add_option("--seed", ev_seed);
  eval->add_option("--out", ev_out)->required();
  eval->add_option("--extractor", ev_extractor, "random[:seed] | identity | torchscript:<path>");

  // diag-run
  auto* diag = app.add_subcommand("diag-run", "train and score the diagnosis classifier");
  std::string dg_ffa = "none", dg_profile = "desk", dg_data = default_data_root(), dg_out, dg_config;
  std::optional<std::uint64_t> dg_seed;
  std::optional<std::int64_t> dg_epochs, dg_size;
  bool dg_no_cfp = false;
  diag->add_option("--ffa", dg_ffa, "none | real | synthetic:<checkpoint>");
  diag->add_option("--profile", dg_profile)->check(CLI::IsMember({"desk", "full"}));
  diag->add_option("--data", dg_data, "dataset root (default $CFP2FFA_DATA_ROOT)");
  diag->add_option("--seed", dg_seed);
  diag->add_option("--out", dg_out)->required();
  diag->add_option("--config", dg_config, "diagnosis config overrides (key = value)");
  diag->add_option("--epochs", dg_epochs);
  diag->add_option("--image-size", dg_size);
  diag->add_flag("--no-cfp", dg_no_cfp, "FFA-only classifier");

  // rerun
  auto* rerun = app.add_subcommand("rerun", "re-execute a saved experiment manifest");
  std::string rr_manifest, rr_out;
  rerun->add_option("--manifest", rr_manifest)->required()->check(CLI::ExistingFile);
  rerun->add_option("--out", rr_out, "output directory (default: the recorded one)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      auto config = PhantomConfig::from_config(load_overrides(gen_config));
      if (gen_size > 0) config.image_size = gen_size;
      execute_command("phantom-gen", phantom_gen_settings(gen_n, gen_seed, config), gen_out);
    } else if (*train) {
      if (tr_data.empty()) throw CLI::RequiredError("--data");
      auto config = TrainConfig::profile_defaults(tr_profile);
      config = TrainConfig::from_config(load_overrides(tr_config), config);
      config.variant = parse_variant(tr_variant);
      if (tr_seed) config.seed = *tr_seed;
      if (tr_epochs) config.epochs = *tr_epochs;
      if (tr_size) config.image_size = *tr_size;
      if (tr_batch) config.batch_size = *tr_batch;
      if (tr_blocks) config.num_res_blocks = *tr_blocks;
      if (tr_lr) config.lr = *tr_lr;
      if (tr_augment) config.augment = true;
      if (tr_keep) config.keep_epoch_checkpoints = true;
      config.validate();
      execute_command("synth-train", synth_train_settings(tr_data, config), tr_out);
    } else if (*eval) {
      if (ev_data.empty()) throw CLI::RequiredError("--data");
      execute_command("synth-eval", synth_eval_settings(ev_ckpt, ev_data, ev_seed, ev_extractor), ev_out);
    } else if (*diag) {
      if (dg_data.empty()) throw CLI::RequiredError("--data");
      auto modality = ModalityConfig::from_ffa_spec(dg_ffa);
      modality.use_cfp = !dg_no_cfp;
      modality.validate();
      auto config = DiagnosisConfig::profile_defaults(dg_profile);
      config = DiagnosisConfig::from_config(load_overrides(dg_config), config);
      if (dg_seed) config.seed = *dg_seed;
      if (dg_epochs) config.epochs = *dg_epochs;
      if (dg_size) config.image_size = *dg_size;
      config.validate();
      execute_command("diag-run", diag_run_settings(dg_data, modality, config), dg_out);
    } else if (*rerun) {
      rerun_manifest(rr_manifest, rr_out.empty() ? std::nullopt : std::optional<fs::path>(rr_out));
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
