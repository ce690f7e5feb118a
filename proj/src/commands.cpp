#include "cfp2ffa/commands.hpp"

#include <iostream>
#include <stdexcept>

#include "cfp2ffa/checkpoint.hpp"
#include "cfp2ffa/dataset.hpp"
#include "cfp2ffa/evaluation.hpp"
#include "cfp2ffa/experiment.hpp"
#include "cfp2ffa/feature_extractor.hpp"
#include "cfp2ffa/trainer.hpp"

namespace fs = std::filesystem;

namespace cfp2ffa {

namespace {

KeyValueConfig with_prefix(const KeyValueConfig& c, const std::string& prefix) {
  KeyValueConfig out;
  for (const auto& [k, v] : c.items()) out.set(prefix + k, v);
  return out;
}

KeyValueConfig strip_prefix(const KeyValueConfig& c, const std::string& prefix) {
  KeyValueConfig out;
  for (const auto& [k, v] : c.items()) {
    if (k.rfind(prefix, 0) == 0) out.set(k.substr(prefix.size()), v);
  }
  return out;
}

std::string absolute_path(const fs::path& p) { return fs::absolute(p).lexically_normal().string(); }

DatasetManifest load_split_dataset(const fs::path& data, double ratio, std::uint64_t seed) {
  if (!fs::is_directory(data)) throw std::runtime_error("dataset not found: " + data.string());
  return split(load_mpos(data), ratio, seed);
}

std::uint64_t settings_seed(const std::string& command, const KeyValueConfig& s) {
  if (command == "synth-train") return static_cast<std::uint64_t>(s.get_int("train.seed"));
  if (command == "diag-run") return static_cast<std::uint64_t>(s.get_int("diag.seed"));
  return static_cast<std::uint64_t>(s.get_int("seed"));
}

void run_phantom_gen(const KeyValueConfig& s, const fs::path& out) {
  const auto config = PhantomConfig::from_config(strip_prefix(s, "phantom."));
  const auto manifest = generate_phantom_dataset(s.get_int("n"), settings_seed("phantom-gen", s), config, out);
  std::cerr << "phantom-gen: wrote " << manifest.entries.size() << " pairs to " << out.string() << '\n';
}

void run_synth_train(const KeyValueConfig& s, const fs::path& out) {
  const auto config = TrainConfig::from_config(strip_prefix(s, "train."), TrainConfig{});
  config.validate();
  const auto manifest = load_split_dataset(s.get_string("data"), config.split_ratio, config.seed);
  write_manifest_csv(manifest, out / "split_manifest.csv");
  const auto result = run_training(manifest, config, out);
  std::cerr << "synth-train: final checkpoint " << result.final_checkpoint.string() << '\n';
}

void run_synth_eval(const KeyValueConfig& s, const fs::path& out) {
  const fs::path checkpoint = s.get_string("checkpoint");
  if (!fs::is_regular_file(checkpoint)) {
    throw std::runtime_error("checkpoint not found: " + checkpoint.string());
  }
  // Evaluate on the validation split the checkpoint was trained against.
  const auto header = read_checkpoint_header(checkpoint);
  const auto manifest = load_split_dataset(s.get_string("data"), header.config.split_ratio, header.config.seed);
  auto extractor = make_extractor(s.get_string("extractor"));
  const auto report = evaluate_checkpoint(checkpoint, manifest, *extractor, settings_seed("synth-eval", s));
  report.write_csv(out / "synthesis_metrics.csv");
  std::cerr << "synth-eval: mean fid " << mean_over_categories(report, "fid") << ", mean lpips "
            << mean_over_categories(report, "lpips") << '\n';
}

void run_diag_run(const KeyValueConfig& s, const fs::path& out) {
  const auto config = DiagnosisConfig::from_config(strip_prefix(s, "diag."), DiagnosisConfig{});
  config.validate();
  auto modality = ModalityConfig::from_ffa_spec(s.get_string("ffa"));
  modality.use_cfp = s.get_bool("use_cfp");
  modality.validate();
  const auto manifest = load_split_dataset(s.get_string("data"), config.split_ratio, config.seed);
  std::map<std::string, fs::path> synthetic;
  if (modality.ffa == FfaSource::Synthetic) {
    const auto header = read_checkpoint_header(modality.checkpoint);
    if (header.config.seed != config.seed || header.config.split_ratio != config.split_ratio) {
      std::cerr << "warning: the synthesis model was trained on a different split; validation "
                   "CFPs may have been seen during synthesis training\n";
    }
    synthetic = build_synthetic_ffa_cache(manifest, modality.checkpoint, out / "synthetic_ffa");
  }
  const auto report = run_diagnosis_experiment(manifest, modality, config, out, synthetic);
  std::cerr << "diag-run (" << modality.ffa_spec() << "): acc " << *report.find("all", "acc")
            << " auc " << *report.find("all", "auc") << '\n';
}

}  // namespace

KeyValueConfig phantom_gen_settings(std::int64_t n, std::uint64_t seed, const PhantomConfig& config) {
  auto s = with_prefix(config.to_config(), "phantom.");
  s.set("n", n);
  s.set("seed", static_cast<std::int64_t>(seed));
  return s;
}

KeyValueConfig synth_train_settings(const fs::path& data, const TrainConfig& config) {
  auto s = with_prefix(config.to_config(), "train.");
  s.set("data", absolute_path(data));
  return s;
}

KeyValueConfig synth_eval_settings(const fs::path& checkpoint, const fs::path& data,
                                   std::uint64_t seed, const std::string& extractor) {
  KeyValueConfig s;
  s.set("checkpoint", absolute_path(checkpoint));
  s.set("data", absolute_path(data));
  s.set("seed", static_cast<std::int64_t>(seed));
  s.set("extractor", extractor);
  return s;
}

KeyValueConfig diag_run_settings(const fs::path& data, const ModalityConfig& modality,
                                 const DiagnosisConfig& config) {
  auto s = with_prefix(config.to_config(), "diag.");
  s.set("data", absolute_path(data));
  auto m = modality;
  if (m.ffa == FfaSource::Synthetic) m.checkpoint = absolute_path(m.checkpoint);
  s.set("ffa", m.ffa_spec());
  s.set("use_cfp", m.use_cfp);
  return s;
}

void execute_command(const std::string& command, const KeyValueConfig& settings,
                     const fs::path& out_dir, const std::string& rerun_of) {
  void (*run)(const KeyValueConfig&, const fs::path&) = nullptr;
  if (command == "phantom-gen") run = run_phantom_gen;
  else if (command == "synth-train") run = run_synth_train;
  else if (command == "synth-eval") run = run_synth_eval;
  else if (command == "diag-run") run = run_diag_run;
  else throw std::invalid_argument("unknown command '" + command + "'");

  ExperimentManifest manifest;
  manifest.command = command;
  manifest.settings = settings;
  manifest.seed = settings_seed(command, settings);
  manifest.code_version = code_version();
  manifest.output_dir = fs::absolute(out_dir).lexically_normal();
  manifest.started_at = utc_timestamp();
  manifest.rerun_of = rerun_of;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + out_dir.string() + ": " + ec.message());
  const auto manifest_path = out_dir / ExperimentManifest::kFileName;
  manifest.save(manifest_path);

  run(settings, out_dir);

  manifest.finished_at = utc_timestamp();
  manifest.save(manifest_path);
}

void rerun_manifest(const fs::path& manifest_path, const std::optional<fs::path>& out_dir) {
  const auto manifest = ExperimentManifest::load(manifest_path);
  const auto out = out_dir ? *out_dir : manifest.output_dir;
  if (manifest.code_version != code_version()) {
    std::cerr << "warning: manifest was written by " << manifest.code_version << ", running "
              << code_version() << '\n';
  }
  execute_command(manifest.command, manifest.settings, out, absolute_path(manifest_path));
}

}  // namespace cfp2ffa
