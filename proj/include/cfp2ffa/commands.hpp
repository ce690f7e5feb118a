#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "cfp2ffa/config.hpp"
#include "cfp2ffa/diagnosis.hpp"
#include "cfp2ffa/phantom.hpp"
#include "cfp2ffa/train_config.hpp"

namespace cfp2ffa {

// Resolved settings of each command. Every option that affects the outputs
// lives here, so a saved copy is enough to re-run.
KeyValueConfig phantom_gen_settings(std::int64_t n, std::uint64_t seed, const PhantomConfig& config);
KeyValueConfig synth_train_settings(const std::filesystem::path& data, const TrainConfig& config);
KeyValueConfig synth_eval_settings(const std::filesystem::path& checkpoint,
                                   const std::filesystem::path& data, std::uint64_t seed,
                                   const std::string& extractor);
KeyValueConfig diag_run_settings(const std::filesystem::path& data, const ModalityConfig& modality,
                                 const DiagnosisConfig& config);

/// Runs "phantom-gen", "synth-train", "synth-eval" or "diag-run". The
/// experiment manifest is written to `out_dir` before anything else and
/// completed with a finish time at the end. Errors propagate as exceptions.
void execute_command(const std::string& command, const KeyValueConfig& settings,
                     const std::filesystem::path& out_dir, const std::string& rerun_of = {});

/// Re-executes the command recorded in `manifest_path`, into `out_dir` or
/// the recorded output directory.
void rerun_manifest(const std::filesystem::path& manifest_path,
                    const std::optional<std::filesystem::path>& out_dir);

}  // namespace cfp2ffa
