#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "cfp2ffa/config.hpp"

namespace cfp2ffa {

/// Build identifier: package version plus the git revision at configure time.
std::string code_version();

/// Record of one CLI invocation, saved as `experiment_manifest.txt` in the
/// output directory before the command does anything else. `settings`
/// holds every resolved option, so the command can be re-run from the
/// manifest alone.
struct ExperimentManifest {
  std::string command;
  KeyValueConfig settings;
  std::uint64_t seed = 0;
  std::string code_version;
  std::filesystem::path output_dir;
  std::string started_at;
  std::string finished_at;
  std::string rerun_of;

  static constexpr const char* kFileName = "experiment_manifest.txt";

  void save(const std::filesystem::path& path) const;
  static ExperimentManifest load(const std::filesystem::path& path);
};

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

}  // namespace cfp2ffa
