#include "cfp2ffa/experiment.hpp"

#include <chrono>
#include <ctime>
#include <stdexcept>

#ifndef CFP2FFA_VERSION
#define CFP2FFA_VERSION "0.0.0"
#endif
#ifndef CFP2FFA_GIT_REVISION
#define CFP2FFA_GIT_REVISION "unknown"
#endif

namespace cfp2ffa {

std::string code_version() { return std::string(CFP2FFA_VERSION) + "+" + CFP2FFA_GIT_REVISION; }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {
constexpr const char* kSettingPrefix = "setting.";
}

void ExperimentManifest::save(const std::filesystem::path& path) const {
  KeyValueConfig c;
  c.set("command", command);
  c.set("seed", std::to_string(seed));
  c.set("code_version", code_version);
  c.set("output_dir", output_dir.string());
  c.set("started_at", started_at);
  c.set("finished_at", finished_at);
  if (!rerun_of.empty()) c.set("rerun_of", rerun_of);
  for (const auto& [k, v] : settings.items()) c.set(kSettingPrefix + k, v);
  c.save(path, "cfp2ffa experiment manifest");
}

ExperimentManifest ExperimentManifest::load(const std::filesystem::path& path) {
  const auto c = KeyValueConfig::load(path);
  ExperimentManifest m;
  m.command = c.get_string("command");
  m.seed = std::stoull(c.get_string("seed"));
  m.code_version = c.get_string("code_version");
  m.output_dir = c.get_string("output_dir");
  m.started_at = c.has("started_at") ? c.get_string("started_at") : "";
  m.finished_at = c.has("finished_at") ? c.get_string("finished_at") : "";
  m.rerun_of = c.has("rerun_of") ? c.get_string("rerun_of") : "";
  const std::string prefix = kSettingPrefix;
  for (const auto& [k, v] : c.items()) {
    if (k.rfind(prefix, 0) == 0) m.settings.set(k.substr(prefix.size()), v);
  }
  if (m.command.empty()) throw std::runtime_error(path.string() + ": manifest has no command");
  return m;
}

}  // namespace cfp2ffa
