#include "cfp2ffa/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace cfp2ffa {

SynthesisNetworks SynthesisNetworks::build(const TrainConfig& config) {
  torch::manual_seed(config.seed);
  SynthesisNetworks nets;
  GeneratorOptions g;
  g.num_res_blocks = config.num_res_blocks;
  g.use_category = config.uses_category();
  nets.generator = ResnetGenerator(g);
  DiscriminatorOptions d;
  d.time_conditioned = config.uses_diffusion();
  d.num_steps = config.schedule_steps;
  nets.discriminator = PatchDiscriminator(d);
  nets.registration = RegistrationUNet();
  return nets;
}

void SynthesisNetworks::train(bool on) {
  generator->train(on);
  discriminator->train(on);
  registration->train(on);
}

std::vector<std::pair<std::string, torch::Tensor>> SynthesisNetworks::named_tensors() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  auto add = [&out](const std::string& prefix, const torch::nn::Module& m) {
    for (const auto& item : m.named_parameters()) out.emplace_back(prefix + item.key(), item.value());
    for (const auto& item : m.named_buffers()) out.emplace_back(prefix + item.key(), item.value());
  };
  add("generator.", *generator);
  add("discriminator.", *discriminator);
  add("registration.", *registration);
  return out;
}

namespace {

constexpr char kMagic[8] = {'C', 'F', 'P', '2', 'F', 'F', 'A', '\0'};

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  // Host is little-endian (x86-64 / aarch64); the format fixes LE.
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return value;
}

KeyValueConfig header_to_config(const CheckpointHeader& h) {
  KeyValueConfig c = h.config.to_config();
  c.set("epoch", h.epoch);
  c.set("controller.r_steps", h.controller.r_steps);
  c.set("controller.lambda", h.controller.lambda);
  c.set("controller.T", h.controller.T);
  c.set("controller.T_min", h.controller.T_min);
  c.set("controller.T_max", h.controller.T_max);
  c.set("controller.update_count", static_cast<std::int64_t>(h.controller.update_count));
  c.set("flags.diffusion", h.config.uses_diffusion());
  c.set("flags.category", h.config.uses_category());
  return c;
}

CheckpointHeader config_to_header(const KeyValueConfig& c, std::uint32_t version) {
  CheckpointHeader h;
  h.format_version = version;
  KeyValueConfig train;
  for (const auto& [k, v] : c.items()) {
    if (k.rfind("controller.", 0) == 0 || k.rfind("flags.", 0) == 0 || k == "epoch") continue;
    train.set(k, v);
  }
  h.config = TrainConfig::from_config(train, TrainConfig{});
  h.epoch = c.get_int("epoch");
  h.controller.r_steps = c.get_int("controller.r_steps");
  h.controller.lambda = c.get_double("controller.lambda");
  h.controller.T = c.get_int("controller.T");
  h.controller.T_min = c.get_int("controller.T_min");
  h.controller.T_max = c.get_int("controller.T_max");
  h.controller.update_count = static_cast<std::uint64_t>(c.get_int("controller.update_count"));
  if (c.get_bool("flags.diffusion") != h.config.uses_diffusion() ||
      c.get_bool("flags.category") != h.config.uses_category()) {
    throw std::runtime_error("checkpoint variant flags disagree with its variant");
  }
  return h;
}

CheckpointHeader read_header(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("not a cfp2ffa checkpoint");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointFormatVersion) {
    throw std::runtime_error("unsupported checkpoint format version " + std::to_string(version));
  }
  const auto len = get<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("checkpoint truncated");
  std::istringstream hs(text);
  return config_to_header(KeyValueConfig::parse(hs, "checkpoint header"), version);
}

}  // namespace

void save_checkpoint(const fs::path& path, const SynthesisNetworks& networks,
                     const CheckpointHeader& header) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(kMagic, 8);
    put<std::uint32_t>(out, header.format_version);
    std::ostringstream hs;
    header_to_config(header).write(hs);
    const auto text = hs.str();
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));

    const auto tensors = networks.named_tensors();
    put<std::uint64_t>(out, tensors.size());
    for (const auto& [name, value] : tensors) {
      auto t = value.detach().to(torch::kCPU).to(torch::kFloat32).contiguous();
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint8_t>(out, 0);
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
      for (auto d : t.sizes()) put<std::int64_t>(out, d);
      const auto bytes = static_cast<std::uint64_t>(t.numel()) * sizeof(float);
      put<std::uint64_t>(out, bytes);
      out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(bytes));
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

CheckpointHeader read_checkpoint_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_header(in);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  LoadedCheckpoint loaded;
  loaded.header = read_header(in);
  loaded.networks = SynthesisNetworks::build(loaded.header.config);

  std::map<std::string, torch::Tensor> targets;
  for (auto& [name, t] : loaded.networks.named_tensors()) targets.emplace(name, t);

  const auto count = get<std::uint64_t>(in);
  if (count != targets.size()) {
    throw std::runtime_error("checkpoint block count " + std::to_string(count) +
                             " does not match the network (" + std::to_string(targets.size()) + ")");
  }
  torch::NoGradGuard no_grad;
  for (std::uint64_t b = 0; b < count; ++b) {
    const auto name_len = get<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (get<std::uint8_t>(in) != 0) throw std::runtime_error("unsupported block dtype in " + name);
    const auto ndim = get<std::uint32_t>(in);
    std::vector<std::int64_t> dims(ndim);
    for (auto& d : dims) d = get<std::int64_t>(in);
    const auto bytes = get<std::uint64_t>(in);

    auto it = targets.find(name);
    if (it == targets.end()) throw std::runtime_error("unexpected checkpoint block " + name);
    auto& target = it->second;
    if (!target.sizes().equals(dims) ||
        bytes != static_cast<std::uint64_t>(target.numel()) * sizeof(float)) {
      throw std::runtime_error("shape mismatch for checkpoint block " + name);
    }
    auto buffer = torch::empty(dims, torch::kFloat32);
    in.read(static_cast<char*>(buffer.data_ptr()), static_cast<std::streamsize>(bytes));
    if (!in) throw std::runtime_error("checkpoint truncated in block " + name);
    target.copy_(buffer);
    targets.erase(it);
  }
  if (!targets.empty()) throw std::runtime_error("checkpoint lacks block " + targets.begin()->first);
  return loaded;
}

}  // namespace cfp2ffa
