#include "cfp2ffa/diagnosis.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "cfp2ffa/image_io.hpp"

namespace fs = std::filesystem;
namespace nn = torch::nn;

namespace cfp2ffa {

// --- ModalityConfig ---------------------------------------------------------

ModalityConfig ModalityConfig::from_ffa_spec(std::string_view spec) {
  ModalityConfig m;
  if (spec == "none") {
    m.ffa = FfaSource::None;
  } else if (spec == "real") {
    m.ffa = FfaSource::Real;
  } else if (spec.rfind("synthetic:", 0) == 0 && spec.size() > 10) {
    m.ffa = FfaSource::Synthetic;
    m.checkpoint = std::string(spec.substr(10));
  } else {
    throw std::invalid_argument("--ffa must be none, real or synthetic:<checkpoint>, got '" +
                                std::string(spec) + "'");
  }
  return m;
}

std::string ModalityConfig::ffa_spec() const {
  switch (ffa) {
    case FfaSource::None: return "none";
    case FfaSource::Real: return "real";
    case FfaSource::Synthetic: return "synthetic:" + checkpoint.string();
  }
  return "none";
}

void ModalityConfig::validate() const {
  if (!use_cfp && ffa == FfaSource::None) {
    throw std::invalid_argument("diagnosis needs at least one modality");
  }
  if (ffa == FfaSource::Synthetic && !fs::is_regular_file(checkpoint)) {
    throw std::runtime_error("synthesis checkpoint not found: " + checkpoint.string());
  }
}

// --- Backbone ---------------------------------------------------------------

namespace {

nn::Conv2d conv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2).bias(false));
}

nn::Sequential shortcut(std::int64_t in, std::int64_t out, std::int64_t stride) {
  if (in == out && stride == 1) return nn::Sequential();
  return nn::Sequential(conv(in, out, 1, stride), nn::BatchNorm2d(out));
}

class BasicBlockImpl : public nn::Module {
 public:
  BasicBlockImpl(std::int64_t in, std::int64_t out, std::int64_t stride) {
    body = register_module("body", nn::Sequential(conv(in, out, 3, stride), nn::BatchNorm2d(out),
                                                  nn::ReLU(true), conv(out, out, 3, 1),
                                                  nn::BatchNorm2d(out)));
    skip = register_module("skip", shortcut(in, out, stride));
  }
  torch::Tensor forward(const torch::Tensor& x) {
    auto s = skip->is_empty() ? x : skip->forward(x);
    return torch::relu(body->forward(x) + s);
  }

  nn::Sequential body{nullptr}, skip{nullptr};
};
TORCH_MODULE(BasicBlock);

class BottleneckImpl : public nn::Module {
 public:
  BottleneckImpl(std::int64_t in, std::int64_t width, std::int64_t stride) {
    const std::int64_t out = 4 * width;
    body = register_module(
        "body", nn::Sequential(conv(in, width, 1, 1), nn::BatchNorm2d(width), nn::ReLU(true),
                               conv(width, width, 3, stride), nn::BatchNorm2d(width),
                               nn::ReLU(true), conv(width, out, 1, 1), nn::BatchNorm2d(out)));
    skip = register_module("skip", shortcut(in, out, stride));
  }
  torch::Tensor forward(const torch::Tensor& x) {
    auto s = skip->is_empty() ? x : skip->forward(x);
    return torch::relu(body->forward(x) + s);
  }

  nn::Sequential body{nullptr}, skip{nullptr};
};
TORCH_MODULE(Bottleneck);

}  // namespace

ResidualBackboneImpl::ResidualBackboneImpl(std::string profile, std::int64_t input_size)
    : profile_(std::move(profile)), input_size_(input_size) {
  if (input_size_ < 32) throw std::invalid_argument("backbone input size must be >= 32");
  if (profile_ == "desk") {
    stem = register_module("stem", nn::Sequential(conv(3, 16, 3, 2), nn::BatchNorm2d(16), nn::ReLU(true)));
    std::int64_t in = 16;
    const std::int64_t widths[] = {16, 32, 64, 128};
    for (int i = 0; i < 4; ++i) {
      nn::Sequential stage;
      stage->push_back(BasicBlock(in, widths[i], i == 0 ? 1 : 2));
      in = widths[i];
      stages_.push_back(register_module("stage" + std::to_string(i + 1), stage));
    }
    feature_dim_ = in;
  } else if (profile_ == "resnet50") {
    stem = register_module(
        "stem", nn::Sequential(conv(3, 64, 7, 2), nn::BatchNorm2d(64), nn::ReLU(true),
                               nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1))));
    std::int64_t in = 64;
    const std::int64_t widths[] = {64, 128, 256, 512};
    const int depths[] = {3, 4, 6, 3};
    for (int i = 0; i < 4; ++i) {
      nn::Sequential stage;
      for (int b = 0; b < depths[i]; ++b) {
        stage->push_back(Bottleneck(in, widths[i], (b == 0 && i > 0) ? 2 : 1));
        in = 4 * widths[i];
      }
      stages_.push_back(register_module("stage" + std::to_string(i + 1), stage));
    }
    feature_dim_ = in;
  } else {
    throw std::invalid_argument("unknown backbone profile '" + profile_ + "' (desk|resnet50)");
  }
}

torch::Tensor ResidualBackboneImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != input_size_ || x.size(3) != input_size_) {
    throw std::invalid_argument("backbone expects [B, 3, " + std::to_string(input_size_) + ", " +
                                std::to_string(input_size_) + "] input");
  }
  auto h = stem->forward(x);
  for (auto& stage : stages_) h = stage->forward(h);
  return h.mean({2, 3});
}

torch::Tensor extract_features(const torch::Tensor& img, ResidualBackbone& backbone) {
  if (img.dim() == 3) return backbone->forward(img.unsqueeze(0)).squeeze(0);
  return backbone->forward(img);
}

torch::Tensor classify(const std::vector<torch::Tensor>& features, nn::Linear& head) {
  if (features.empty()) throw std::invalid_argument("classify: no features");
  auto joined = torch::cat(features, -1);
  if (joined.size(-1) != head->options.in_features()) {
    throw std::invalid_argument("classify: feature width " + std::to_string(joined.size(-1)) +
                                " does not match head input " +
                                std::to_string(head->options.in_features()));
  }
  return torch::softmax(head->forward(joined), -1);
}

// --- Classifier -------------------------------------------------------------

DiagnosisClassifierImpl::DiagnosisClassifierImpl(ModalityConfig modality, const std::string& profile,
                                                 std::int64_t input_size)
    : modality_(std::move(modality)) {
  if (!modality_.use_cfp && modality_.ffa == FfaSource::None) {
    throw std::invalid_argument("diagnosis needs at least one modality");
  }
  std::int64_t width = 0;
  if (modality_.use_cfp) {
    cfp_backbone = register_module("cfp_backbone", ResidualBackbone(profile, input_size));
    width += cfp_backbone->feature_dim();
  }
  if (modality_.ffa != FfaSource::None) {
    ffa_backbone = register_module("ffa_backbone", ResidualBackbone(profile, input_size));
    width += ffa_backbone->feature_dim();
  }
  head = register_module("head", nn::Linear(width, kNumDiagnosisClasses));
}

std::vector<torch::Tensor> DiagnosisClassifierImpl::features(const torch::Tensor& cfp,
                                                             const torch::Tensor& ffa) {
  std::vector<torch::Tensor> parts;
  if (cfp_backbone) parts.push_back(cfp_backbone->forward(cfp));
  if (ffa_backbone) parts.push_back(ffa_backbone->forward(ffa));
  return parts;
}

torch::Tensor DiagnosisClassifierImpl::forward(const torch::Tensor& cfp, const torch::Tensor& ffa) {
  return head->forward(torch::cat(features(cfp, ffa), 1));
}

torch::Tensor DiagnosisClassifierImpl::predict(const torch::Tensor& cfp, const torch::Tensor& ffa) {
  return classify(features(cfp, ffa), head);
}

// --- DiagnosisConfig --------------------------------------------------------

void DiagnosisConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid diagnosis config: ") + what);
  };
  require(backbone == "desk" || backbone == "resnet50", "backbone must be desk or resnet50");
  require(epochs >= 1, "epochs must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(lr > 0.0, "lr must be positive");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(image_size >= 32, "image_size must be >= 32");
  require(split_ratio > 0.0 && split_ratio < 1.0, "split_ratio must lie in (0, 1)");
}

KeyValueConfig DiagnosisConfig::to_config() const {
  KeyValueConfig c;
  c.set("profile", profile);
  c.set("backbone", backbone);
  c.set("epochs", epochs);
  c.set("batch_size", batch_size);
  c.set("lr", lr);
  c.set("weight_decay", weight_decay);
  c.set("image_size", image_size);
  c.set("seed", static_cast<std::int64_t>(seed));
  c.set("split_ratio", split_ratio);
  c.set("augment", augment);
  return c;
}

DiagnosisConfig DiagnosisConfig::from_config(const KeyValueConfig& c, DiagnosisConfig base) {
  const auto known = base.to_config();
  std::vector<std::string> keys;
  for (const auto& [k, v] : known.items()) keys.push_back(k);
  if (auto unknown = c.unknown_keys(keys); !unknown.empty()) {
    throw std::invalid_argument("unknown diagnosis config key '" + unknown.front() + "'");
  }
  c.read_into("profile", base.profile);
  c.read_into("backbone", base.backbone);
  c.read_into("epochs", base.epochs);
  c.read_into("batch_size", base.batch_size);
  c.read_into("lr", base.lr);
  c.read_into("weight_decay", base.weight_decay);
  c.read_into("image_size", base.image_size);
  c.read_into("seed", base.seed);
  c.read_into("split_ratio", base.split_ratio);
  c.read_into("augment", base.augment);
  return base;
}

DiagnosisConfig DiagnosisConfig::profile_defaults(std::string_view profile) {
  DiagnosisConfig c;
  if (profile == "desk") return c;
  if (profile == "full") {
    c.profile = "full";
    c.backbone = "resnet50";
    c.image_size = 512;
    c.epochs = 50;
    c.lr = 1e-4;
    return c;
  }
  throw std::invalid_argument("unknown profile '" + std::string(profile) + "' (desk|full)");
}

// --- Synthetic FFA ----------------------------------------------------------

torch::Tensor synthesize_ffa_for_diagnosis(const torch::Tensor& cfp, SynthesisNetworks& networks) {
  torch::NoGradGuard no_grad;
  networks.train(false);
  const auto batch = cfp.dim() == 3 ? cfp.unsqueeze(0) : cfp;
  const std::vector<CategoryLabel> none(static_cast<std::size_t>(batch.size(0)), CategoryLabel::None);
  auto out = networks.generator->forward(batch, none);
  return cfp.dim() == 3 ? out.squeeze(0) : out;
}

std::map<std::string, fs::path> build_synthetic_ffa_cache(const DatasetManifest& manifest,
                                                          const fs::path& checkpoint,
                                                          const fs::path& out_dir) {
  if (!fs::is_regular_file(checkpoint)) {
    throw std::runtime_error("synthesis checkpoint not found: " + checkpoint.string());
  }
  auto loaded = load_checkpoint(checkpoint);
  const auto size = loaded.header.config.image_size;
  fs::create_directories(out_dir);
  std::ofstream meta(out_dir / "metadata.csv");
  if (!meta) throw std::runtime_error("cannot write " + (out_dir / "metadata.csv").string());
  meta << "sample_id,category,category_input,checkpoint_variant\n";

  std::map<std::string, fs::path> paths;
  const auto& entries = manifest.entries;
  for (std::size_t first = 0; first < entries.size(); first += 4) {
    std::vector<torch::Tensor> cfp;
    const auto last = std::min(entries.size(), first + 4);
    for (std::size_t k = first; k < last; ++k) {
      cfp.push_back(resize_image(read_png(manifest.root / entries[k].cfp_path), size));
    }
    auto fake = synthesize_ffa_for_diagnosis(torch::stack(cfp), loaded.networks);
    for (std::size_t k = first; k < last; ++k) {
      const auto& e = entries[k];
      const auto path = out_dir / std::string(to_string(e.category)) / e.sample_id / "ffa.png";
      write_png(path, fake[static_cast<std::int64_t>(k - first)]);
      paths[e.sample_id] = path;
      meta << e.sample_id << ',' << to_string(e.category) << ",none,"
           << to_string(loaded.header.config.variant) << '\n';
    }
  }
  return paths;
}

// --- Experiment -------------------------------------------------------------

namespace {

struct DiagnosisSample {
  PairedSample pair;
  std::int64_t label = 0;
};

std::vector<DiagnosisSample> load_split(const DatasetManifest& manifest, Split split,
                                        const ModalityConfig& modality, std::int64_t size,
                                        const std::map<std::string, fs::path>& synthetic) {
  std::vector<DiagnosisSample> out;
  for (const auto& entry : manifest.select(split)) {
    DiagnosisSample s;
    s.pair = load_sample(manifest, entry, size);
    if (modality.ffa == FfaSource::Synthetic) {
      auto it = synthetic.find(entry.sample_id);
      if (it == synthetic.end()) {
        throw std::runtime_error("no synthetic FFA for sample " + entry.sample_id);
      }
      s.pair.ffa = resize_image(read_png(it->second), size);
    }
    s.label = class_index(entry.category);
    out.push_back(std::move(s));
  }
  return out;
}

std::pair<torch::Tensor, torch::Tensor> stack(const std::vector<PairedSample>& pairs) {
  std::vector<torch::Tensor> cfp, ffa;
  for (const auto& p : pairs) {
    cfp.push_back(p.cfp);
    ffa.push_back(p.ffa);
  }
  return {torch::stack(cfp), torch::stack(ffa)};
}

}  // namespace

MetricReport run_diagnosis_experiment(const DatasetManifest& manifest, const ModalityConfig& modality,
                                      const DiagnosisConfig& config, const fs::path& out_dir,
                                      const std::map<std::string, fs::path>& synthetic_ffa) {
  config.validate();
  modality.validate();
  const auto train = load_split(manifest, Split::Train, modality, config.image_size, synthetic_ffa);
  const auto val = load_split(manifest, Split::Validation, modality, config.image_size, synthetic_ffa);
  if (train.empty() || val.empty()) throw std::runtime_error("diagnosis needs train and validation samples");

  torch::manual_seed(config.seed);
  DiagnosisClassifier model(modality, config.backbone, config.image_size);
  torch::optim::Adam opt(model->parameters(),
                         torch::optim::AdamOptions(config.lr).weight_decay(config.weight_decay));
  std::mt19937_64 order_rng(config.seed * 0xD1B54A32D192ED03ULL + 5);
  std::mt19937_64 augment_rng(config.seed + 202);

  fs::create_directories(out_dir);
  std::ofstream log(out_dir / "diagnosis_losses.csv");
  log << "epoch,loss\n";
  const auto bs = static_cast<std::size_t>(config.batch_size);
  model->train(true);
  for (std::int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), order_rng);
    double total = 0.0;
    for (std::size_t first = 0; first < order.size(); first += bs) {
      std::vector<PairedSample> chunk;
      std::vector<std::int64_t> labels;
      for (std::size_t k = first; k < std::min(order.size(), first + bs); ++k) {
        const auto& s = train[order[k]];
        chunk.push_back(config.augment ? augment(s.pair, augment_rng) : s.pair);
        labels.push_back(s.label);
      }
      // BatchNorm cannot normalize a single image in training mode.
      if (chunk.size() < 2) continue;
      auto [cfp, ffa] = stack(chunk);
      auto loss = torch::nn::functional::cross_entropy(model->forward(cfp, ffa), torch::tensor(labels));
      opt.zero_grad();
      loss.backward();
      opt.step();
      total += loss.item<double>() * static_cast<double>(chunk.size());
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", total / static_cast<double>(train.size()));
    log << epoch << ',' << buf << '\n';
  }

  torch::NoGradGuard no_grad;
  model->train(false);
  std::vector<PairedSample> val_pairs;
  std::vector<std::int64_t> labels;
  for (const auto& s : val) {
    val_pairs.push_back(s.pair);
    labels.push_back(s.label);
  }
  auto [cfp, ffa] = stack(val_pairs);
  auto probs = model->predict(cfp, ffa).to(torch::kFloat64).contiguous();
  Eigen::MatrixXd scores = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      probs.data_ptr<double>(), probs.size(0), probs.size(1));

  std::ofstream pred(out_dir / "predictions.csv");
  pred << "sample_id,label";
  for (auto c : kDiseaseCategories) pred << ",p_" << to_string(c);
  pred << '\n';
  for (std::size_t i = 0; i < val.size(); ++i) {
    pred << val[i].pair.sample_id << ',' << to_string(category_from_class_index(labels[i]));
    for (Eigen::Index k = 0; k < scores.cols(); ++k) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.9g", scores(static_cast<Eigen::Index>(i), k));
      pred << ',' << buf;
    }
    pred << '\n';
  }

  const auto m = classification_metrics(scores, labels);
  MetricReport report;
  report.seed = config.seed;
  report.extractor = config.backbone;
  report.add("all", "acc", m.acc);
  report.add("all", "auc", m.auc);
  report.add("all", "sen", m.sen);
  report.add("all", "spe", m.spe);
  report.write_csv(out_dir / "diagnosis_report.csv");
  return report;
}

}  // namespace cfp2ffa
