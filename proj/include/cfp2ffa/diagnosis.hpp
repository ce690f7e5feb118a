#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "cfp2ffa/checkpoint.hpp"
#include "cfp2ffa/config.hpp"
#include "cfp2ffa/dataset.hpp"
#include "cfp2ffa/metrics.hpp"

namespace cfp2ffa {

enum class FfaSource { None, Real, Synthetic };

/// Which modalities feed the classifier.
struct ModalityConfig {
  bool use_cfp = true;
  FfaSource ffa = FfaSource::None;
  std::filesystem::path checkpoint;  // synthesis model, for FfaSource::Synthetic

  /// "none", "real" or "synthetic:<checkpoint>".
  static ModalityConfig from_ffa_spec(std::string_view spec);
  std::string ffa_spec() const;
  /// Throws when no modality is enabled or the checkpoint is missing.
  void validate() const;
};

/// Residual feature extractor. "desk": 3x3 stem and one basic block per
/// stage at widths 16/32/64/128. "resnet50": the standard bottleneck layout
/// [3, 4, 6, 3] with 2048 output features.
class ResidualBackboneImpl : public torch::nn::Module {
 public:
  ResidualBackboneImpl(std::string profile, std::int64_t input_size);

  /// [B, 3, S, S] -> [B, feature_dim]; throws unless S == input_size.
  torch::Tensor forward(const torch::Tensor& x);

  std::int64_t feature_dim() const { return feature_dim_; }
  std::int64_t input_size() const { return input_size_; }
  const std::string& profile() const { return profile_; }

 private:
  std::string profile_;
  std::int64_t input_size_;
  std::int64_t feature_dim_ = 0;
  torch::nn::Sequential stem{nullptr};
  std::vector<torch::nn::Sequential> stages_;
};
TORCH_MODULE(ResidualBackbone);

torch::Tensor extract_features(const torch::Tensor& img, ResidualBackbone& backbone);

/// softmax(head(concat(features))). Throws when the concatenated width does
/// not match the head.
torch::Tensor classify(const std::vector<torch::Tensor>& features, torch::nn::Linear& head);

inline constexpr std::int64_t kNumDiagnosisClasses = 5;

/// One backbone per enabled modality (no weight sharing) and a linear head
/// over the concatenated feature vectors.
class DiagnosisClassifierImpl : public torch::nn::Module {
 public:
  DiagnosisClassifierImpl(ModalityConfig modality, const std::string& profile,
                          std::int64_t input_size);

  /// Logits [B, 5]. Tensors of disabled modalities are ignored.
  torch::Tensor forward(const torch::Tensor& cfp, const torch::Tensor& ffa);
  /// Class probabilities [B, 5].
  torch::Tensor predict(const torch::Tensor& cfp, const torch::Tensor& ffa);

  ResidualBackbone cfp_backbone{nullptr};
  ResidualBackbone ffa_backbone{nullptr};
  torch::nn::Linear head{nullptr};

 private:
  std::vector<torch::Tensor> features(const torch::Tensor& cfp, const torch::Tensor& ffa);
  ModalityConfig modality_;
};
TORCH_MODULE(DiagnosisClassifier);

struct DiagnosisConfig {
  std::string profile = "desk";
  std::string backbone = "desk";
  std::int64_t epochs = 30;
  std::int64_t batch_size = 8;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::int64_t image_size = 128;
  std::uint64_t seed = 1;
  double split_ratio = 0.7;
  bool augment = true;

  void validate() const;
  KeyValueConfig to_config() const;
  static DiagnosisConfig from_config(const KeyValueConfig& config, DiagnosisConfig base);
  /// "desk" (small backbone, 128 px) or "full" (resnet50, 512 px, 50 epochs).
  static DiagnosisConfig profile_defaults(std::string_view profile);
};

/// Generator output for a CFP batch with every category input set to none.
torch::Tensor synthesize_ffa_for_diagnosis(const torch::Tensor& cfp, SynthesisNetworks& networks);

/// Writes `<out_dir>/<category>/<sample_id>/ffa.png` for every entry of
/// `manifest` plus a metadata.csv recording the category input used
/// ("none"). Returns sample_id -> image path.
std::map<std::string, std::filesystem::path> build_synthetic_ffa_cache(
    const DatasetManifest& manifest, const std::filesystem::path& checkpoint,
    const std::filesystem::path& out_dir);

/// Trains the classifier on the train split and scores the validation split.
/// Writes diagnosis_report.csv and predictions.csv under `out_dir`.
/// `synthetic_ffa` supplies the FFA images for FfaSource::Synthetic.
MetricReport run_diagnosis_experiment(const DatasetManifest& manifest, const ModalityConfig& modality,
                                      const DiagnosisConfig& config,
                                      const std::filesystem::path& out_dir,
                                      const std::map<std::string, std::filesystem::path>& synthetic_ffa = {});

}  // namespace cfp2ffa
