#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <torch/torch.h>

namespace cfp2ffa {

class FeatureExtractor;

enum class FeatureSource { Real, Synthetic };

/// N x D feature matrix from one extractor.
struct FeatureSet {
  Eigen::MatrixXd features;
  std::string extractor;
  FeatureSource source = FeatureSource::Real;

  static FeatureSet from_tensor(const torch::Tensor& features, std::string extractor,
                                FeatureSource source);
};

/// Gaussian moments; covariance uses the (N - 1) normalization.
struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

GaussianMoments feature_moments(const FeatureSet& set);

/// Squared Frechet distance between Gaussians,
/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}). The trace of the
/// square root is taken as Tr((S_a^{1/2} S_b S_a^{1/2})^{1/2}) with negative
/// eigenvalues clamped at zero.
double frechet_distance(const GaussianMoments& a, const GaussianMoments& b);

/// FID between two feature sets. Throws on dimension mismatch, N < 2,
/// non-finite features or a non-finite result.
double fid(const FeatureSet& a, const FeatureSet& b);

/// Unbiased squared MMD with k(x, y) = (x.y / D + 1)^3 over the full sets.
double kid(const FeatureSet& a, const FeatureSet& b);

/// Mean of unbiased MMD estimates over random subsets of `subset_size` rows.
double kid_subsampled(const FeatureSet& a, const FeatureSet& b, std::int64_t num_subsets,
                      std::int64_t subset_size, std::mt19937_64& rng);

/// Sum over layers of w_l * mean_hw sum_c (a_hat - b_hat)^2, where hats are
/// unit-normalized along channels (x / (|x| + 1e-10)). Images [C, H, W] or
/// [B, C, H, W]; the batch result is the mean over images.
double lpips(const torch::Tensor& img_a, const torch::Tensor& img_b, FeatureExtractor& extractor);

/// Per-image distances, [B].
torch::Tensor lpips_per_image(const torch::Tensor& img_a, const torch::Tensor& img_b,
                              FeatureExtractor& extractor);

/// ACC/SEN/SPE/AUC in percent. SEN, SPE and AUC are one-vs-rest per class,
/// macro-averaged over classes that have both positives and negatives.
struct ClassificationScores {
  double acc = 0.0;
  double auc = 0.0;
  double sen = 0.0;
  double spe = 0.0;
};

/// `scores` is N x C (rows are probability vectors, argmax = prediction).
/// Throws on empty input, label out of range, or when every label is the
/// same class (AUC undefined).
ClassificationScores classification_metrics(const Eigen::MatrixXd& scores,
                                            const std::vector<std::int64_t>& labels);

/// Mann-Whitney AUC of `scores` for binary labels (ties count 1/2).
double binary_auc(const std::vector<double>& scores, const std::vector<bool>& positive);

// ---------------------------------------------------------------------------
// Metric reports
// ---------------------------------------------------------------------------

struct MetricRow {
  std::string category;
  std::string metric;
  double value = 0.0;
};

/// Metric values plus run metadata. CSV columns, in order:
/// category,metric,value,seed,extractor
struct MetricReport {
  std::vector<MetricRow> rows;
  std::uint64_t seed = 0;
  std::string extractor;
  std::string split = "val";

  void add(std::string category, std::string metric, double value);
  std::optional<double> find(const std::string& category, const std::string& metric) const;
  void write_csv(const std::filesystem::path& path) const;
  static MetricReport read_csv(const std::filesystem::path& path);
};

}  // namespace cfp2ffa
