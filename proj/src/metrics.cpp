#include "cfp2ffa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "cfp2ffa/feature_extractor.hpp"

namespace cfp2ffa {

FeatureSet FeatureSet::from_tensor(const torch::Tensor& features, std::string extractor,
                                   FeatureSource source) {
  auto t = features.detach().to(torch::kCPU).to(torch::kFloat64).contiguous();
  if (t.dim() != 2) throw std::invalid_argument("feature tensor must be [N, D]");
  FeatureSet set;
  set.features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      t.data_ptr<double>(), t.size(0), t.size(1));
  set.extractor = std::move(extractor);
  set.source = source;
  return set;
}

namespace {

void check_pair(const FeatureSet& a, const FeatureSet& b, Eigen::Index min_rows, const char* who) {
  if (a.features.cols() != b.features.cols()) {
    throw std::invalid_argument(std::string(who) + ": feature dimensions differ");
  }
  if (a.features.rows() < min_rows || b.features.rows() < min_rows) {
    throw std::invalid_argument(std::string(who) + ": needs at least " + std::to_string(min_rows) +
                                " samples per set");
  }
  if (!a.features.allFinite() || !b.features.allFinite()) {
    throw std::invalid_argument(std::string(who) + ": non-finite features");
  }
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
  if (eig.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

double poly_kernel_mmd(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const double d = static_cast<double>(x.cols());
  auto kernel = [d](const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
    Eigen::MatrixXd k = (p * q.transpose()) / d;
    k.array() += 1.0;
    return Eigen::MatrixXd(k.array().cube());
  };
  const double m = static_cast<double>(x.rows());
  const double n = static_cast<double>(y.rows());
  const Eigen::MatrixXd kxx = kernel(x, x);
  const Eigen::MatrixXd kyy = kernel(y, y);
  const Eigen::MatrixXd kxy = kernel(x, y);
  const double sxx = kxx.sum() - kxx.trace();
  const double syy = kyy.sum() - kyy.trace();
  return sxx / (m * (m - 1.0)) + syy / (n * (n - 1.0)) - 2.0 * kxy.sum() / (m * n);
}

}  // namespace

GaussianMoments feature_moments(const FeatureSet& set) {
  const auto n = set.features.rows();
  if (n < 2) throw std::invalid_argument("covariance needs at least two samples");
  GaussianMoments m;
  m.mean = set.features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = set.features.rowwise() - m.mean.transpose();
  m.covariance = centered.transpose() * centered / static_cast<double>(n - 1);
  return m;
}

double frechet_distance(const GaussianMoments& a, const GaussianMoments& b) {
  if (a.mean.size() != b.mean.size()) throw std::invalid_argument("fid: feature dimensions differ");
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const Eigen::MatrixXd root_a = psd_sqrt(a.covariance);
  const Eigen::MatrixXd inner = root_a * b.covariance * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (inner + inner.transpose()),
                                                     Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw std::runtime_error("fid: eigendecomposition failed");
  const double trace_root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = mean_term + a.covariance.trace() + b.covariance.trace() - 2.0 * trace_root;
  if (!std::isfinite(value)) throw std::runtime_error("fid: non-finite result");
  return value;
}

double fid(const FeatureSet& a, const FeatureSet& b) {
  check_pair(a, b, 2, "fid");
  return frechet_distance(feature_moments(a), feature_moments(b));
}

double kid(const FeatureSet& a, const FeatureSet& b) {
  check_pair(a, b, 2, "kid");
  return poly_kernel_mmd(a.features, b.features);
}

double kid_subsampled(const FeatureSet& a, const FeatureSet& b, std::int64_t num_subsets,
                      std::int64_t subset_size, std::mt19937_64& rng) {
  check_pair(a, b, 2, "kid");
  if (num_subsets < 1 || subset_size < 2) throw std::invalid_argument("kid: invalid subsampling");
  const auto m = std::min<Eigen::Index>(subset_size, std::min(a.features.rows(), b.features.rows()));
  auto draw = [&](const Eigen::MatrixXd& x) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    Eigen::MatrixXd out(m, x.cols());
    for (Eigen::Index i = 0; i < m; ++i) out.row(i) = x.row(idx[static_cast<std::size_t>(i)]);
    return out;
  };
  double total = 0.0;
  for (std::int64_t s = 0; s < num_subsets; ++s) total += poly_kernel_mmd(draw(a.features), draw(b.features));
  return total / static_cast<double>(num_subsets);
}

torch::Tensor lpips_per_image(const torch::Tensor& img_a, const torch::Tensor& img_b,
                              FeatureExtractor& extractor) {
  if (!img_a.sizes().equals(img_b.sizes())) throw std::invalid_argument("lpips: image shapes differ");
  torch::NoGradGuard no_grad;
  auto a = img_a.dim() == 3 ? img_a.unsqueeze(0) : img_a;
  auto b = img_b.dim() == 3 ? img_b.unsqueeze(0) : img_b;
  const auto maps_a = extractor.feature_maps(a);
  const auto maps_b = extractor.feature_maps(b);
  const auto weights = extractor.layer_weights();
  if (maps_a.size() != weights.size() || maps_b.size() != weights.size()) {
    throw std::logic_error("lpips: extractor layer count does not match its weights");
  }
  auto normalize = [](const torch::Tensor& x) {
    auto d = x.to(torch::kFloat64);
    return d / (d.pow(2).sum(1, /*keepdim=*/true).sqrt() + 1e-10);
  };
  auto total = torch::zeros({a.size(0)}, torch::kFloat64);
  for (std::size_t l = 0; l < weights.size(); ++l) {
    auto diff = (normalize(maps_a[l]) - normalize(maps_b[l])).pow(2).sum(1);
    total = total + weights[l] * diff.mean({1, 2});
  }
  return total;
}

double lpips(const torch::Tensor& img_a, const torch::Tensor& img_b, FeatureExtractor& extractor) {
  return lpips_per_image(img_a, img_b, extractor).mean().item<double>();
}

double binary_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw std::invalid_argument("auc: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });
  // Rank-sum with average ranks over ties.
  double rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        rank_sum += avg_rank;
        n_pos += 1.0;
      }
    }
    i = j;
  }
  const double n_neg = static_cast<double>(scores.size()) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) throw std::invalid_argument("auc undefined without both classes");
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

ClassificationScores classification_metrics(const Eigen::MatrixXd& scores,
                                            const std::vector<std::int64_t>& labels) {
  const auto n = scores.rows();
  const auto c = scores.cols();
  if (n == 0 || labels.empty()) throw std::invalid_argument("classification metrics: empty input");
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw std::invalid_argument("classification metrics: one label per score row required");
  }
  for (auto l : labels) {
    if (l < 0 || l >= c) throw std::invalid_argument("classification metrics: label out of range");
  }
  if (!scores.allFinite()) throw std::invalid_argument("classification metrics: non-finite scores");

  std::vector<std::int64_t> predicted(static_cast<std::size_t>(n));
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    scores.row(i).maxCoeff(&best);
    predicted[static_cast<std::size_t>(i)] = best;
    if (best == labels[static_cast<std::size_t>(i)]) ++correct;
  }

  ClassificationScores out;
  out.acc = 100.0 * static_cast<double>(correct) / static_cast<double>(n);
  double sen = 0.0, spe = 0.0, auc = 0.0;
  int classes = 0;
  for (Eigen::Index k = 0; k < c; ++k) {
    double tp = 0, fn = 0, tn = 0, fp = 0;
    std::vector<double> column(static_cast<std::size_t>(n));
    std::vector<bool> positive(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      const bool is_pos = labels[idx] == k;
      const bool said_pos = predicted[idx] == k;
      column[idx] = scores(i, k);
      positive[idx] = is_pos;
      if (is_pos) (said_pos ? tp : fn) += 1;
      else (said_pos ? fp : tn) += 1;
    }
    if (tp + fn == 0 || tn + fp == 0) continue;
    sen += tp / (tp + fn);
    spe += tn / (tn + fp);
    auc += binary_auc(column, positive);
    ++classes;
  }
  if (classes == 0) throw std::invalid_argument("classification metrics: AUC undefined for single-class labels");
  out.sen = 100.0 * sen / classes;
  out.spe = 100.0 * spe / classes;
  out.auc = 100.0 * auc / classes;
  return out;
}

// --- MetricReport -------------------------------------------------------------

void MetricReport::add(std::string category, std::string metric, double value) {
  if (!std::isfinite(value)) throw std::invalid_argument("metric " + metric + " is not finite");
  rows.push_back({std::move(category), std::move(metric), value});
}

std::optional<double> MetricReport::find(const std::string& category, const std::string& metric) const {
  for (const auto& r : rows) {
    if (r.category == category && r.metric == metric) return r.value;
  }
  return std::nullopt;
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "category,metric,value,seed,extractor\n";
  char buf[48];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.9g", r.value);
    out << r.category << ',' << r.metric << ',' << buf << ',' << seed << ',' << extractor << '\n';
  }
}

MetricReport MetricReport::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "category,metric,value,seed,extractor") {
    throw std::runtime_error(path.string() + ": unexpected metric report header");
  }
  MetricReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 5) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    report.rows.push_back({f[0], f[1], std::stod(f[2])});
    report.seed = std::stoull(f[3]);
    report.extractor = f[4];
  }
  return report;
}

}  // namespace cfp2ffa
