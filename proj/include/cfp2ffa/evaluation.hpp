#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cfp2ffa/checkpoint.hpp"
#include "cfp2ffa/dataset.hpp"
#include "cfp2ffa/feature_extractor.hpp"
#include "cfp2ffa/metrics.hpp"

namespace cfp2ffa {

/// Real and generated FFA images for one set of samples, [N, 3, H, W].
struct SynthesisOutputs {
  torch::Tensor real;
  torch::Tensor fake;
  std::vector<CategoryLabel> labels;
};

/// Runs the generator in eval mode over `samples` with the variant's
/// category input.
SynthesisOutputs synthesize(SynthesisNetworks& networks, const TrainConfig& config,
                            const std::vector<PairedSample>& samples);

/// FID, KID and LPIPS between real and generated FFA of every disease
/// category: 5 rows per metric (fid, kid, lpips), in category order.
MetricReport synthesis_report(const SynthesisOutputs& outputs, FeatureExtractor& extractor,
                              std::uint64_t seed);

/// Loads `checkpoint`, generates FFA for the validation split of `manifest`
/// at the checkpoint resolution and scores it.
MetricReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                 const DatasetManifest& manifest, FeatureExtractor& extractor,
                                 std::uint64_t seed);

/// Mean of one metric over the five category rows.
double mean_over_categories(const MetricReport& report, const std::string& metric);

}  // namespace cfp2ffa
