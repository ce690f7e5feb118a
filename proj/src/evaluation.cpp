#include "cfp2ffa/evaluation.hpp"

#include <stdexcept>

#include "cfp2ffa/trainer.hpp"

namespace cfp2ffa {

SynthesisOutputs synthesize(SynthesisNetworks& networks, const TrainConfig& config,
                            const std::vector<PairedSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("synthesize: no samples");
  torch::NoGradGuard no_grad;
  networks.train(false);
  std::vector<torch::Tensor> real, fake;
  SynthesisOutputs out;
  for (std::size_t first = 0; first < samples.size(); first += 4) {
    std::vector<std::size_t> idx;
    for (std::size_t k = first; k < std::min(samples.size(), first + 4); ++k) idx.push_back(k);
    auto batch = make_batch(samples, idx);
    fake.push_back(networks.generator->forward(batch.cfp, category_input(config, batch.labels)));
    real.push_back(batch.ffa);
    out.labels.insert(out.labels.end(), batch.labels.begin(), batch.labels.end());
  }
  out.real = torch::cat(real);
  out.fake = torch::cat(fake);
  return out;
}

MetricReport synthesis_report(const SynthesisOutputs& outputs, FeatureExtractor& extractor,
                              std::uint64_t seed) {
  MetricReport report;
  report.seed = seed;
  report.extractor = extractor.id();
  std::vector<std::string> categories;
  std::vector<double> fids, kids, lpipses;
  for (auto category : kDiseaseCategories) {
    std::vector<std::int64_t> idx;
    for (std::size_t i = 0; i < outputs.labels.size(); ++i) {
      if (outputs.labels[i] == category) idx.push_back(static_cast<std::int64_t>(i));
    }
    const std::string name(to_string(category));
    if (idx.size() < 2) {
      throw std::runtime_error("category " + name + " has fewer than two validation samples");
    }
    auto sel = torch::tensor(idx, torch::kInt64);
    auto real = outputs.real.index_select(0, sel);
    auto fake = outputs.fake.index_select(0, sel);
    auto real_set = FeatureSet::from_tensor(extractor.embed(real), extractor.id(), FeatureSource::Real);
    auto fake_set = FeatureSet::from_tensor(extractor.embed(fake), extractor.id(), FeatureSource::Synthetic);
    categories.push_back(name);
    fids.push_back(fid(real_set, fake_set));
    kids.push_back(kid(real_set, fake_set));
    lpipses.push_back(lpips(real, fake, extractor));
  }
  for (std::size_t i = 0; i < categories.size(); ++i) report.add(categories[i], "fid", fids[i]);
  for (std::size_t i = 0; i < categories.size(); ++i) report.add(categories[i], "kid", kids[i]);
  for (std::size_t i = 0; i < categories.size(); ++i) report.add(categories[i], "lpips", lpipses[i]);
  return report;
}

MetricReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                 const DatasetManifest& manifest, FeatureExtractor& extractor,
                                 std::uint64_t seed) {
  auto loaded = load_checkpoint(checkpoint);
  const auto samples = load_samples(manifest, Split::Validation, loaded.header.config.image_size);
  const auto outputs = synthesize(loaded.networks, loaded.header.config, samples);
  return synthesis_report(outputs, extractor, seed);
}

double mean_over_categories(const MetricReport& report, const std::string& metric) {
  double total = 0.0;
  int count = 0;
  for (const auto& row : report.rows) {
    if (row.metric != metric) continue;
    total += row.value;
    ++count;
  }
  if (count == 0) throw std::invalid_argument("report has no '" + metric + "' rows");
  return total / count;
}

}  // namespace cfp2ffa
