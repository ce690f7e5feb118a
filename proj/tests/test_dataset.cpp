#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <set>

#include "cfp2ffa/dataset.hpp"
#include "cfp2ffa/image_io.hpp"
#include "cfp2ffa/phantom.hpp"
#include "test_helpers.hpp"

using namespace cfp2ffa;
using cfp2ffa::testing::read_file;
using cfp2ffa::testing::TempDir;
namespace fs = std::filesystem;

namespace {

void write_pair(const fs::path& root, const std::string& category, const std::string& id,
                bool cfp = true, bool ffa = true) {
  const auto dir = root / category / id;
  fs::create_directories(dir);
  auto img = torch::zeros({3, 8, 8});
  if (cfp) write_png(dir / "cfp.png", img);
  if (ffa) write_png(dir / "ffa.png", img);
}

DatasetManifest synthetic_manifest(const std::array<int, 5>& counts) {
  DatasetManifest m;
  int serial = 0;
  for (std::size_t c = 0; c < 5; ++c) {
    for (int i = 0; i < counts[c]; ++i) {
      ManifestEntry e;
      e.sample_id = "id" + std::to_string(serial++);
      e.category = kDiseaseCategories[c];
      m.entries.push_back(e);
    }
  }
  return m;
}

// Mean over the lesion disk of channel-averaged intensity.
double lesion_mean(const torch::Tensor& img, const torch::Tensor& mask) {
  auto gray = img.mean(0);
  return gray.masked_select(mask).mean().item<double>();
}

// 1-D nearest-centroid classifier fitted and scored on the same values.
double centroid_accuracy(const std::vector<double>& x, const std::vector<std::size_t>& y) {
  std::array<double, 5> sum{}, cnt{};
  for (std::size_t i = 0; i < x.size(); ++i) {
    sum[y[i]] += x[i];
    cnt[y[i]] += 1;
  }
  std::array<double, 5> centroid{};
  for (std::size_t c = 0; c < 5; ++c) centroid[c] = sum[c] / cnt[c];
  std::size_t correct = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < 5; ++c) {
      if (std::abs(x[i] - centroid[c]) < std::abs(x[i] - centroid[best])) best = c;
    }
    if (best == y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(x.size());
}

}  // namespace

TEST(LoadMpos, DiscoversPairs) {
  TempDir dir("mpos");
  for (int i = 0; i < 10; ++i) write_pair(dir.path(), std::string(to_string(kDiseaseCategories[i % 5])), "p" + std::to_string(i));
  auto m = load_mpos(dir.path());
  EXPECT_EQ(m.entries.size(), 10u);
  EXPECT_TRUE(m.warnings.empty());
  EXPECT_EQ(m.count(CategoryLabel::AMD), 2u);
}

TEST(LoadMpos, SkipsIncompletePairsWithWarning) {
  TempDir dir("mpos_missing");
  write_pair(dir.path(), "dr", "a");
  write_pair(dir.path(), "dr", "b", true, false);
  auto m = load_mpos(dir.path());
  EXPECT_EQ(m.entries.size(), 1u);
  ASSERT_EQ(m.warnings.size(), 1u);
  EXPECT_NE(m.warnings[0].find("ffa.png"), std::string::npos);
}

TEST(LoadMpos, Errors) {
  TempDir empty("mpos_empty");
  EXPECT_THROW(load_mpos(empty.path()), std::runtime_error);
  EXPECT_THROW(load_mpos(empty / "nope"), std::runtime_error);

  TempDir unknown("mpos_unknown");
  write_pair(unknown.path(), "glaucoma", "a");
  EXPECT_THROW(load_mpos(unknown.path()), std::runtime_error);

  TempDir broken("mpos_broken");
  write_pair(broken.path(), "csc", "a");
  std::ofstream(broken / "csc/a/ffa.png") << "not a png";
  EXPECT_THROW(load_mpos(broken.path()), std::runtime_error);
}

TEST(LoadMpos, ManifestCsvTakesPrecedence) {
  TempDir dir("mpos_csv");
  write_pair(dir.path(), "dr", "a");
  write_pair(dir.path(), "rvo", "b");
  {
    std::ofstream out(dir / "manifest.csv");
    out << "sample_id,cfp_path,ffa_path,category,split\n"
        << "a,dr/a/cfp.png,dr/a/ffa.png,amd,train\n";
  }
  auto m = load_mpos(dir.path());
  ASSERT_EQ(m.entries.size(), 1u);
  EXPECT_EQ(m.entries[0].category, CategoryLabel::AMD);
  EXPECT_EQ(m.entries[0].split, Split::Train);

  auto copy = m;
  write_manifest_csv(copy, dir / "again.csv");
  auto back = read_manifest_csv(dir / "again.csv");
  ASSERT_EQ(back.entries.size(), 1u);
  EXPECT_EQ(back.entries[0].ffa_path, fs::path("dr/a/ffa.png"));
}

TEST(Split, FullDatasetCounts) {
  auto m = split(synthetic_manifest({56, 177, 136, 135, 96}), 0.7, 1);
  EXPECT_EQ(m.entries.size(), 600u);
  EXPECT_EQ(m.count(Split::Train), 420u);
  EXPECT_EQ(m.count(Split::Validation), 180u);
  EXPECT_EQ(m.split_ratio, 0.7);
  EXPECT_EQ(m.split_seed, 1u);
  // Stratification: every category sits within one sample of its share.
  for (auto cat : kDiseaseCategories) {
    std::size_t n = 0, train = 0;
    for (const auto& e : m.entries) {
      if (e.category != cat) continue;
      ++n;
      train += e.split == Split::Train;
    }
    EXPECT_LE(std::abs(static_cast<double>(train) - 0.7 * static_cast<double>(n)), 1.0);
  }
}

TEST(Split, HalfOfTen) {
  auto m = split(synthetic_manifest({2, 2, 2, 2, 2}), 0.5, 3);
  EXPECT_EQ(m.count(Split::Train), 5u);
  EXPECT_EQ(m.count(Split::Validation), 5u);
}

TEST(Split, IsAReproduciblePartition) {
  auto base = synthetic_manifest({12, 9, 7, 20, 5});
  auto a = split(base, 0.7, 11);
  auto b = split(base, 0.7, 11);
  auto c = split(base, 0.7, 12);
  std::set<std::string> train, val;
  bool differs = false;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    EXPECT_EQ(a.entries[i].split, b.entries[i].split);
    differs |= a.entries[i].split != c.entries[i].split;
    EXPECT_NE(a.entries[i].split, Split::Unassigned);
    (a.entries[i].split == Split::Train ? train : val).insert(a.entries[i].sample_id);
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(train.size() + val.size(), base.entries.size());
  for (const auto& id : train) EXPECT_EQ(val.count(id), 0u);
}

TEST(Split, Errors) {
  auto base = synthetic_manifest({3, 3, 3, 3, 3});
  EXPECT_THROW(split(base, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(split(base, 1.0, 1), std::invalid_argument);
  EXPECT_THROW(split(synthetic_manifest({3, 1, 3, 3, 3}), 0.7, 1), std::invalid_argument);
}

TEST(Augment, FlipsArePairedInvolutions) {
  PairedSample s;
  s.cfp = torch::arange(3 * 4 * 5, torch::kFloat32).view({3, 4, 5});
  s.ffa = torch::arange(3 * 4 * 5, torch::kFloat32).view({3, 4, 5}) + 1000;
  auto same = augment(s, FlipDecision{});
  EXPECT_TRUE(torch::equal(same.cfp, s.cfp));
  EXPECT_TRUE(torch::equal(same.ffa, s.ffa));

  auto twice = augment(augment(s, FlipDecision{true, false}), FlipDecision{true, false});
  EXPECT_TRUE(torch::equal(twice.cfp, s.cfp));

  // The index map recovered from each modality must be identical.
  for (auto flips : {FlipDecision{true, false}, FlipDecision{false, true}, FlipDecision{true, true}}) {
    auto out = augment(s, flips);
    EXPECT_TRUE(torch::equal(out.cfp, out.ffa - 1000));
  }

  std::mt19937_64 rng(5);
  int h = 0;
  for (int i = 0; i < 400; ++i) {
    auto out = augment(s, rng);
    EXPECT_TRUE(torch::equal(out.cfp, out.ffa - 1000));
    h += out.cfp[0][0][0].item<float>() == 4.0f || out.cfp[0][0][0].item<float>() == 19.0f;
  }
  EXPECT_NEAR(h / 400.0, 0.5, 0.1);
}

TEST(Phantom, DeterministicFiles) {
  TempDir a("ph_a"), b("ph_b");
  PhantomConfig cfg;
  cfg.image_size = 32;
  auto ma = generate_phantom_dataset(6, 7, cfg, a.path());
  generate_phantom_dataset(6, 7, cfg, b.path());
  ASSERT_EQ(ma.entries.size(), 6u);
  for (const auto& e : ma.entries) {
    EXPECT_EQ(read_file(a.path() / e.cfp_path), read_file(b.path() / e.cfp_path));
    EXPECT_EQ(read_file(a.path() / e.ffa_path), read_file(b.path() / e.ffa_path));
  }
  EXPECT_EQ(read_file(a / "manifest.csv"), read_file(b / "manifest.csv"));
  EXPECT_EQ(read_file(a / "phantom_config.txt"), read_file(b / "phantom_config.txt"));
  EXPECT_EQ(load_mpos(a.path()).entries.size(), 6u);

  auto other = render_phantom_pair(0, 8, cfg);
  EXPECT_FALSE(torch::equal(other.cfp, render_phantom_pair(0, 7, cfg).cfp));
}

TEST(Phantom, RejectsTooFewPairs) {
  TempDir dir("ph_few");
  EXPECT_THROW(generate_phantom_dataset(4, 1, PhantomConfig{}, dir.path()), std::invalid_argument);
}

TEST(Phantom, ZeroMisalignmentAlignsVessels) {
  PhantomConfig cfg;
  cfg.image_size = 64;
  cfg.max_translation_px = 0.0;
  cfg.max_rotation_deg = 0.0;
  for (int i = 0; i < 5; ++i) {
    auto p = render_phantom_pair(i, 3, cfg);
    EXPECT_TRUE(torch::equal(p.cfp_vessels, p.ffa_vessels));
    EXPECT_GT(p.cfp_vessels.sum().item<std::int64_t>(), 0);
  }
  PhantomConfig shifted;
  shifted.image_size = 64;
  shifted.max_translation_px = 2.0;
  int differ = 0;
  for (int i = 0; i < 5; ++i) {
    auto p = render_phantom_pair(i, 3, shifted);
    differ += !torch::equal(p.cfp_vessels, p.ffa_vessels);
  }
  EXPECT_GT(differ, 0);
}

TEST(Phantom, LesionStatisticsFollowConfiguredLevels) {
  PhantomConfig cfg;
  cfg.image_size = 64;
  std::array<double, 5> sum{}, cnt{};
  std::vector<double> ffa_x, cfp_x;
  std::vector<std::size_t> y;
  for (int i = 0; i < 100; ++i) {
    auto p = render_phantom_pair(i, 21, cfg);
    const auto c = static_cast<std::size_t>(class_index(p.category));
    EXPECT_EQ(p.category, phantom_category(i));
    const double f = lesion_mean(p.ffa, p.lesion_mask);
    sum[c] += f;
    cnt[c] += 1;
    ffa_x.push_back(f);
    cfp_x.push_back(lesion_mean(p.cfp, p.lesion_mask));
    y.push_back(c);
  }
  for (std::size_t a = 0; a < 5; ++a) {
    for (std::size_t b = 0; b < 5; ++b) {
      if (cfg.lesion_level[a] <= cfg.lesion_level[b]) continue;
      // Images live in [-1, 1], so a level difference d shifts the mean by up to 2d.
      const double margin = cfg.lesion_level[a] - cfg.lesion_level[b];
      EXPECT_GT(sum[a] / cnt[a] - sum[b] / cnt[b], 0.5 * margin) << a << " vs " << b;
    }
  }
  const double ffa_acc = centroid_accuracy(ffa_x, y);
  const double cfp_acc = centroid_accuracy(cfp_x, y);
  EXPECT_GE(ffa_acc, 0.9);
  EXPECT_LE(cfp_acc, 0.6);
}

TEST(Batch, StacksSamplesInOrder) {
  std::vector<PairedSample> samples(3);
  for (int i = 0; i < 3; ++i) {
    samples[i].cfp = torch::full({3, 4, 4}, static_cast<float>(i));
    samples[i].ffa = torch::full({3, 4, 4}, static_cast<float>(-i));
    samples[i].category = kDiseaseCategories[i];
    samples[i].sample_id = "s" + std::to_string(i);
  }
  const std::vector<std::size_t> order = {2, 0};
  auto b = make_batch(samples, order);
  EXPECT_EQ(b.size(), 2);
  EXPECT_EQ(b.cfp[0][0][0][0].item<float>(), 2.0f);
  EXPECT_EQ(b.ids, (std::vector<std::string>{"s2", "s0"}));
  EXPECT_THROW(make_batch(samples, std::vector<std::size_t>{}), std::invalid_argument);
}
