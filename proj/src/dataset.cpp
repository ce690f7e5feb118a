#include "cfp2ffa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cfp2ffa/image_io.hpp"

namespace fs = std::filesystem;

namespace cfp2ffa {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "val";
    case Split::Unassigned: return "unassigned";
  }
  return "unassigned";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "val" || text == "validation") return Split::Validation;
  if (text.empty() || text == "unassigned") return Split::Unassigned;
  throw std::invalid_argument("unknown split '" + std::string(text) + "'");
}

std::vector<ManifestEntry> DatasetManifest::select(Split which) const {
  std::vector<ManifestEntry> out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
               [which](const ManifestEntry& e) { return e.split == which; });
  return out;
}

std::size_t DatasetManifest::count(Split which) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [which](const ManifestEntry& e) { return e.split == which; }));
}

std::size_t DatasetManifest::count(CategoryLabel category) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(),
                    [category](const ManifestEntry& e) { return e.category == category; }));
}

namespace {

void sort_entries(std::vector<ManifestEntry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
    if (a.category != b.category) return a.category < b.category;
    return a.sample_id < b.sample_id;
  });
}

void check_unique_ids(const std::vector<ManifestEntry>& entries) {
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.sample_id).second) {
      throw std::runtime_error("duplicate sample id '" + e.sample_id + "'");
    }
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

void check_readable(const fs::path& path) {
  try {
    png_dimensions(path);
  } catch (const std::exception& e) {
    throw std::runtime_error("unreadable image " + path.string() + ": " + e.what());
  }
}

}  // namespace

DatasetManifest read_manifest_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  DatasetManifest manifest;
  manifest.root = path.parent_path();
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample_id,", 0) != 0) {
    throw std::runtime_error("manifest " + path.string() + " lacks the expected header");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() < 4 || fields.size() > 5) {
      throw std::runtime_error("manifest line " + std::to_string(lineno) + ": expected 4 or 5 fields");
    }
    ManifestEntry e;
    e.sample_id = fields[0];
    e.cfp_path = fields[1];
    e.ffa_path = fields[2];
    e.category = parse_category(fields[3]);
    if (e.category == CategoryLabel::None) {
      throw std::runtime_error("manifest line " + std::to_string(lineno) + ": category 'none' is not a dataset label");
    }
    if (fields.size() == 5) e.split = parse_split(fields[4]);
    manifest.entries.push_back(std::move(e));
  }
  check_unique_ids(manifest.entries);
  sort_entries(manifest.entries);
  return manifest;
}

void write_manifest_csv(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << "sample_id,cfp_path,ffa_path,category,split\n";
  for (const auto& e : manifest.entries) {
    out << e.sample_id << ',' << e.cfp_path.generic_string() << ','
        << e.ffa_path.generic_string() << ',' << to_string(e.category) << ','
        << to_string(e.split) << '\n';
  }
}

DatasetManifest load_mpos(const fs::path& root) {
  if (!fs::is_directory(root)) throw std::runtime_error("dataset root " + root.string() + " is not a directory");

  DatasetManifest manifest;
  if (fs::exists(root / "manifest.csv")) {
    manifest = read_manifest_csv(root / "manifest.csv");
    manifest.root = root;
  } else {
    std::vector<fs::path> category_dirs;
    for (const auto& item : fs::directory_iterator(root)) {
      if (item.is_directory() && item.path().filename().string().front() != '.') {
        category_dirs.push_back(item.path());
      }
    }
    std::sort(category_dirs.begin(), category_dirs.end());
    manifest.root = root;
    for (const auto& dir : category_dirs) {
      const auto name = dir.filename().string();
      auto category = try_parse_category(name);
      if (!category || *category == CategoryLabel::None) {
        throw std::runtime_error("unknown category directory '" + name + "'");
      }
      std::vector<fs::path> sample_dirs;
      for (const auto& item : fs::directory_iterator(dir)) {
        if (item.is_directory()) sample_dirs.push_back(item.path());
      }
      std::sort(sample_dirs.begin(), sample_dirs.end());
      for (const auto& sdir : sample_dirs) {
        const bool has_cfp = fs::exists(sdir / "cfp.png");
        const bool has_ffa = fs::exists(sdir / "ffa.png");
        const auto id = sdir.filename().string();
        if (!has_cfp || !has_ffa) {
          manifest.warnings.push_back("skipping unpaired sample " + name + "/" + id +
                                      (has_cfp ? " (missing ffa.png)" : " (missing cfp.png)"));
          continue;
        }
        ManifestEntry e;
        e.sample_id = id;
        e.category = *category;
        e.cfp_path = fs::path(name) / id / "cfp.png";
        e.ffa_path = fs::path(name) / id / "ffa.png";
        manifest.entries.push_back(std::move(e));
      }
    }
    check_unique_ids(manifest.entries);
    sort_entries(manifest.entries);
  }

  if (manifest.entries.empty()) throw std::runtime_error("no image pairs found under " + root.string());
  for (const auto& e : manifest.entries) {
    check_readable(root / e.cfp_path);
    check_readable(root / e.ffa_path);
  }
  for (const auto& w : manifest.warnings) std::cerr << "warning: " << w << '\n';
  return manifest;
}

DatasetManifest split(const DatasetManifest& manifest, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split ratio must lie in (0, 1)");

  DatasetManifest out = manifest;
  out.split_seed = seed;
  out.split_ratio = ratio;
  sort_entries(out.entries);

  std::map<CategoryLabel, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < out.entries.size(); ++i) groups[out.entries[i].category].push_back(i);
  for (const auto& [category, members] : groups) {
    if (members.size() < 2) {
      throw std::invalid_argument("category '" + std::string(to_string(category)) +
                                  "' has fewer than two samples and cannot be stratified");
    }
  }

  // Largest-remainder apportionment of round(ratio * N) training slots.
  const auto total = static_cast<std::int64_t>(std::llround(ratio * static_cast<double>(out.entries.size())));
  struct Quota {
    CategoryLabel category;
    std::int64_t count;
    double remainder;
  };
  std::vector<Quota> quotas;
  std::int64_t assigned = 0;
  for (const auto& [category, members] : groups) {
    const double exact = ratio * static_cast<double>(members.size());
    const auto base = static_cast<std::int64_t>(std::floor(exact));
    quotas.push_back({category, base, exact - static_cast<double>(base)});
    assigned += base;
  }
  std::vector<std::size_t> by_remainder(quotas.size());
  std::iota(by_remainder.begin(), by_remainder.end(), 0);
  std::stable_sort(by_remainder.begin(), by_remainder.end(), [&](std::size_t a, std::size_t b) {
    return quotas[a].remainder > quotas[b].remainder;
  });
  for (std::size_t k = 0; assigned < total && k < by_remainder.size(); ++k, ++assigned) {
    ++quotas[by_remainder[k]].count;
  }

  std::mt19937_64 rng(seed);
  for (const auto& q : quotas) {
    auto members = groups[q.category];
    std::shuffle(members.begin(), members.end(), rng);
    const auto n = static_cast<std::int64_t>(members.size());
    const auto n_train = std::clamp<std::int64_t>(q.count, 1, n - 1);
    for (std::int64_t k = 0; k < n; ++k) {
      out.entries[members[static_cast<std::size_t>(k)]].split = k < n_train ? Split::Train : Split::Validation;
    }
  }
  return out;
}

PairedSample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry,
                         std::int64_t image_size) {
  PairedSample s;
  s.cfp = read_png(manifest.root / entry.cfp_path);
  s.ffa = read_png(manifest.root / entry.ffa_path);
  if (image_size > 0) {
    s.cfp = resize_image(s.cfp, image_size);
    s.ffa = resize_image(s.ffa, image_size);
  }
  s.category = entry.category;
  s.sample_id = entry.sample_id;
  return s;
}

std::vector<PairedSample> load_samples(const DatasetManifest& manifest, Split which,
                                       std::int64_t image_size) {
  std::vector<PairedSample> out;
  for (const auto& e : manifest.entries) {
    if (e.split == which) out.push_back(load_sample(manifest, e, image_size));
  }
  return out;
}

PairedSample augment(const PairedSample& sample, FlipDecision flips) {
  PairedSample out = sample;
  std::vector<std::int64_t> dims;
  if (flips.horizontal) dims.push_back(-1);
  if (flips.vertical) dims.push_back(-2);
  if (!dims.empty()) {
    out.cfp = sample.cfp.flip(dims);
    out.ffa = sample.ffa.flip(dims);
  }
  return out;
}

PairedSample augment(const PairedSample& sample, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  FlipDecision flips;
  flips.horizontal = coin(rng);
  flips.vertical = coin(rng);
  return augment(sample, flips);
}

Batch make_batch(const std::vector<PairedSample>& samples, std::span<const std::size_t> order) {
  Batch batch;
  std::vector<torch::Tensor> cfp;
  std::vector<torch::Tensor> ffa;
  for (auto i : order) {
    const auto& s = samples.at(i);
    cfp.push_back(s.cfp);
    ffa.push_back(s.ffa);
    batch.labels.push_back(s.category);
    batch.ids.push_back(s.sample_id);
  }
  if (cfp.empty()) throw std::invalid_argument("make_batch: empty batch");
  batch.cfp = torch::stack(cfp);
  batch.ffa = torch::stack(ffa);
  return batch;
}

}  // namespace cfp2ffa
