#include "cfp2ffa/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <vector>

#include "cfp2ffa/image_io.hpp"

namespace fs = std::filesystem;

namespace cfp2ffa {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kFundusRadius = 0.47;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct Segment {
  Vec2 a;
  Vec2 b;
  double width;
};

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

double segment_distance(const Segment& s, Vec2 p) {
  const double vx = s.b.x - s.a.x;
  const double vy = s.b.y - s.a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - s.a.x) * vx + (p.y - s.a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (s.a.x + t * vx);
  const double dy = p.y - (s.a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::int64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), 0x9e3779b9u};
    engine_.seed(seq);
  }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double sigma) { return std::normal_distribution<double>(0.0, sigma)(engine_); }

 private:
  std::mt19937_64 engine_;
};

void grow_branch(std::vector<Segment>& out, Vec2 start, double angle, double length, double width,
                 std::int64_t depth, Rng& rng) {
  if (depth <= 0) return;
  // Each branch is drawn as a slightly curving polyline of three pieces.
  Vec2 p = start;
  double heading = angle;
  for (int k = 0; k < 3; ++k) {
    heading += rng.uniform(-0.25, 0.25);
    Vec2 q{p.x + std::cos(heading) * length / 3.0, p.y + std::sin(heading) * length / 3.0};
    out.push_back({p, q, width});
    p = q;
  }
  const double spread = rng.uniform(0.35, 0.6);
  grow_branch(out, p, heading + spread, length * 0.78, width * 0.72, depth - 1, rng);
  grow_branch(out, p, heading - spread, length * 0.78, width * 0.72, depth - 1, rng);
}

struct Scene {
  std::vector<Segment> vessels;
  Vec2 disc;
  Vec2 macula;
  double disc_radius = 0.07;
  std::vector<Vec2> dots;  // DR microaneurysm centers
  double stripe_phase = 0.0;
  CategoryLabel category = CategoryLabel::Normal;
};

Scene build_scene(CategoryLabel category, const PhantomConfig& cfg, Rng& rng) {
  Scene scene;
  scene.category = category;
  scene.disc = {0.25 + rng.uniform(-0.03, 0.03), 0.5 + rng.uniform(-0.04, 0.04)};
  scene.macula = {0.62 + rng.uniform(-0.03, 0.03), 0.5 + rng.uniform(-0.03, 0.03)};
  const double base = rng.uniform(0.0, 2.0 * kPi);
  for (std::int64_t k = 0; k < cfg.vessel_trunks; ++k) {
    const double angle = base + 2.0 * kPi * static_cast<double>(k) /
                                    static_cast<double>(std::max<std::int64_t>(cfg.vessel_trunks, 1)) +
                         rng.uniform(-0.3, 0.3);
    grow_branch(scene.vessels, scene.disc, angle, cfg.vessel_length, cfg.vessel_width,
                cfg.vessel_depth, rng);
  }
  if (category == CategoryLabel::DR) {
    for (int k = 0; k < 14; ++k) {
      const double r = cfg.lesion_radius * std::sqrt(rng.uniform(0.0, 1.0)) * 0.9;
      const double a = rng.uniform(0.0, 2.0 * kPi);
      scene.dots.push_back({scene.macula.x + r * std::cos(a), scene.macula.y + r * std::sin(a)});
    }
  }
  scene.stripe_phase = rng.uniform(0.0, 2.0 * kPi);
  return scene;
}

double lesion_level(const PhantomConfig& cfg, CategoryLabel category) {
  return cfg.lesion_level[static_cast<std::size_t>(class_index(category))];
}

// Category texture in [0, 1] inside the lesion disk, 0 outside.
double lesion_texture(const Scene& scene, const PhantomConfig& cfg, Vec2 p) {
  const double dx = p.x - scene.macula.x;
  const double dy = p.y - scene.macula.y;
  const double r = std::sqrt(dx * dx + dy * dy);
  const double R = cfg.lesion_radius;
  const double region = 1.0 - smoothstep(0.85 * R, R, r);
  if (region <= 0.0) return 0.0;
  double pattern = 0.0;
  switch (scene.category) {
    case CategoryLabel::DR: {
      const double dot_r = 0.014;
      for (const auto& d : scene.dots) {
        const double ex = p.x - d.x;
        const double ey = p.y - d.y;
        pattern = std::max(pattern, std::exp(-(ex * ex + ey * ey) / (dot_r * dot_r)));
      }
      break;
    }
    case CategoryLabel::RVO:
      pattern = 0.5 + 0.5 * std::cos(6.0 * std::atan2(dy, dx) + scene.stripe_phase);
      break;
    case CategoryLabel::AMD: pattern = std::max(0.0, 1.0 - r / R); break;
    case CategoryLabel::CSC: {
      const double ring = (r - 0.5 * R) / (0.15 * R);
      pattern = std::exp(-ring * ring);
      break;
    }
    default: break;
  }
  return region * (0.6 + 0.4 * pattern);
}

double vessel_field(const Scene& scene, Vec2 p) {
  double v = 0.0;
  for (const auto& s : scene.vessels) {
    const double d = segment_distance(s, p);
    if (d > 3.0 * s.width) continue;
    v = std::max(v, std::exp(-(d * d) / (s.width * s.width)));
  }
  // The macula is avascular.
  const double mx = p.x - scene.macula.x;
  const double my = p.y - scene.macula.y;
  return v * smoothstep(0.08, 0.2, std::sqrt(mx * mx + my * my));
}

double disc_field(const Scene& scene, Vec2 p) {
  const double dx = p.x - scene.disc.x;
  const double dy = p.y - scene.disc.y;
  return 1.0 - smoothstep(0.7 * scene.disc_radius, scene.disc_radius, std::sqrt(dx * dx + dy * dy));
}

double fundus_mask(Vec2 p) {
  const double dx = p.x - 0.5;
  const double dy = p.y - 0.5;
  return 1.0 - smoothstep(kFundusRadius - 0.01, kFundusRadius, std::sqrt(dx * dx + dy * dy));
}

torch::Tensor to_tensor(const std::vector<float>& data, std::int64_t channels, std::int64_t n) {
  return torch::from_blob(const_cast<float*>(data.data()), {channels, n, n}, torch::kFloat32).clone();
}

}  // namespace

CategoryLabel phantom_category(std::int64_t index) {
  return kDiseaseCategories[static_cast<std::size_t>(index % static_cast<std::int64_t>(kNumDiseaseClasses))];
}

PhantomPair render_phantom_pair(std::int64_t index, std::uint64_t seed, const PhantomConfig& cfg) {
  if (cfg.image_size < 8) throw std::invalid_argument("phantom image_size must be >= 8");
  Rng rng(seed, index);
  const auto category = phantom_category(index);
  const Scene scene = build_scene(category, cfg, rng);
  const double level = lesion_level(cfg, category);

  // FFA scene coordinates: q = Rot(theta) (p - c) + c + shift.
  const double n = static_cast<double>(cfg.image_size);
  const double theta = rng.uniform(-1.0, 1.0) * cfg.max_rotation_deg * kPi / 180.0;
  const double shift_x = rng.uniform(-1.0, 1.0) * cfg.max_translation_px / n;
  const double shift_y = rng.uniform(-1.0, 1.0) * cfg.max_translation_px / n;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);

  const double cfp_gain = 1.0 + rng.uniform(-1.0, 1.0) * cfg.cfp_brightness_jitter;
  const double cfp_hue = rng.uniform(-0.05, 0.05);
  const double ffa_gain = 1.0 + rng.uniform(-1.0, 1.0) * cfg.ffa_brightness_jitter;
  // Low-frequency illumination blotch in the CFP.
  const Vec2 blotch{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
  const double blotch_amp = rng.uniform(-0.08, 0.08);

  const auto N = cfg.image_size;
  const auto plane = static_cast<std::size_t>(N * N);
  std::vector<float> cfp(3 * plane);
  std::vector<float> ffa(3 * plane);
  std::vector<std::uint8_t> cfp_vessel(plane);
  std::vector<std::uint8_t> ffa_vessel(plane);
  std::vector<std::uint8_t> lesion(plane);

  for (std::int64_t i = 0; i < N; ++i) {
    for (std::int64_t j = 0; j < N; ++j) {
      const Vec2 p{(static_cast<double>(j) + 0.5) / n, (static_cast<double>(i) + 0.5) / n};
      const bool aligned = theta == 0.0 && shift_x == 0.0 && shift_y == 0.0;
      const Vec2 q = aligned ? p
                             : Vec2{cos_t * (p.x - 0.5) - sin_t * (p.y - 0.5) + 0.5 + shift_x,
                                    sin_t * (p.x - 0.5) + cos_t * (p.y - 0.5) + 0.5 + shift_y};
      const auto k = static_cast<std::size_t>(i * N + j);

      // CFP: orange-red fundus, dark low-contrast vessels, bright disc,
      // faint lesion tint.
      {
        const double v = vessel_field(scene, p);
        const double d = disc_field(scene, p);
        const double les = lesion_texture(scene, cfg, p) * level * cfg.cfp_lesion_contrast;
        const double bx = p.x - blotch.x;
        const double by = p.y - blotch.y;
        const double illum = 1.0 + blotch_amp * std::exp(-(bx * bx + by * by) / 0.04);
        const double rx = p.x - 0.5;
        const double ry = p.y - 0.5;
        const double vignette = 1.0 - 0.6 * (rx * rx + ry * ry) / (kFundusRadius * kFundusRadius);
        const double shade = cfp_gain * illum * vignette * (1.0 - cfg.cfp_vessel_contrast * v);
        const double mask = fundus_mask(p);
        double rgb[3] = {(0.78 + cfp_hue) * shade + 0.2 * d + les,
                         0.38 * shade + 0.45 * d + 0.8 * les,
                         0.16 * shade + 0.3 * d + 0.3 * les};
        for (int c = 0; c < 3; ++c) {
          const double value = std::clamp(rgb[c] * mask + rng.normal(cfg.pixel_noise), 0.0, 1.0);
          cfp[c * plane + k] = static_cast<float>(value * 2.0 - 1.0);
        }
        cfp_vessel[k] = v > 0.5 ? 1 : 0;
      }

      // FFA: gray-scale, bright vessels and disc, category lesion texture.
      {
        const double v = vessel_field(scene, q);
        const double d = disc_field(scene, q);
        const double les = lesion_texture(scene, cfg, q);
        const double gray = ffa_gain * (cfg.ffa_background + cfg.ffa_vessel_gain * v + 0.5 * d) +
                            level * les;
        const double value =
            std::clamp(gray * fundus_mask(q) + rng.normal(cfg.pixel_noise), 0.0, 1.0);
        for (int c = 0; c < 3; ++c) ffa[c * plane + k] = static_cast<float>(value * 2.0 - 1.0);
        ffa_vessel[k] = v > 0.5 ? 1 : 0;
        const double mx = q.x - scene.macula.x;
        const double my = q.y - scene.macula.y;
        lesion[k] = std::sqrt(mx * mx + my * my) < 0.8 * cfg.lesion_radius ? 1 : 0;
      }
    }
  }

  auto mask_tensor = [N](const std::vector<std::uint8_t>& m) {
    return torch::from_blob(const_cast<std::uint8_t*>(m.data()), {N, N}, torch::kUInt8)
        .clone()
        .to(torch::kBool);
  };

  PhantomPair pair;
  pair.cfp = to_tensor(cfp, 3, N);
  pair.ffa = to_tensor(ffa, 3, N);
  pair.cfp_vessels = mask_tensor(cfp_vessel);
  pair.ffa_vessels = mask_tensor(ffa_vessel);
  pair.lesion_mask = mask_tensor(lesion);
  pair.category = category;
  char id[32];
  std::snprintf(id, sizeof(id), "phantom_%04lld", static_cast<long long>(index));
  pair.sample_id = id;
  return pair;
}

DatasetManifest generate_phantom_dataset(std::int64_t n, std::uint64_t seed,
                                         const PhantomConfig& config, const fs::path& out) {
  if (n < 5) throw std::invalid_argument("phantom dataset needs n >= 5 (one pair per category)");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) {
    throw std::runtime_error("cannot create phantom output directory " + out.string());
  }

  DatasetManifest manifest;
  manifest.root = out;
  for (std::int64_t i = 0; i < n; ++i) {
    auto pair = render_phantom_pair(i, seed, config);
    const fs::path rel = fs::path(std::string(to_string(pair.category))) / pair.sample_id;
    write_png(out / rel / "cfp.png", pair.cfp);
    write_png(out / rel / "ffa.png", pair.ffa);
    ManifestEntry e;
    e.sample_id = pair.sample_id;
    e.cfp_path = rel / "cfp.png";
    e.ffa_path = rel / "ffa.png";
    e.category = pair.category;
    manifest.entries.push_back(std::move(e));
  }
  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              if (a.category != b.category) return a.category < b.category;
              return a.sample_id < b.sample_id;
            });
  write_manifest_csv(manifest, out / "manifest.csv");
  auto cfg = config.to_config();
  cfg.set("n", n);
  cfg.set("seed", static_cast<std::int64_t>(seed));
  cfg.save(out / "phantom_config.txt", "procedural phantom parameters used to render this directory");
  return manifest;
}

KeyValueConfig PhantomConfig::to_config() const {
  KeyValueConfig c;
  c.set("image_size", image_size);
  c.set("max_translation_px", max_translation_px);
  c.set("max_rotation_deg", max_rotation_deg);
  c.set("vessel_trunks", vessel_trunks);
  c.set("vessel_depth", vessel_depth);
  c.set("vessel_length", vessel_length);
  c.set("vessel_width", vessel_width);
  c.set("cfp_vessel_contrast", cfp_vessel_contrast);
  c.set("cfp_brightness_jitter", cfp_brightness_jitter);
  c.set("cfp_lesion_contrast", cfp_lesion_contrast);
  c.set("ffa_background", ffa_background);
  c.set("ffa_vessel_gain", ffa_vessel_gain);
  c.set("ffa_brightness_jitter", ffa_brightness_jitter);
  c.set("lesion_radius", lesion_radius);
  for (std::size_t k = 0; k < lesion_level.size(); ++k) {
    c.set("lesion_level_" + std::string(to_string(kDiseaseCategories[k])), lesion_level[k]);
  }
  c.set("pixel_noise", pixel_noise);
  return c;
}

PhantomConfig PhantomConfig::from_config(const KeyValueConfig& c) {
  PhantomConfig p;
  std::vector<std::string> known = {"image_size", "max_translation_px", "max_rotation_deg",
                                    "vessel_trunks", "vessel_depth", "vessel_length",
                                    "vessel_width", "cfp_vessel_contrast", "cfp_brightness_jitter",
                                    "cfp_lesion_contrast", "ffa_background", "ffa_vessel_gain",
                                    "ffa_brightness_jitter", "lesion_radius", "pixel_noise", "n",
                                    "seed"};
  for (auto cat : kDiseaseCategories) known.push_back("lesion_level_" + std::string(to_string(cat)));
  if (auto unknown = c.unknown_keys(known); !unknown.empty()) {
    throw std::invalid_argument("unknown phantom config key '" + unknown.front() + "'");
  }
  c.read_into("image_size", p.image_size);
  c.read_into("max_translation_px", p.max_translation_px);
  c.read_into("max_rotation_deg", p.max_rotation_deg);
  c.read_into("vessel_trunks", p.vessel_trunks);
  c.read_into("vessel_depth", p.vessel_depth);
  c.read_into("vessel_length", p.vessel_length);
  c.read_into("vessel_width", p.vessel_width);
  c.read_into("cfp_vessel_contrast", p.cfp_vessel_contrast);
  c.read_into("cfp_brightness_jitter", p.cfp_brightness_jitter);
  c.read_into("cfp_lesion_contrast", p.cfp_lesion_contrast);
  c.read_into("ffa_background", p.ffa_background);
  c.read_into("ffa_vessel_gain", p.ffa_vessel_gain);
  c.read_into("ffa_brightness_jitter", p.ffa_brightness_jitter);
  c.read_into("lesion_radius", p.lesion_radius);
  c.read_into("pixel_noise", p.pixel_noise);
  for (std::size_t k = 0; k < p.lesion_level.size(); ++k) {
    c.read_into("lesion_level_" + std::string(to_string(kDiseaseCategories[k])), p.lesion_level[k]);
  }
  return p;
}

}  // namespace cfp2ffa
