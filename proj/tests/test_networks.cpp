#include <gtest/gtest.h>

#include <vector>

#include "cfp2ffa/checkpoint.hpp"
#include "cfp2ffa/losses.hpp"
#include "cfp2ffa/networks.hpp"

using namespace cfp2ffa;

namespace {

std::int64_t reflect(std::int64_t i, std::int64_t n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

void copy_parameters(torch::nn::Module& from, torch::nn::Module& to) {
  torch::NoGradGuard no_grad;
  auto src = from.named_parameters();
  for (auto& p : to.named_parameters()) p.value().copy_(src[p.key()]);
  auto src_buf = from.named_buffers();
  for (auto& b : to.named_buffers()) b.value().copy_(src_buf[b.key()]);
}

}  // namespace

// --- input projection -------------------------------------------------------

TEST(InputProjection, ZeroImageGivesZeroFeature) {
  InputProjection proj;
  auto out = proj->forward(torch::zeros({1, 3, 8, 8}));
  EXPECT_EQ(out.sizes(), (std::vector<std::int64_t>{1, 64, 8, 8}));
  EXPECT_EQ(out.abs().max().item<float>(), 0.0f);
}

TEST(InputProjection, PreservesSpatialDims) {
  ResnetGenerator g(GeneratorOptions{.num_res_blocks = 1});
  auto latent = g->encode_input(torch::rand({3, 12, 20}) * 2 - 1);
  EXPECT_EQ(latent.sizes(), (std::vector<std::int64_t>{64, 12, 20}));
}

TEST(InputProjection, MatchesNaiveConvolution) {
  InputProjection proj;
  proj->to(torch::kFloat64);
  {
    torch::NoGradGuard no_grad;
    proj->conv->bias.uniform_(-0.5, 0.5);
  }
  auto x = torch::rand({1, 3, 5, 5}, torch::kFloat64) * 2 - 1;
  auto out = proj->forward(x);
  auto w = proj->conv->weight;
  auto b = proj->conv->bias;
  auto xa = x.accessor<double, 4>();
  auto wa = w.accessor<double, 4>();
  for (std::int64_t o = 0; o < 64; o += 7) {
    for (std::int64_t i = 0; i < 5; ++i) {
      for (std::int64_t j = 0; j < 5; ++j) {
        double acc = b[o].item<double>();
        for (std::int64_t c = 0; c < 3; ++c) {
          for (std::int64_t ky = 0; ky < 7; ++ky) {
            for (std::int64_t kx = 0; kx < 7; ++kx) {
              acc += wa[o][c][ky][kx] * xa[0][c][reflect(i + ky - 3, 5)][reflect(j + kx - 3, 5)];
            }
          }
        }
        EXPECT_NEAR(out[0][o][i][j].item<double>(), acc, 1e-12);
      }
    }
  }
}

TEST(InputProjection, WrongChannelCountThrows) {
  InputProjection proj;
  EXPECT_THROW(proj->forward(torch::zeros({1, 1, 8, 8})), std::invalid_argument);
}

// --- category embedding and fusion ------------------------------------------

TEST(CategoryEmbedding, NoneIsZero) {
  CategoryEmbedding e;
  auto v = e->embed(CategoryLabel::None);
  EXPECT_EQ(v.sizes(), (std::vector<std::int64_t>{64}));
  EXPECT_EQ(v.abs().max().item<float>(), 0.0f);
}

TEST(CategoryEmbedding, LabelsLookUpTheirRow) {
  CategoryEmbedding e;
  EXPECT_TRUE(torch::equal(e->embed(CategoryLabel::DR), e->table[class_index(CategoryLabel::DR)]));
  EXPECT_TRUE(torch::equal(e->embed(CategoryLabel::DR), e->embed(CategoryLabel::DR)));
  const std::vector<CategoryLabel> labels = {CategoryLabel::AMD, CategoryLabel::None, CategoryLabel::CSC};
  auto rows = e->forward(labels);
  EXPECT_EQ(rows.sizes(), (std::vector<std::int64_t>{3, 64}));
  EXPECT_TRUE(torch::equal(rows[1], torch::zeros({64})));
  EXPECT_TRUE(torch::equal(rows[2], e->embed(CategoryLabel::CSC)));
}

TEST(CategoryEmbedding, DistinctLabelsGiveDistinctVectors) {
  CategoryEmbedding e;
  for (std::size_t i = 0; i < kDiseaseCategories.size(); ++i) {
    for (std::size_t j = i + 1; j < kDiseaseCategories.size(); ++j) {
      EXPECT_FALSE(torch::equal(e->embed(kDiseaseCategories[i]), e->embed(kDiseaseCategories[j])));
    }
  }
}

TEST(Fuse, ZeroEmbeddingIsIdentity) {
  auto feat = torch::randn({2, 64, 4, 4});
  EXPECT_TRUE(torch::equal(fuse(feat, torch::zeros({2, 64})), feat));
}

TEST(Fuse, BroadcastsOverSpace) {
  auto v = torch::randn({64});
  auto out = fuse(torch::zeros({64, 3, 5}), v);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 5; ++j) EXPECT_TRUE(torch::equal(out.select(1, i).select(1, j), v));
  }
}

TEST(Fuse, DifferenceIsSpatiallyConstant) {
  auto feat = torch::randn({2, 64, 6, 6});
  auto c = torch::randn({2, 64});
  auto diff = fuse(feat, c) - feat;
  auto ref = diff.select(2, 0).select(2, 0).unsqueeze(2).unsqueeze(3);
  EXPECT_TRUE(torch::allclose(diff, ref.expand_as(diff), 1e-6, 1e-6));
  EXPECT_THROW(fuse(feat, torch::randn({2, 32})), std::invalid_argument);
}

// --- generator ----------------------------------------------------------------

TEST(Generator, ShapeAndBound) {
  ResnetGenerator g(GeneratorOptions{.num_res_blocks = 2});
  g->eval();
  auto y = g->forward(torch::rand({2, 3, 16, 24}) * 2 - 1);
  EXPECT_EQ(y.sizes(), (std::vector<std::int64_t>{2, 3, 16, 24}));
  EXPECT_LE(y.max().item<float>(), 1.0f);
  EXPECT_GE(y.min().item<float>(), -1.0f);
}

TEST(Generator, DeterministicInEvalMode) {
  ResnetGenerator g(GeneratorOptions{.num_res_blocks = 2, .use_category = true});
  g->eval();
  auto x = torch::rand({2, 3, 16, 16}) * 2 - 1;
  const std::vector<CategoryLabel> labels = {CategoryLabel::DR, CategoryLabel::Normal};
  EXPECT_TRUE(torch::equal(g->forward(x, labels), g->forward(x, labels)));
}

TEST(Generator, NoneCategoryMatchesGeneratorWithoutEnhancer) {
  torch::manual_seed(1);
  ResnetGenerator with(GeneratorOptions{.num_res_blocks = 3, .use_category = true});
  ResnetGenerator without(GeneratorOptions{.num_res_blocks = 3, .use_category = false});
  copy_parameters(*with, *without);
  with->eval();
  without->eval();
  auto x = torch::rand({3, 3, 32, 32}) * 2 - 1;
  const std::vector<CategoryLabel> none(3, CategoryLabel::None);
  EXPECT_TRUE(torch::equal(with->forward(x, none), without->forward(x)));
  const std::vector<CategoryLabel> dr(3, CategoryLabel::DR);
  EXPECT_FALSE(torch::equal(with->forward(x, dr), without->forward(x)));
}

TEST(Generator, LabelCountMustMatchBatch) {
  ResnetGenerator g(GeneratorOptions{.num_res_blocks = 1, .use_category = true});
  const std::vector<CategoryLabel> one = {CategoryLabel::DR};
  EXPECT_THROW(g->forward(torch::zeros({2, 3, 8, 8}), one), std::invalid_argument);
}

// --- discriminator ------------------------------------------------------------

TEST(Discriminator, ScoresInUnitInterval) {
  PatchDiscriminator d;
  const std::vector<std::int64_t> steps = {0, 500};
  auto s = d->forward(torch::randn({2, 3, 32, 32}) * 10, steps);
  EXPECT_EQ(s.dim(), 4);
  EXPECT_EQ(s.size(1), 1);
  EXPECT_GE(s.min().item<float>(), 0.0f);
  EXPECT_LE(s.max().item<float>(), 1.0f);
}

TEST(Discriminator, TimeConditioningChangesScores) {
  torch::manual_seed(4);
  PatchDiscriminator d;
  auto img = torch::randn({1, 3, 32, 32});
  const std::vector<std::int64_t> a = {3}, b = {700};
  EXPECT_FALSE(torch::equal(d->forward(img, a), d->forward(img, b)));
}

TEST(Discriminator, UnconditionedIgnoresSteps) {
  PatchDiscriminator d(DiscriminatorOptions{.time_conditioned = false});
  auto img = torch::randn({1, 3, 32, 32});
  const std::vector<std::int64_t> a = {0}, b = {999};
  EXPECT_TRUE(torch::equal(d->forward(img, a), d->forward(img, b)));
}

TEST(Discriminator, RejectsStepsOutsideSchedule) {
  PatchDiscriminator d;
  auto img = torch::randn({1, 3, 32, 32});
  const std::vector<std::int64_t> bad = {1000}, neg = {-1}, two = {0, 1};
  EXPECT_THROW(d->forward(img, bad), std::out_of_range);
  EXPECT_THROW(d->forward(img, neg), std::out_of_range);
  EXPECT_THROW(d->forward(img, two), std::invalid_argument);
}

// --- registration ---------------------------------------------------------------

TEST(Registration, IdentityFieldAtInit) {
  RegistrationUNet r;
  auto field = r->forward(torch::randn({2, 3, 16, 16}), torch::randn({2, 3, 16, 16}));
  EXPECT_EQ(field.sizes(), (std::vector<std::int64_t>{2, 2, 16, 16}));
  EXPECT_EQ(field.abs().max().item<float>(), 0.0f);
}

TEST(Registration, FiniteFieldAfterPerturbation) {
  RegistrationUNet r;
  {
    torch::NoGradGuard no_grad;
    r->flow->weight.normal_(0.0, 0.1);
  }
  auto field = r->forward(torch::randn({1, 3, 24, 16}) * 5, torch::randn({1, 3, 24, 16}) * 5);
  EXPECT_TRUE(torch::isfinite(field).all().item<bool>());
  EXPECT_GT(field.abs().max().item<float>(), 0.0f);
}

TEST(Registration, ShapeMismatchThrows) {
  RegistrationUNet r;
  EXPECT_THROW(r->forward(torch::zeros({1, 3, 16, 16}), torch::zeros({1, 3, 16, 24})),
               std::invalid_argument);
}

// --- warp -------------------------------------------------------------------------

TEST(Warp, ZeroFieldIsExactIdentity) {
  auto img = torch::randn({2, 3, 7, 9});
  EXPECT_TRUE(torch::equal(warp(img, torch::zeros({2, 2, 7, 9})), img));
}

TEST(Warp, UnitShiftOnRamp) {
  auto ramp = torch::arange(4, torch::kFloat32).view({1, 1, 1, 4}).expand({1, 1, 4, 4}).contiguous();
  auto field = torch::zeros({1, 2, 4, 4});
  field.select(1, 0).fill_(1.0);
  auto out = warp(ramp, field);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 3; ++x) EXPECT_EQ(out[0][0][y][x].item<float>(), static_cast<float>(x + 1));
    EXPECT_EQ(out[0][0][y][3].item<float>(), 3.0f);  // clamped at the border
  }
}

TEST(Warp, HalfPixelShiftInterpolates) {
  auto ramp = torch::arange(4, torch::kFloat64).view({1, 1, 1, 4}).expand({1, 1, 4, 4}).contiguous();
  auto field = torch::zeros({1, 2, 4, 4}, torch::kFloat64);
  field.select(1, 0).fill_(0.5);
  field.select(1, 1).fill_(0.25);
  auto out = warp(ramp, field);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) EXPECT_DOUBLE_EQ(out[0][0][y][x].item<double>(), x + 0.5);
  }
}

TEST(Warp, FieldGradientMatchesFiniteDifferences) {
  auto gen = at::detail::createCPUGenerator(8);
  auto img = torch::rand({1, 2, 6, 6}, gen, torch::kFloat64);
  auto base = (torch::rand({1, 2, 6, 6}, gen, torch::kFloat64) * 0.6 + 0.2) *
              (torch::randint(0, 2, {1, 2, 6, 6}, gen, torch::kFloat64) * 2 - 1);
  auto weights = torch::randn({1, 2, 6, 6}, gen, torch::kFloat64);
  auto loss_of = [&](const torch::Tensor& f) { return (warp(img, f) * weights).sum(); };

  auto field = base.clone().requires_grad_(true);
  loss_of(field).backward();
  auto grad = field.grad();

  const double h = 1e-6;
  auto flat = base.view(-1);
  for (std::int64_t i = 0; i < flat.numel(); ++i) {
    auto plus = base.clone();
    auto minus = base.clone();
    plus.view(-1)[i] += h;
    minus.view(-1)[i] -= h;
    const double fd = (loss_of(plus).item<double>() - loss_of(minus).item<double>()) / (2 * h);
    const double g = grad.view(-1)[i].item<double>();
    EXPECT_LE(std::abs(g - fd), 1e-4 * std::max(std::abs(fd), 1.0)) << "index " << i;
  }
}

TEST(Warp, ImageGradientMatchesFiniteDifferences) {
  auto gen = at::detail::createCPUGenerator(9);
  auto img = torch::rand({1, 1, 6, 6}, gen, torch::kFloat64);
  auto field = torch::rand({1, 2, 6, 6}, gen, torch::kFloat64) * 1.4 - 0.7;
  auto weights = torch::randn({1, 1, 6, 6}, gen, torch::kFloat64);
  auto x = img.clone().requires_grad_(true);
  (warp(x, field) * weights).sum().backward();
  const double h = 1e-6;
  for (std::int64_t i = 0; i < 36; ++i) {
    auto plus = img.clone();
    auto minus = img.clone();
    plus.view(-1)[i] += h;
    minus.view(-1)[i] -= h;
    const double fd = ((warp(plus, field) - warp(minus, field)) * weights).sum().item<double>() / (2 * h);
    EXPECT_NEAR(x.grad().view(-1)[i].item<double>(), fd, 1e-6);
  }
}

// --- variant parameter audit ---------------------------------------------------------

TEST(SynthesisNetworks, ParameterCountsDifferOnlyByVariantPieces) {
  auto config = TrainConfig::profile_defaults("desk");
  config.num_res_blocks = 2;
  config.variant = Variant::Baseline;
  auto base = SynthesisNetworks::build(config);
  config.variant = Variant::M1;
  auto m1 = SynthesisNetworks::build(config);
  config.variant = Variant::Full;
  auto full = SynthesisNetworks::build(config);

  const auto time_mlp = 64 * 128 + 128 + 128 * 128 + 128;
  EXPECT_EQ(count_parameters(*m1.generator), count_parameters(*base.generator));
  EXPECT_EQ(count_parameters(*full.generator), count_parameters(*m1.generator) + 5 * 64);
  EXPECT_EQ(count_parameters(*m1.discriminator), count_parameters(*base.discriminator) + time_mlp);
  EXPECT_EQ(count_parameters(*full.discriminator), count_parameters(*m1.discriminator));
  EXPECT_EQ(count_parameters(*base.registration), count_parameters(*full.registration));
}
