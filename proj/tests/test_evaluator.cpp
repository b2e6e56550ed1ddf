#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>
#include <json.hpp>

#include "sisn/evaluator.hpp"
#include "sisn/trainer.hpp"
#include "support/helpers.hpp"
#include "support/published_scores.hpp"
#include "support/synthetic.hpp"

namespace sisn {
namespace {

using testing::error_kind_of;
using testing::TempDir;

ImageU8 random_image(int w, int h, Rng& rng) {
  ImageU8 img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

// Straight-line SSIM: explicit window loops with two-pass (centered) moments.
double ssim_oracle(const ImageU8& a, const ImageU8& b) {
  auto y = [](const ImageU8& img, int x, int yy) {
    return 0.299 * img.at(x, yy, 0) + 0.587 * img.at(x, yy, 1) + 0.114 * img.at(x, yy, 2);
  };
  const double c1 = 6.5025, c2 = 58.5225;
  double total = 0.0;
  int windows = 0;
  for (int oy = 0; oy + 8 <= a.height; ++oy)
    for (int ox = 0; ox + 8 <= a.width; ++ox) {
      double ma = 0, mb = 0;
      for (int j = 0; j < 8; ++j)
        for (int i = 0; i < 8; ++i) {
          ma += y(a, ox + i, oy + j);
          mb += y(b, ox + i, oy + j);
        }
      ma /= 64;
      mb /= 64;
      double va = 0, vb = 0, cov = 0;
      for (int j = 0; j < 8; ++j)
        for (int i = 0; i < 8; ++i) {
          const double da = y(a, ox + i, oy + j) - ma;
          const double db = y(b, ox + i, oy + j) - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      va /= 64;
      vb /= 64;
      cov /= 64;
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  return total / windows;
}

TEST(Psnr, ReferenceValues) {
  Rng rng(1);
  const ImageU8 a = random_image(16, 12, rng);
  EXPECT_EQ(psnr(a, a), kPsnrCap);

  ImageU8 base(10, 10, 100);
  ImageU8 shifted = base;
  for (std::size_t i = 0; i < shifted.pixels.size(); ++i) shifted.pixels[i] = i % 2 ? 101 : 99;
  EXPECT_NEAR(psnr(base, shifted), 48.1308, 1e-3);
  EXPECT_NEAR(psnr(ImageU8(4, 4, 0), ImageU8(4, 4, 255)), 0.0, 1e-12);

  const ImageU8 b = random_image(16, 12, rng);
  EXPECT_DOUBLE_EQ(psnr(a, b), psnr(b, a));
  EXPECT_EQ(error_kind_of([&] { psnr(a, ImageU8(12, 16)); }), ErrorKind::kShapeMismatch);
}

TEST(Ssim, IdenticalImagesScoreOne) {
  Rng rng(2);
  const ImageU8 a = random_image(20, 9, rng);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_NEAR(ssim(ImageU8(8, 8, 37), ImageU8(8, 8, 37)), 1.0, 1e-12);
}

TEST(Ssim, FlatImagesDependOnlyOnLuminance) {
  const double c1 = 6.5025;
  EXPECT_NEAR(ssim(ImageU8(8, 8, 0), ImageU8(8, 8, 255)), c1 / (255.0 * 255.0 + c1), 1e-12);
}

TEST(Ssim, MatchesWindowOracleOnRandomPairs) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const ImageU8 a = random_image(16, 16, rng);
    ImageU8 b = a;
    // Mix of unrelated and lightly perturbed pairs.
    for (auto& p : b.pixels)
      p = trial % 2 ? static_cast<std::uint8_t>(rng.below(256))
                    : static_cast<std::uint8_t>(std::clamp(p + static_cast<int>(rng.below(41)) - 20, 0, 255));
    const double got = ssim(a, b);
    EXPECT_NEAR(got, ssim_oracle(a, b), 1e-9) << "trial " << trial;
    EXPECT_NEAR(got, ssim(b, a), 1e-12);
    EXPECT_LE(got, 1.0);
    EXPECT_GE(got, -1.0);
  }
}

TEST(Ssim, RejectsImagesSmallerThanTheWindow) {
  std::string message;
  EXPECT_EQ(error_kind_of([] { ssim(ImageU8(7, 8), ImageU8(7, 8)); }, &message), ErrorKind::kInvalidArgument);
  EXPECT_NE(message.find("7x8"), std::string::npos);
  EXPECT_EQ(error_kind_of([] { ssim(ImageU8(8, 8), ImageU8(9, 8)); }), ErrorKind::kShapeMismatch);
}

TEST(Mps, ReproducesPublishedScores) {
  for (const auto& row : testing::kPublishedScores)
    EXPECT_NEAR(mps(row.ssim, row.lpips), row.mps, 5e-4) << row.row;
  EXPECT_NEAR(mps(0.9037, 0.3104), 0.7967, 5e-5 + 1e-12);
  EXPECT_NEAR(mps(0.9250, 0.2309), 0.8471, 5e-5 + 1e-12);
}

TEST(Mps, Properties) {
  EXPECT_DOUBLE_EQ(mps(1.0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(mps(0.0, 1.0), 0.0);
  EXPECT_GT(mps(0.9, 0.2), mps(0.8, 0.2));
  EXPECT_GT(mps(0.9, 0.1), mps(0.9, 0.2));
  EXPECT_FALSE(mps(0.9, std::optional<double>{}).has_value());
  EXPECT_DOUBLE_EQ(*mps(0.9, std::optional<double>{0.3}), 0.8);
}

TEST(Lpips, ParsesSidecar) {
  const LpipsMap m = parse_lpips("# id lpips\n\nface_01 0.25\nface_02\t0.125\r\n");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_DOUBLE_EQ(m.at("face_01"), 0.25);
  EXPECT_DOUBLE_EQ(m.at("face_02"), 0.125);
  EXPECT_TRUE(parse_lpips("").empty());
  EXPECT_EQ(parse_lpips("only 0").size(), 1u);
}

TEST(Lpips, RejectsBadLinesWithLineNumbers) {
  auto check = [](const std::string& text, const std::string& where) {
    std::string message;
    EXPECT_EQ(error_kind_of([&] { parse_lpips(text, "side.txt"); }, &message), ErrorKind::kParse) << text;
    EXPECT_NE(message.find(where), std::string::npos) << message;
  };
  check("a 0.1\na 0.2\n", "side.txt:2");
  check("a -0.1\n", "side.txt:1");
  check("a\n", "side.txt:1");
  check("a 0.1 extra\n", "side.txt:1");
  check("# ok\na abc\n", "side.txt:2");
  check("a 0.1x\n", "side.txt:1");
  check("a nan\n", "side.txt:1");

  TempDir dir("lpips");
  EXPECT_EQ(error_kind_of([&] { lpips_ingest(dir / "none.txt"); }), ErrorKind::kMissingFile);
  testing::write_bytes(dir / "s.txt", "x 0.5\n");
  EXPECT_DOUBLE_EQ(lpips_ingest(dir / "s.txt").at("x"), 0.5);
}

class EvaluateTest : public ::testing::Test {
 protected:
  void SetUp() override {
    testing::write_synthetic_faces(dir_ / "hr", 4, 32, 32, 11);
    manifest_ = build_manifest(dir_ / "hr", 2, {2, 1, 1}, 5, dir_ / "data");
  }
  TempDir dir_{"evaluate"};
  Manifest manifest_;
};

TEST_F(EvaluateTest, IdentityBaselineIsPerfect) {
  const MetricReport r = evaluate(manifest_.entries, identity_upscaler());
  ASSERT_EQ(r.images.size(), 4u);
  EXPECT_EQ(r.mean_psnr, kPsnrCap);
  EXPECT_NEAR(r.mean_ssim, 1.0, 1e-12);
  EXPECT_FALSE(r.mean_lpips.has_value());
  EXPECT_FALSE(r.mean_mps.has_value());
  EXPECT_EQ(r.skipped, 0u);
  EXPECT_EQ(error_kind_of([] { evaluate({}, identity_upscaler()); }), ErrorKind::kInvalidArgument);
  for (std::size_t i = 1; i < r.images.size(); ++i) EXPECT_LT(r.images[i - 1].id, r.images[i].id);
}

TEST_F(EvaluateTest, BicubicAggregatesAreMeansOfImages) {
  const MetricReport r = evaluate(manifest_.entries, bicubic_upscaler());
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (const auto& m : r.images) {
    EXPECT_LT(m.psnr, kPsnrCap);
    EXPECT_GT(m.psnr, 15.0);
    psnr_sum += m.psnr;
    ssim_sum += m.ssim;
  }
  EXPECT_NEAR(r.mean_psnr, psnr_sum / 4, 1e-12);
  EXPECT_NEAR(r.mean_ssim, ssim_sum / 4, 1e-12);
}

TEST_F(EvaluateTest, LpipsJoinsByIdAndMpsNeedsBoth) {
  const std::string first = manifest_.entries[0].source_id;
  const LpipsMap lp{{first, 0.2}, {"not_in_manifest", 0.9}};
  const MetricReport r = evaluate(manifest_.entries, identity_upscaler(), &lp);
  int with_lpips = 0;
  for (const auto& m : r.images) {
    EXPECT_EQ(m.lpips.has_value(), m.mps.has_value());
    if (m.lpips) {
      ++with_lpips;
      EXPECT_EQ(m.id, first);
      EXPECT_NEAR(*m.mps, 0.5 * (1.0 + 0.8), 1e-12);
    }
  }
  EXPECT_EQ(with_lpips, 1);
  ASSERT_TRUE(r.mean_lpips.has_value());
  EXPECT_DOUBLE_EQ(*r.mean_lpips, 0.2);
  EXPECT_NEAR(*r.mean_mps, 0.9, 1e-12);
}

TEST_F(EvaluateTest, CheckpointScaleMustMatchManifest) {
  TrainConfig c;
  c.model = SisnConfig::toy();
  c.model.scale = 4;
  std::string message;
  EXPECT_EQ(error_kind_of([&] { evaluate(initial_checkpoint(c), manifest_, Split::kTest); }, &message),
            ErrorKind::kScaleMismatch);
  EXPECT_NE(message.find('4'), std::string::npos);
  EXPECT_NE(message.find('2'), std::string::npos);

  c.model.scale = 2;
  const MetricReport r = evaluate(initial_checkpoint(c), manifest_, Split::kTest);
  EXPECT_EQ(r.images.size(), 1u);
}

TEST_F(EvaluateTest, ReportsAreDeterministic) {
  const LpipsMap lp{{manifest_.entries[1].source_id, 0.3}};
  const MetricReport a = evaluate(manifest_.entries, bicubic_upscaler(), &lp);
  const MetricReport b = evaluate(manifest_.entries, bicubic_upscaler(), &lp);
  EXPECT_EQ(format_report_table(a), format_report_table(b));
  EXPECT_EQ(format_report_json(a), format_report_json(b));

  const auto j = nlohmann::json::parse(format_report_json(a));
  EXPECT_EQ(j.at("images").size(), 4u);
  EXPECT_NEAR(j.at("aggregate").at("psnr").get<double>(), a.mean_psnr, 1e-9);
  EXPECT_EQ(j.at("aggregate").at("count").get<int>(), 4);
  const std::string table = format_report_table(a);
  EXPECT_NE(table.find("mean"), std::string::npos);
  EXPECT_NE(table.find(manifest_.entries[0].source_id), std::string::npos);

  write_report(a, dir_ / "out" / "report.txt", dir_ / "out" / "report.json");
  EXPECT_EQ(testing::read_bytes(dir_ / "out" / "report.json"), format_report_json(a));
}

TEST(Ablation, PublishedGridHasThirtyOneConfigurations) {
  const auto grids = published_ablation_grids();
  const auto configs = ablation_configs(grids);
  EXPECT_EQ(configs.size(), 31u);
  EXPECT_EQ(configs.front(), (AblationConfig{10, 5}));
  EXPECT_EQ(std::count(configs.begin(), configs.end(), AblationConfig{10, 10}), 1);
  for (std::size_t i = 0; i < configs.size(); ++i)
    for (std::size_t j = i + 1; j < configs.size(); ++j) EXPECT_FALSE(configs[i] == configs[j]);
}

TEST(Ablation, GridEdgeCases) {
  const std::vector<AblationGrid> single{{AblationAxis::kIsab, 3, 2, 2}};
  const auto one = ablation_configs(single);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], (AblationConfig{2, 3}));

  const std::vector<AblationGrid> toy{{AblationAxis::kEsag, 1, 1, 2}, {AblationAxis::kEsag, 2, 1, 2}};
  EXPECT_EQ(ablation_configs(toy).size(), 4u);

  EXPECT_EQ(error_kind_of([] { ablation_configs({}); }), ErrorKind::kInvalidArgument);
  const std::vector<AblationGrid> reversed{{AblationAxis::kEsag, 10, 20, 5}};
  EXPECT_EQ(error_kind_of([&] { ablation_configs(reversed); }), ErrorKind::kInvalidArgument);
  const std::vector<AblationGrid> zero{{AblationAxis::kEsag, 0, 1, 2}};
  EXPECT_EQ(error_kind_of([&] { ablation_configs(zero); }), ErrorKind::kInvalidArgument);
}

TEST(Ablation, GridTextRoundTrip) {
  const auto grids = parse_ablation_grids("esag:10:5-20;isab:10:5-20");
  EXPECT_EQ(ablation_configs(grids), ablation_configs(published_ablation_grids()));
  EXPECT_EQ(parse_ablation_grids(format_ablation_grids(grids)).size(), 2u);
  EXPECT_EQ(format_ablation_grids(parse_ablation_grids("esag:1:1-2,esag:2:1-2")), "esag:1:1-2;esag:2:1-2");
  for (const char* bad : {"", "esag", "foo:1:1-2", "esag:x:1-2", "esag:1:1"})
    EXPECT_EQ(error_kind_of([&] { parse_ablation_grids(bad); }), ErrorKind::kParse) << bad;
}

TEST(Ablation, CsvLayout) {
  const std::vector<AblationRow> rows{{1, 2, 23.5, 0.8125}, {2, 1, 22.25, 0.75}};
  const std::string csv = format_ablation_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "G,I,psnr,ssim");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(csv.find("1,2,23.5"), std::string::npos);
}

TEST(Ablation, SweepTrainsEveryConfiguration) {
  TempDir dir("sweep");
  testing::write_synthetic_faces(dir / "hr", 3, 16, 16, 4);
  const Manifest m = build_manifest(dir / "hr", 2, {2, 1, 0}, 1, dir / "data");
  TrainConfig base;
  base.model = SisnConfig{1, 1, 8, 2, 2, 4};
  base.epochs = 1;
  base.batch_size = 2;
  base.lr_patch = 0;
  const std::vector<AblationGrid> grids{{AblationAxis::kEsag, 1, 1, 2}};
  int streamed = 0;
  const auto rows = ablation_sweep(grids, m, base, Split::kVal, [&](const AblationRow&) { ++streamed; });
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(streamed, 2);
  EXPECT_EQ(rows[0].num_esag, 1);
  EXPECT_EQ(rows[1].num_isab, 2);
  for (const auto& r : rows) {
    EXPECT_TRUE(std::isfinite(r.psnr));
    EXPECT_GT(r.ssim, -1.0);
  }
}

}  // namespace
}  // namespace sisn
