#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "sisn/checkpoint.hpp"
#include "sisn/trainer.hpp"
#include "sisn_app/cli.hpp"
#include "sisn_app/run_config.hpp"
#include "support/helpers.hpp"
#include "support/synthetic.hpp"

namespace sisn::app {
namespace {

using sisn::testing::error_kind_of;
using sisn::testing::TempDir;

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

TEST(RunConfig, SerializeParseRoundTrip) {
  RunConfig c = parse_run_config(
      "# comment\n"
      "seed = 42\n"
      "model.esag = 3\n"
      "model.channels = 16\n"
      "train.base_lr = 0.0003\n"
      "train.lr_patch = 0   # whole images\n"
      "data.ratios = 6,2,2\n"
      "eval.split = val\n"
      "ablation.grids = esag:1:1-2;isab:2:1-3\n");
  EXPECT_EQ(c.train.seed, 42u);
  EXPECT_EQ(c.train.model.num_esag, 3);
  EXPECT_EQ(c.train.model.channels, 16);
  EXPECT_DOUBLE_EQ(c.train.base_lr, 3e-4);
  EXPECT_EQ(c.train.lr_patch, 0);
  EXPECT_EQ(c.ratios, (std::array<int, 3>{6, 2, 2}));
  EXPECT_EQ(c.eval_split, Split::kVal);
  EXPECT_TRUE(c.is_set("model.esag"));
  EXPECT_FALSE(c.is_set("model.isab"));

  const std::string text = serialize_run_config(c);
  const RunConfig back = parse_run_config(text);
  EXPECT_EQ(serialize_run_config(back), text);
  EXPECT_EQ(back.train.base_lr, c.train.base_lr);
  for (const auto& key : run_config_keys()) EXPECT_NE(text.find(key + " = "), std::string::npos) << key;
}

TEST(RunConfig, ErrorsNameLineAndKey) {
  auto check = [](const std::string& text, const std::string& fragment) {
    std::string message;
    EXPECT_EQ(error_kind_of([&] { parse_run_config(text, "run.cfg"); }, &message), ErrorKind::kParse) << text;
    EXPECT_NE(message.find(fragment), std::string::npos) << message;
  };
  check("seed = 1\nbogus = 2\n", "run.cfg:2");
  check("seed = 1\nbogus = 2\n", "bogus");
  check("model.esag = many\n", "model.esag");
  check("train.base_lr = 1e-3x\n", "train.base_lr");
  check("seed 5\n", "run.cfg:1");
  check("seed = 1\nseed = 2\n", "seed");
  check("data.ratios = 8,1\n", "data.ratios");
  check("eval.split = holdout\n", "eval.split");

  TempDir dir("runcfg");
  EXPECT_EQ(error_kind_of([&] { load_run_config(dir / "none.cfg"); }), ErrorKind::kMissingFile);
}

class CliTest : public ::testing::Test {
 protected:
  TempDir dir_{"cli"};
  std::string path(const std::string& leaf) const { return (dir_ / leaf).string(); }
};

TEST_F(CliTest, DegradeIsReproducible) {
  sisn::testing::write_synthetic_faces(dir_ / "hr", 10, 40, 36, 2);
  const CliResult a = cli({"degrade", path("hr"), "--scale", "4", "--seed", "7", "--out", path("a")});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("wrote 10 pairs at x4 (train 8, val 1, test 1)"), std::string::npos) << a.out;
  const CliResult b = cli({"degrade", path("hr"), "--scale", "4", "--seed", "7", "--out", path("b")});
  ASSERT_EQ(b.code, 0) << b.err;

  const Manifest ma = read_manifest(dir_ / "a" / "manifest.tsv");
  const Manifest mb = read_manifest(dir_ / "b" / "manifest.tsv");
  ASSERT_EQ(ma.entries.size(), 10u);
  for (std::size_t i = 0; i < ma.entries.size(); ++i) {
    EXPECT_EQ(ma.entries[i].source_id, mb.entries[i].source_id);
    EXPECT_EQ(sisn::testing::read_bytes(ma.entries[i].lr_path), sisn::testing::read_bytes(mb.entries[i].lr_path));
    const ImageU8 lr = load_image(ma.entries[i].lr_path);
    EXPECT_EQ(lr.width, 10);
    EXPECT_EQ(lr.height, 9);
  }

  const CliResult bad = cli({"degrade", path("hr"), "--scale", "3", "--out", path("c")});
  EXPECT_EQ(bad.code, kExitError);
  EXPECT_NE(bad.err.find("error[invalid_argument]"), std::string::npos) << bad.err;
  EXPECT_NE(bad.err.find("3"), std::string::npos);

  const CliResult missing = cli({"degrade", path("nowhere"), "--out", path("d")});
  EXPECT_EQ(missing.code, kExitError);
  EXPECT_NE(missing.err.find("error[missing_file]"), std::string::npos) << missing.err;
}

TEST_F(CliTest, InferUpscalesBySavedScale) {
  TrainConfig c;
  c.model = SisnConfig::toy();
  c.model.scale = 8;
  save_checkpoint(initial_checkpoint(c), dir_ / "x8.ckpt");
  save_image(sisn::testing::synthetic_face(32, 32, 1), dir_ / "in.png");
  const CliResult r = cli({"infer", "--checkpoint", path("x8.ckpt"), path("in.png"), path("out.png")});
  ASSERT_EQ(r.code, 0) << r.err;
  const ImageU8 out = load_image(dir_ / "out.png");
  EXPECT_EQ(out.width, 256);
  EXPECT_EQ(out.height, 256);

  const CliResult wrong = cli({"infer", "--checkpoint", path("x8.ckpt"), "--scale", "4", path("in.png"), path("o.png")});
  EXPECT_EQ(wrong.code, kExitError);
  EXPECT_NE(wrong.err.find("8"), std::string::npos) << wrong.err;
  EXPECT_NE(wrong.err.find("4"), std::string::npos) << wrong.err;
}

TEST_F(CliTest, EvalIdentityBaseline) {
  sisn::testing::write_synthetic_faces(dir_ / "hr", 4, 32, 32, 3);
  ASSERT_EQ(cli({"degrade", path("hr"), "--scale", "2", "--out", path("data")}).code, 0);
  sisn::testing::write_bytes(dir_ / "lpips.txt", "face_00 0.5\n");
  const CliResult r = cli({"eval", "--manifest", path("data/manifest.tsv"), "--baseline", "identity", "--split", "train",
                           "--lpips-sidecar", path("lpips.txt"), "--out", path("eval")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("mean"), std::string::npos);
  const auto j = nlohmann::json::parse(sisn::testing::read_bytes(dir_ / "eval" / "report.json"));
  EXPECT_DOUBLE_EQ(j.at("aggregate").at("ssim").get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(j.at("aggregate").at("psnr").get<double>(), 100.0);
  EXPECT_TRUE(std::filesystem::exists(dir_ / "eval" / "report.txt"));
}

TEST_F(CliTest, TrainResumeAndEval) {
  sisn::testing::write_synthetic_faces(dir_ / "hr", 3, 24, 24, 4);
  ASSERT_EQ(cli({"degrade", path("hr"), "--scale", "2", "--out", path("data")}).code, 0);
  sisn::testing::write_bytes(dir_ / "run.cfg",
                       "model.esag = 1\nmodel.isab = 1\nmodel.channels = 8\ntrain.lr_patch = 8\ntrain.batch_size = 2\n");
  const CliResult t = cli({"train", "--config", path("run.cfg"), "--manifest", path("data/manifest.tsv"), "--epochs",
                           "1", "--out", path("run")});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("epoch 1"), std::string::npos) << t.out;
  EXPECT_TRUE(std::filesystem::exists(dir_ / "run" / "run_config.txt"));

  const CliResult resumed = cli({"train", "--checkpoint", path("run/last.ckpt"), "--manifest",
                                 path("data/manifest.tsv"), "--epochs", "2", "--out", path("run")});
  ASSERT_EQ(resumed.code, 0) << resumed.err;
  EXPECT_EQ(load_checkpoint(dir_ / "run" / "last.ckpt").epoch, 2);

  const CliResult clash = cli({"train", "--checkpoint", path("run/last.ckpt"), "--manifest",
                               path("data/manifest.tsv"), "--preset", "paper-default", "--out", path("run2")});
  EXPECT_EQ(clash.code, kExitError);
  EXPECT_NE(clash.err.find("error[shape_mismatch]"), std::string::npos) << clash.err;

  const CliResult e = cli({"eval", "--checkpoint", path("run/last.ckpt"), "--manifest", path("data/manifest.tsv"),
                           "--split", "train", "--out", path("eval")});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_TRUE(std::filesystem::exists(dir_ / "eval" / "report.json"));
}

TEST_F(CliTest, AblateListsPublishedGrid) {
  const CliResult r = cli({"ablate", "--list"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("31 unique configurations"), std::string::npos) << r.out;
}

TEST_F(CliTest, GradcheckToyPasses) {
  const CliResult r = cli({"gradcheck", "--preset", "toy"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("gradcheck passed"), std::string::npos);
  EXPECT_NE(r.out.find("sisn_full_model"), std::string::npos);
}

TEST_F(CliTest, UsageAndConfigErrors) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"train", "--epochs", "many"}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, 0);

  sisn::testing::write_bytes(dir_ / "bad.cfg", "model.depth = 3\n");
  const CliResult r = cli({"train", "--config", path("bad.cfg")});
  EXPECT_EQ(r.code, kExitError);
  EXPECT_NE(r.err.find("error[parse_error]"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("bad.cfg:1"), std::string::npos) << r.err;
}

}  // namespace
}  // namespace sisn::app
