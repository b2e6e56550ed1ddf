#include <cmath>
#include <fstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "sisn/checkpoint.hpp"
#include "sisn/image.hpp"
#include "sisn/parallel.hpp"
#include "sisn/trainer.hpp"
#include "support/helpers.hpp"
#include "support/synthetic.hpp"

namespace sisn {
namespace {

using testing::error_kind_of;
using testing::TempDir;

TrainConfig small_config() {
  TrainConfig c;
  c.model = SisnConfig{1, 1, 8, 2, 2, 4};
  c.epochs = 2;
  c.batch_size = 2;
  c.lr_patch = 8;
  c.seed = 3;
  c.base_lr = 1e-3;
  return c;
}

// HR faces of 24x24 at x2, split train/val.
Manifest small_manifest(const TempDir& dir, int images = 3, std::array<int, 3> ratios = {2, 1, 0}) {
  testing::write_synthetic_faces(dir / "hr", images, 24, 24, 5);
  return build_manifest(dir / "hr", 2, ratios, 1, dir / "data");
}

TEST(LrSchedule, HalvesEveryFiftyEpochs) {
  TrainConfig c;
  EXPECT_DOUBLE_EQ(lr_at_epoch(0, c), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at_epoch(49, c), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at_epoch(50, c), 5e-5);
  EXPECT_DOUBLE_EQ(lr_at_epoch(100, c), 2.5e-5);
  double prev = lr_at_epoch(0, c);
  for (int e = 1; e < 400; ++e) {
    const double lr = lr_at_epoch(e, c);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
  EXPECT_EQ(error_kind_of([&] { lr_at_epoch(-1, c); }), ErrorKind::kInvalidArgument);
}

TEST(TrainConfig, Validation) {
  EXPECT_NO_THROW(TrainConfig{}.validate());
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    return error_kind_of([&] { c.validate(); });
  };
  EXPECT_EQ(bad([](TrainConfig& c) { c.base_lr = 0; }), ErrorKind::kInvalidArgument);
  EXPECT_EQ(bad([](TrainConfig& c) { c.halve_every = 0; }), ErrorKind::kInvalidArgument);
  EXPECT_EQ(bad([](TrainConfig& c) { c.batch_size = 0; }), ErrorKind::kInvalidArgument);
  EXPECT_EQ(bad([](TrainConfig& c) { c.model.scale = 3; }), ErrorKind::kInvalidArgument);
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  TempDir dir("ckpt");
  TrainConfig c = small_config();
  Checkpoint ck = initial_checkpoint(c);
  ck.epoch = 7;
  ck.best_val_psnr = 23.5;
  ck.optimizer.step = 11;
  ck.optimizer.m[0][0] = 0.25f;
  ck.optimizer.v[3][1] = 1e-9f;
  save_checkpoint(ck, dir / "a.ckpt");
  const Checkpoint back = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(back, ck);
  save_checkpoint(back, dir / "b.ckpt");
  EXPECT_EQ(testing::read_bytes(dir / "a.ckpt"), testing::read_bytes(dir / "b.ckpt"));
  EXPECT_FALSE(std::filesystem::exists(dir / "a.ckpt.tmp"));
}

TEST(Checkpoint, DistinctDiagnostics) {
  TempDir dir("ckpt_err");
  const Checkpoint ck = initial_checkpoint(small_config());
  const std::string bytes = serialize_checkpoint(ck);

  EXPECT_EQ(error_kind_of([&] { load_checkpoint(dir / "missing.ckpt"); }), ErrorKind::kMissingFile);

  std::string v2 = bytes;
  v2[8] = 2;  // version field follows the 8-byte magic
  EXPECT_EQ(error_kind_of([&] { deserialize_checkpoint(v2); }), ErrorKind::kVersionMismatch);

  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  EXPECT_EQ(error_kind_of([&] { deserialize_checkpoint(flipped); }), ErrorKind::kCorrupt);
  EXPECT_EQ(error_kind_of([&] { deserialize_checkpoint(bytes.substr(0, bytes.size() - 20)); }), ErrorKind::kCorrupt);
  EXPECT_EQ(error_kind_of([&] { deserialize_checkpoint("not a checkpoint"); }), ErrorKind::kCorrupt);

  // Config says 16 channels, tensors were built for 8.
  Checkpoint wrong = ck;
  wrong.config.model.channels = 16;
  std::string message;
  EXPECT_EQ(error_kind_of([&] { deserialize_checkpoint(serialize_checkpoint(wrong)); }, &message),
            ErrorKind::kShapeMismatch);
  EXPECT_NE(message.find("coarse.weight"), std::string::npos) << message;

  save_checkpoint(ck, dir / "ok.ckpt");
  SisnConfig other = ck.config.model;
  other.channels = 16;
  EXPECT_EQ(error_kind_of([&] { load_checkpoint(dir / "ok.ckpt", other); }, &message), ErrorKind::kShapeMismatch);
  EXPECT_NE(message.find("coarse.weight"), std::string::npos) << message;
  EXPECT_NO_THROW(load_checkpoint(dir / "ok.ckpt", ck.config.model));
}

TEST(Trainer, ZeroEpochsReturnsInitialState) {
  TempDir dir("zero");
  const Manifest m = small_manifest(dir);
  TrainConfig c = small_config();
  c.epochs = 0;
  const Checkpoint out = train(m, c);
  EXPECT_EQ(out, initial_checkpoint(c));
  EXPECT_EQ(out.optimizer.step, 0);
}

TEST(Trainer, SeededRunsAreBitIdentical) {
  TempDir dir("det");
  const Manifest m = small_manifest(dir);
  std::vector<double> losses[2];
  Checkpoint finals[2];
  for (int run = 0; run < 2; ++run) {
    TrainOptions opts;
    opts.on_epoch = [&, run](const EpochRecord& r) { losses[run].push_back(r.train_loss); };
    finals[run] = train(m, small_config(), opts);
  }
  ASSERT_EQ(losses[0].size(), 2u);
  EXPECT_EQ(losses[0], losses[1]);
  EXPECT_EQ(serialize_checkpoint(finals[0]), serialize_checkpoint(finals[1]));
  EXPECT_EQ(finals[0].epoch, 2);
  EXPECT_EQ(finals[0].optimizer.step, 2);  // two training images, batch 2

  TrainConfig other = small_config();
  other.seed = 4;
  EXPECT_NE(serialize_checkpoint(train(m, other)), serialize_checkpoint(finals[0]));
}

TEST(Trainer, ThreadCountDoesNotChangeResults) {
  TempDir dir("threads");
  const Manifest m = small_manifest(dir);
  const int saved = kernel_threads();
  set_kernel_threads(1);
  const std::string one = serialize_checkpoint(train(m, small_config()));
  set_kernel_threads(3);
  const std::string three = serialize_checkpoint(train(m, small_config()));
  set_kernel_threads(saved);
  EXPECT_EQ(one, three);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  TempDir dir("resume");
  const Manifest m = small_manifest(dir, 5, {4, 1, 0});
  TrainConfig c = small_config();
  c.epochs = 3;
  const Checkpoint full = train(m, c);

  TrainConfig first = c;
  first.epochs = 1;
  TrainOptions opts;
  opts.output_dir = dir / "run";
  train(m, first, opts);
  const Checkpoint midway = load_checkpoint(dir / "run" / "last.ckpt");
  EXPECT_EQ(midway.epoch, 1);
  const Checkpoint resumed = Trainer(m, midway, 3).run();
  EXPECT_EQ(serialize_checkpoint(resumed), serialize_checkpoint(full));
}

TEST(Trainer, WritesLogAndCheckpoints) {
  TempDir dir("outputs");
  const Manifest m = small_manifest(dir);
  TrainOptions opts;
  opts.output_dir = dir / "run";
  std::vector<double> step_losses;
  opts.on_step = [&](std::int64_t, double loss) { step_losses.push_back(loss); };
  TrainConfig c = small_config();
  c.epochs = 3;
  train(m, c, opts);
  for (double l : step_losses) EXPECT_TRUE(std::isfinite(l));
  EXPECT_EQ(step_losses.size(), 3u);

  std::ifstream log(dir / "run" / "train_log.jsonl");
  std::string line;
  int count = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    ++count;
    EXPECT_EQ(j.at("epoch").get<int>(), count);
    EXPECT_DOUBLE_EQ(j.at("lr").get<double>(), 1e-3);
    EXPECT_TRUE(std::isfinite(j.at("train_loss").get<double>()));
    EXPECT_TRUE(j.at("val_psnr").is_number());
    EXPECT_GE(j.at("wall_time").get<double>(), 0.0);
  }
  EXPECT_EQ(count, 3);
  const Checkpoint last = load_checkpoint(dir / "run" / "last.ckpt");
  const Checkpoint best = load_checkpoint(dir / "run" / "best.ckpt");
  EXPECT_EQ(last.epoch, 3);
  EXPECT_GE(best.epoch, 1);
  EXPECT_EQ(best.best_val_psnr, last.best_val_psnr);
}

TEST(Trainer, SingleSmallStepDecreasesLoss) {
  TempDir dir("step");
  testing::write_synthetic_faces(dir / "hr", 1, 32, 32, 9);
  const Manifest m = build_manifest(dir / "hr", 2, {1, 0, 0}, 1, dir / "data");
  TrainConfig c;
  c.model = SisnConfig::toy();
  c.lr_patch = 0;
  c.seed = 2;
  Trainer trainer(m, c);
  const std::vector<std::size_t> batch{0};
  const double before = trainer.training_loss();
  const double reported = trainer.step_whole_images(batch, 1e-5);
  EXPECT_NEAR(reported, before, 1e-6 * before);
  EXPECT_LT(trainer.training_loss(), before);
}

TEST(Trainer, NonFiniteLossAbortsAndKeepsLastGoodState) {
  TempDir dir("nan");
  const Manifest m = small_manifest(dir);
  Checkpoint start = initial_checkpoint(small_config());
  start.model.find("recon.bias").value[0] = std::nanf("");
  TrainOptions opts;
  opts.output_dir = dir / "run";
  std::filesystem::create_directories(dir / "run");
  save_checkpoint(start, dir / "run" / "last.ckpt");
  const std::string before = testing::read_bytes(dir / "run" / "last.ckpt");

  Trainer trainer(m, start, 2, opts);
  try {
    trainer.run();
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDivergence);
    EXPECT_EQ(serialize_checkpoint(e.last_good()), serialize_checkpoint(start));
  }
  EXPECT_EQ(testing::read_bytes(dir / "run" / "last.ckpt"), before);
}

TEST(Trainer, InputErrors) {
  TempDir dir("trainerr");
  const Manifest no_train = small_manifest(dir, 2, {0, 1, 0});
  EXPECT_EQ(error_kind_of([&] { Trainer(no_train, small_config()); }), ErrorKind::kInvalidArgument);

  const Manifest m = small_manifest(dir);
  TrainConfig wrong_scale = small_config();
  wrong_scale.model.scale = 4;
  EXPECT_EQ(error_kind_of([&] { Trainer(m, wrong_scale); }), ErrorKind::kScaleMismatch);

  TrainConfig big_patch = small_config();
  big_patch.lr_patch = 20;
  EXPECT_EQ(error_kind_of([&] { train(m, big_patch); }), ErrorKind::kInvalidArgument);

  testing::write_bytes(dir / "blocker", "x");
  TrainOptions opts;
  opts.output_dir = dir / "blocker" / "run";
  EXPECT_EQ(error_kind_of([&] { train(m, small_config(), opts); }), ErrorKind::kWriteFailure);

  TrainConfig done = small_config();
  Trainer finished(m, initial_checkpoint(done), 0);
  EXPECT_TRUE(finished.finished());
  EXPECT_EQ(error_kind_of([&] { finished.run_epoch(); }), ErrorKind::kInvalidArgument);
}

TEST(Trainer, WholeImageBatchesNeedEqualSizes) {
  TempDir dir("mixed");
  std::filesystem::create_directories(dir / "hr");
  save_image(testing::synthetic_face(16, 16, 1), dir / "hr" / "a.png");
  save_image(testing::synthetic_face(24, 16, 2), dir / "hr" / "b.png");
  const Manifest m = build_manifest(dir / "hr", 2, {1, 0, 0}, 1, dir / "data");
  TrainConfig c = small_config();
  c.lr_patch = 0;
  std::string message;
  EXPECT_EQ(error_kind_of([&] { train(m, c); }, &message), ErrorKind::kShapeMismatch);
  EXPECT_NE(message.find("lr_patch"), std::string::npos);
}

}  // namespace
}  // namespace sisn
