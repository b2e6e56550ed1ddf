#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "sisn/checkpoint.hpp"
#include "sisn/manifest.hpp"
#include "sisn/rng.hpp"

namespace sisn {

struct EpochRecord {
  std::int64_t epoch = 0;  // 1-based count of completed epochs
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_psnr;
  double wall_time = 0.0;  // seconds spent in the epoch
};

// Thrown when a step produces a non-finite loss. Carries the state from the
// start of the failing epoch; no checkpoint on disk is overwritten.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& message, Checkpoint last_good)
      : Error(ErrorKind::kDivergence, message), last_good_(std::move(last_good)) {}
  const Checkpoint& last_good() const { return last_good_; }

 private:
  Checkpoint last_good_;
};

struct TrainOptions {
  // When set, receives train_log.jsonl, last.ckpt (every checkpoint_every
  // epochs and at the end) and best.ckpt (best validation PSNR).
  std::optional<std::filesystem::path> output_dir;
  std::function<void(const EpochRecord&)> on_epoch;
  // Called after every optimizer step with (global step, batch loss).
  std::function<void(std::int64_t, double)> on_step;
};

// Minimizes the mean L1 reconstruction loss with Adam over the manifest's
// training split, sampling patches and dihedral augmentations from per-sample
// seeded streams.
class Trainer {
 public:
  Trainer(const Manifest& manifest, const TrainConfig& config, TrainOptions options = {});
  // Continues from a checkpoint up to `target_epochs` total epochs.
  Trainer(const Manifest& manifest, Checkpoint resume, int target_epochs, TrainOptions options = {});

  // Runs the remaining epochs and returns the final state.
  Checkpoint run();

  // Runs a single epoch; returns its log record.
  EpochRecord run_epoch();

  const Checkpoint& state() const { return state_; }
  bool finished() const { return state_.epoch >= state_.config.epochs; }

  std::size_t train_size() const { return train_.size(); }

  // Mean per-image L1 of the current parameters over the whole, unaugmented
  // training images.
  double training_loss() const;

  // One optimizer step on whole, unaugmented training images; returns the
  // pre-step loss of that batch.
  double step_whole_images(std::span<const std::size_t> samples, double lr);

 private:
  void load_data(const Manifest& manifest);
  std::vector<SamplePair> epoch_samples(std::span<const std::size_t> samples, std::int64_t epoch) const;
  double optimize(const std::vector<SamplePair>& batch, double lr);
  std::optional<double> validate() const;
  void write_outputs(const EpochRecord& record);

  Checkpoint state_;
  TrainOptions options_;
  Rng rng_;
  std::vector<SamplePair> train_;
  std::vector<SamplePair> val_;
  std::int64_t global_step_ = 0;
};

// Convenience wrapper: fresh training run to config.epochs.
Checkpoint train(const Manifest& manifest, const TrainConfig& config, TrainOptions options = {});

// Fresh state before any step: initialized parameters, zero moments.
Checkpoint initial_checkpoint(const TrainConfig& config);

}  // namespace sisn
