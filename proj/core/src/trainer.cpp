#include "sisn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "sisn/metrics.hpp"
#include "sisn/ops.hpp"

namespace sisn {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;

struct Batch {
  Tensor<float> lr;
  Tensor<float> hr;
};

Batch stack(const std::vector<SamplePair>& samples) {
  const SamplePair& first = samples.front();
  const int n = static_cast<int>(samples.size());
  Batch batch{Tensor<float>(Shape{n, 3, first.lr.height, first.lr.width}),
              Tensor<float>(Shape{n, 3, first.hr.height, first.hr.width})};
  for (int i = 0; i < n; ++i) {
    const SamplePair& s = samples[static_cast<std::size_t>(i)];
    require(s.lr.width == first.lr.width && s.lr.height == first.lr.height, ErrorKind::kShapeMismatch,
            "batch mixes LR sizes " + std::to_string(first.lr.width) + "x" + std::to_string(first.lr.height) + " ('" +
                first.source_id + "') and " + std::to_string(s.lr.width) + "x" + std::to_string(s.lr.height) + " ('" +
                s.source_id + "'); set lr_patch to train on patches");
    write_tensor(s.lr, batch.lr, i);
    write_tensor(s.hr, batch.hr, i);
  }
  return batch;
}

double l1_of(const ModelParams<float>& model, const SamplePair& pair) {
  const Tensor<float> pred = infer(model, to_tensor<float>(pair.lr));
  const Tensor<float> target = to_tensor<float>(pair.hr);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(static_cast<double>(pred[i]) - target[i]);
  return acc / static_cast<double>(pred.size());
}

}  // namespace

Checkpoint initial_checkpoint(const TrainConfig& config) {
  config.validate();
  Checkpoint ck;
  ck.config = config;
  ck.model = ModelParams<float>::initialize(config.model, config.seed);
  std::vector<Tensor<float>> values;
  for (const auto& p : ck.model.params()) values.push_back(p.value);
  ck.optimizer = AdamState<float>::zeros_like(values, config.adam());
  ck.rng_state = Rng(mix64(config.seed ^ kShuffleStream)).state();
  ck.best_val_psnr = 0.0;
  return ck;
}

Trainer::Trainer(const Manifest& manifest, const TrainConfig& config, TrainOptions options)
    : Trainer(manifest, initial_checkpoint(config), config.epochs, std::move(options)) {}

Trainer::Trainer(const Manifest& manifest, Checkpoint resume, int target_epochs, TrainOptions options)
    : state_(std::move(resume)), options_(std::move(options)) {
  state_.config.epochs = target_epochs;
  state_.config.validate();
  require(manifest.scale == state_.config.model.scale, ErrorKind::kScaleMismatch,
          "manifest scale " + std::to_string(manifest.scale) + " does not match model scale " +
              std::to_string(state_.config.model.scale));
  rng_.set_state(state_.rng_state);
  global_step_ = state_.optimizer.step;
  load_data(manifest);
}

void Trainer::load_data(const Manifest& manifest) {
  for (const auto& e : manifest.entries) {
    if (e.split == Split::kTrain) train_.push_back(load_pair(e));
    if (e.split == Split::kVal) val_.push_back(load_pair(e));
  }
  require(!train_.empty(), ErrorKind::kInvalidArgument, "manifest has no training samples");
}

std::vector<SamplePair> Trainer::epoch_samples(std::span<const std::size_t> samples, std::int64_t epoch) const {
  std::vector<SamplePair> out;
  out.reserve(samples.size());
  for (const std::size_t index : samples) {
    const SamplePair& pair = train_[index];
    Rng stream(derive_seed(state_.config.seed, pair.source_id, epoch));
    SamplePair patch = state_.config.lr_patch > 0 ? random_crop_pair(pair, state_.config.lr_patch, stream) : pair;
    out.push_back(augment(patch, random_augment(stream)));
  }
  return out;
}

double Trainer::optimize(const std::vector<SamplePair>& samples, double lr) {
  const Batch batch = stack(samples);
  ModelParams<float>& model = state_.model;

  Tape<float> tape;
  std::vector<Var> leaves;
  const SisnVars vars = model.bind(tape, true, &leaves);
  const Var input = tape.constant(batch.lr);
  const Var output = sisn_forward(tape, input, vars, model.config());
  const Var loss = l1_loss(tape, output, tape.constant(batch.hr));
  const double value = tape.value(loss)[0];
  if (!std::isfinite(value)) return value;

  tape.backward(loss);
  std::vector<Tensor<float>> grads;
  std::vector<Tensor<float>*> params;
  grads.reserve(leaves.size());
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    grads.push_back(tape.grad(leaves[i]));
    params.push_back(&model.params()[i].value);
  }
  adam_step<float>(params, grads, state_.optimizer, lr);
  ++global_step_;
  if (options_.on_step) options_.on_step(global_step_, value);
  return value;
}

EpochRecord Trainer::run_epoch() {
  require(!finished(), ErrorKind::kInvalidArgument, "training already reached its final epoch");
  const auto start = std::chrono::steady_clock::now();
  const Checkpoint last_good = state_;
  const std::int64_t epoch = state_.epoch;
  const double lr = lr_at_epoch(epoch, state_.config);

  std::vector<std::size_t> order(train_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng_.shuffle(order);

  const auto batch_size = static_cast<std::size_t>(state_.config.batch_size);
  double loss_sum = 0.0;
  std::size_t steps = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    const std::span<const std::size_t> chunk(order.data() + begin, end - begin);
    const double loss = optimize(epoch_samples(chunk, epoch), lr);
    if (!std::isfinite(loss)) {
      throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                                std::to_string(global_step_ + 1) + "; keeping the state from the start of the epoch",
                            last_good);
    }
    loss_sum += loss;
    ++steps;
  }

  state_.epoch = epoch + 1;
  state_.rng_state = rng_.state();
  EpochRecord record;
  record.epoch = state_.epoch;
  record.lr = lr;
  record.train_loss = loss_sum / static_cast<double>(steps);
  record.val_psnr = validate();
  record.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_outputs(record);
  if (options_.on_epoch) options_.on_epoch(record);
  return record;
}

std::optional<double> Trainer::validate() const {
  if (val_.empty()) return std::nullopt;
  double total = 0.0;
  for (const auto& pair : val_) total += psnr(to_image(infer(state_.model, to_tensor<float>(pair.lr))), pair.hr);
  return total / static_cast<double>(val_.size());
}

void Trainer::write_outputs(const EpochRecord& record) {
  bool improved = false;
  if (record.val_psnr && *record.val_psnr > state_.best_val_psnr) {
    state_.best_val_psnr = *record.val_psnr;
    improved = true;
  }
  if (!options_.output_dir) return;
  const fs::path dir = *options_.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorKind::kWriteFailure, "cannot create output directory '" + dir.string() + "'");

  nlohmann::ordered_json line;
  line["epoch"] = record.epoch;
  line["lr"] = record.lr;
  line["train_loss"] = record.train_loss;
  line["val_psnr"] = record.val_psnr ? nlohmann::ordered_json(*record.val_psnr) : nlohmann::ordered_json(nullptr);
  line["wall_time"] = record.wall_time;
  std::ofstream log(dir / "train_log.jsonl", std::ios::app);
  if (!log) fail(ErrorKind::kWriteFailure, "cannot append to '" + (dir / "train_log.jsonl").string() + "'");
  log << line.dump() << "\n";

  if (improved) save_checkpoint(state_, dir / "best.ckpt");
  if (record.epoch % state_.config.checkpoint_every == 0 || finished()) save_checkpoint(state_, dir / "last.ckpt");
}

Checkpoint Trainer::run() {
  while (!finished()) run_epoch();
  return state_;
}

double Trainer::training_loss() const {
  double total = 0.0;
  for (const auto& pair : train_) total += l1_of(state_.model, pair);
  return total / static_cast<double>(train_.size());
}

double Trainer::step_whole_images(std::span<const std::size_t> samples, double lr) {
  std::vector<SamplePair> batch;
  for (const std::size_t i : samples) {
    require(i < train_.size(), ErrorKind::kInvalidArgument, "training sample index out of range");
    batch.push_back(train_[i]);
  }
  return optimize(batch, lr);
}

Checkpoint train(const Manifest& manifest, const TrainConfig& config, TrainOptions options) {
  return Trainer(manifest, config, std::move(options)).run();
}

}  // namespace sisn
