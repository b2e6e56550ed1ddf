#include "sisn_app/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <optional>
#include <tuple>

#include <CLI11.hpp>

#include "sisn/checkpoint.hpp"
#include "sisn/evaluator.hpp"
#include "sisn/gradcheck.hpp"
#include "sisn/image.hpp"
#include "sisn/manifest.hpp"
#include "sisn/trainer.hpp"
#include "sisn_app/run_config.hpp"

namespace sisn::app {
namespace {

namespace fs = std::filesystem;

// Raw flag values; empty optionals were not given.
struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> scale;
  std::optional<int> epochs;
  std::string checkpoint;
  std::string manifest;
  std::string out;
  std::string lpips_sidecar;
  std::string preset;
  std::string split;
  std::string baseline = "model";
  std::string hr_dir;
  std::string input;
  std::string output;
  bool list = false;
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

void apply_preset(RunConfig& config, const std::string& preset) {
  if (preset.empty()) return;
  const SisnConfig m = preset == "toy" ? SisnConfig::toy() : SisnConfig::paper_default();
  set_run_config_value(config, "model.esag", std::to_string(m.num_esag));
  set_run_config_value(config, "model.isab", std::to_string(m.num_isab));
  set_run_config_value(config, "model.channels", std::to_string(m.channels));
  set_run_config_value(config, "model.splits", std::to_string(m.splits));
  set_run_config_value(config, "model.scale", std::to_string(m.scale));
  set_run_config_value(config, "model.reduction", std::to_string(m.reduction));
}

// Defaults, then the config file, then flags.
RunConfig resolve(const Flags& flags) {
  RunConfig config = flags.config.empty() ? RunConfig{} : load_run_config(flags.config);
  apply_preset(config, flags.preset);
  if (flags.seed) set_run_config_value(config, "seed", std::to_string(*flags.seed));
  if (flags.scale) set_run_config_value(config, "model.scale", std::to_string(*flags.scale));
  if (flags.epochs) set_run_config_value(config, "train.epochs", std::to_string(*flags.epochs));
  if (!flags.checkpoint.empty()) set_run_config_value(config, "run.checkpoint", flags.checkpoint);
  if (!flags.manifest.empty()) set_run_config_value(config, "data.manifest", flags.manifest);
  if (!flags.out.empty()) set_run_config_value(config, "data.out_dir", flags.out);
  if (!flags.lpips_sidecar.empty()) set_run_config_value(config, "eval.lpips_sidecar", flags.lpips_sidecar);
  if (!flags.split.empty()) set_run_config_value(config, "eval.split", flags.split);
  if (!flags.hr_dir.empty()) set_run_config_value(config, "data.hr_dir", flags.hr_dir);
  return config;
}

const std::string& need(const std::string& value, const std::string& what) {
  if (value.empty()) fail(ErrorKind::kInvalidArgument, "missing " + what);
  return value;
}

// A manifest fixes the scale; an explicit model.scale must agree with it.
void adopt_manifest_scale(RunConfig& config, const Manifest& manifest, const std::string& manifest_path) {
  if (config.is_set("model.scale") && config.train.model.scale != manifest.scale)
    fail(ErrorKind::kScaleMismatch, "configured scale x" + std::to_string(config.train.model.scale) +
                                        " does not match manifest '" + manifest_path + "' scale x" +
                                        std::to_string(manifest.scale));
  config.train.model.scale = manifest.scale;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kWriteFailure, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) fail(ErrorKind::kWriteFailure, "failed writing '" + path.string() + "'");
}

int cmd_degrade(const Flags& flags, std::ostream& out) {
  const RunConfig config = resolve(flags);
  const fs::path hr_dir = need(config.hr_dir, "HR image directory (positional argument or data.hr_dir)");
  const fs::path out_dir = need(config.out_dir, "output directory (--out or data.out_dir)");
  const fs::path manifest_path = config.manifest.empty() ? out_dir / "manifest.tsv" : fs::path(config.manifest);
  const int scale = config.train.model.scale;

  const Manifest manifest = build_manifest(hr_dir, scale, config.ratios, config.train.seed, out_dir);
  write_manifest(manifest, manifest_path);
  const auto counts = manifest.counts();
  out << "wrote " << manifest.entries.size() << " pairs at x" << scale << " (train " << counts[0] << ", val "
      << counts[1] << ", test " << counts[2] << ") to " << manifest_path.string() << "\n";
  return 0;
}

int cmd_train(const Flags& flags, std::ostream& out) {
  RunConfig config = resolve(flags);
  const std::string manifest_path = need(config.manifest, "manifest (--manifest or data.manifest)");
  const fs::path out_dir = need(config.out_dir, "output directory (--out or data.out_dir)");
  const Manifest manifest = read_manifest(manifest_path);
  fs::create_directories(out_dir);

  TrainOptions options;
  options.output_dir = out_dir;
  options.on_epoch = [&out](const EpochRecord& r) {
    out << "epoch " << r.epoch << " lr " << fmt("%.3g", r.lr) << " loss " << fmt("%.6f", r.train_loss);
    if (r.val_psnr) out << " val_psnr " << fmt("%.4f", *r.val_psnr);
    out << "\n" << std::flush;
  };

  Checkpoint final_state;
  if (!config.checkpoint.empty()) {
    Checkpoint resume = load_checkpoint(config.checkpoint);
    const SisnConfig& have = resume.config.model;
    for (const auto& [key, value, ckpt] :
         {std::tuple{"model.esag", config.train.model.num_esag, have.num_esag},
          std::tuple{"model.isab", config.train.model.num_isab, have.num_isab},
          std::tuple{"model.channels", config.train.model.channels, have.channels},
          std::tuple{"model.splits", config.train.model.splits, have.splits},
          std::tuple{"model.scale", config.train.model.scale, have.scale},
          std::tuple{"model.reduction", config.train.model.reduction, have.reduction}}) {
      if (config.is_set(key) && value != ckpt)
        fail(ErrorKind::kShapeMismatch, std::string(key) + " is " + std::to_string(value) + " in the run config but " +
                                            std::to_string(ckpt) + " in checkpoint '" + config.checkpoint + "'");
    }
    if (manifest.scale != have.scale)
      fail(ErrorKind::kScaleMismatch, "checkpoint '" + config.checkpoint + "' scale x" + std::to_string(have.scale) +
                                          " does not match manifest '" + manifest_path + "' scale x" +
                                          std::to_string(manifest.scale));
    const int target = config.is_set("train.epochs") ? config.train.epochs : resume.config.epochs;
    out << "resuming from epoch " << resume.epoch << " to " << target << "\n";
    Trainer trainer(manifest, std::move(resume), target, options);
    final_state = trainer.run();
  } else {
    adopt_manifest_scale(config, manifest, manifest_path);
    write_file(out_dir / "run_config.txt", serialize_run_config(config));
    final_state = train(manifest, config.train, options);
  }
  out << "finished " << final_state.epoch << " epochs; checkpoint " << (out_dir / "last.ckpt").string() << "\n";
  return 0;
}

int cmd_infer(const Flags& flags, std::ostream& out) {
  const RunConfig config = resolve(flags);
  const std::string checkpoint_path = need(config.checkpoint, "checkpoint (--checkpoint)");
  const std::string input = need(flags.input, "input LR image");
  const std::string output = flags.output.empty() ? flags.out : flags.output;
  need(output, "output image path");

  const Checkpoint checkpoint = load_checkpoint(checkpoint_path);
  if (config.is_set("model.scale") && config.train.model.scale != checkpoint.config.model.scale)
    fail(ErrorKind::kScaleMismatch, "requested scale x" + std::to_string(config.train.model.scale) +
                                        " but checkpoint '" + checkpoint_path + "' is x" +
                                        std::to_string(checkpoint.config.model.scale));
  const ImageU8 lr = load_image(input);
  const ImageU8 sr = to_image(infer(checkpoint.model, to_tensor<float>(lr)));
  save_image(sr, output);
  out << "wrote " << sr.width << "x" << sr.height << " image to " << output << "\n";
  return 0;
}

int cmd_eval(const Flags& flags, std::ostream& out) {
  RunConfig config = resolve(flags);
  const std::string manifest_path = need(config.manifest, "manifest (--manifest or data.manifest)");
  const Manifest manifest = read_manifest(manifest_path);

  std::optional<LpipsMap> lpips;
  if (!config.lpips_sidecar.empty()) lpips = lpips_ingest(config.lpips_sidecar);
  const LpipsMap* lpips_ptr = lpips ? &*lpips : nullptr;

  MetricReport report;
  if (flags.baseline == "model") {
    const std::string checkpoint_path = need(config.checkpoint, "checkpoint (--checkpoint)");
    const Checkpoint checkpoint = load_checkpoint(checkpoint_path);
    if (checkpoint.config.model.scale != manifest.scale)
      fail(ErrorKind::kScaleMismatch, "checkpoint '" + checkpoint_path + "' scale x" +
                                          std::to_string(checkpoint.config.model.scale) + " does not match manifest '" +
                                          manifest_path + "' scale x" + std::to_string(manifest.scale));
    report = evaluate(checkpoint, manifest, config.eval_split, lpips_ptr);
  } else {
    const auto entries = manifest.split(config.eval_split);
    report = evaluate(entries, flags.baseline == "bicubic" ? bicubic_upscaler() : identity_upscaler(), lpips_ptr);
  }

  out << format_report_table(report);
  if (!config.out_dir.empty()) {
    fs::create_directories(config.out_dir);
    write_report(report, fs::path(config.out_dir) / "report.txt", fs::path(config.out_dir) / "report.json");
  }
  return 0;
}

int cmd_ablate(const Flags& flags, std::ostream& out) {
  RunConfig config = resolve(flags);
  const auto configs = ablation_configs(config.ablation_grids);
  if (flags.list) {
    out << "G,I\n";
    for (const auto& c : configs) out << c.num_esag << "," << c.num_isab << "\n";
    out << configs.size() << " unique configurations\n";
    return 0;
  }
  const std::string manifest_path = need(config.manifest, "manifest (--manifest or data.manifest)");
  const Manifest manifest = read_manifest(manifest_path);
  adopt_manifest_scale(config, manifest, manifest_path);

  out << "G,I,psnr,ssim\n";
  const auto rows = ablation_sweep(config.ablation_grids, manifest, config.train, config.ablation_split,
                                   [&out](const AblationRow& r) {
                                     out << r.num_esag << "," << r.num_isab << "," << fmt("%.4f", r.psnr) << ","
                                         << fmt("%.6f", r.ssim) << "\n"
                                         << std::flush;
                                   });
  if (!config.out_dir.empty()) {
    fs::create_directories(config.out_dir);
    write_file(fs::path(config.out_dir) / "ablation.csv", format_ablation_csv(rows));
  }
  return 0;
}

int cmd_gradcheck(const Flags& flags, std::ostream& out) {
  const auto preset = flags.preset == "paper-default" ? GradcheckPreset::kPaperDefault : GradcheckPreset::kToy;
  const std::uint64_t seed = flags.seed.value_or(7);
  const auto start = std::chrono::steady_clock::now();
  const auto results = run_gradcheck_suite(preset, seed);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  bool all_passed = true;
  std::size_t width = 2;
  for (const auto& r : results) width = std::max(width, r.name.size());
  for (const auto& r : results) {
    out << r.name << std::string(width - r.name.size() + 2, ' ') << fmt("%.3e", r.max_relative_error) << "  "
        << r.coordinates << " coords  " << (r.passed ? "ok" : "FAIL") << "\n";
    all_passed = all_passed && r.passed;
  }
  out << (all_passed ? "gradcheck passed" : "gradcheck FAILED") << " (" << results.size() << " checks, "
      << fmt("%.1f", seconds) << " s)\n";
  return all_passed ? 0 : kExitCheckFailed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Face super-resolution with split-attention networks", "sisn"};
  app.require_subcommand(1);
  Flags flags;

  const std::vector<std::string> presets{"toy", "paper-default"};
  auto add_config = [&](CLI::App* sub) { sub->add_option("--config", flags.config, "key = value run config file"); };
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", flags.seed, "global seed"); };
  auto add_scale = [&](CLI::App* sub) { sub->add_option("--scale", flags.scale, "upscale factor (2, 4 or 8)"); };
  auto add_preset = [&](CLI::App* sub) {
    sub->add_option("--preset", flags.preset, "model preset")->check(CLI::IsMember(presets));
  };
  auto add_manifest = [&](CLI::App* sub) { sub->add_option("--manifest", flags.manifest, "dataset manifest"); };
  auto add_out = [&](CLI::App* sub, const std::string& help) { sub->add_option("--out", flags.out, help); };
  auto add_checkpoint = [&](CLI::App* sub, const std::string& help) {
    sub->add_option("--checkpoint", flags.checkpoint, help);
  };

  auto* degrade = app.add_subcommand("degrade", "Partition HR images and write bicubic LR inputs plus a manifest");
  degrade->add_option("hr_dir", flags.hr_dir, "directory of HR PNG images");
  add_config(degrade);
  add_seed(degrade);
  add_scale(degrade);
  add_manifest(degrade);
  add_out(degrade, "output directory for LR images (manifest defaults to <out>/manifest.tsv)");

  auto* train_cmd = app.add_subcommand("train", "Train a model; writes last.ckpt, best.ckpt and train_log.jsonl");
  add_config(train_cmd);
  add_seed(train_cmd);
  add_scale(train_cmd);
  add_preset(train_cmd);
  add_manifest(train_cmd);
  add_out(train_cmd, "output directory");
  add_checkpoint(train_cmd, "resume from this checkpoint");
  train_cmd->add_option("--epochs", flags.epochs, "total epochs");

  auto* infer_cmd = app.add_subcommand("infer", "Super-resolve one LR image");
  add_checkpoint(infer_cmd, "trained checkpoint");
  add_config(infer_cmd);
  add_scale(infer_cmd);
  infer_cmd->add_option("input", flags.input, "LR PNG image")->required();
  infer_cmd->add_option("output", flags.output, "output PNG path (or --out)");
  add_out(infer_cmd, "output PNG path");

  auto* eval_cmd = app.add_subcommand("eval", "Compute PSNR, SSIM and (with a sidecar) LPIPS/MPS on a split");
  add_config(eval_cmd);
  add_checkpoint(eval_cmd, "trained checkpoint");
  add_manifest(eval_cmd);
  eval_cmd->add_option("--lpips-sidecar", flags.lpips_sidecar, "'id value' LPIPS file");
  add_out(eval_cmd, "directory for report.txt and report.json");
  eval_cmd->add_option("--split", flags.split, "train, val or test")
      ->check(CLI::IsMember(std::vector<std::string>{"train", "val", "test"}));
  eval_cmd->add_option("--baseline", flags.baseline, "model, bicubic or identity")
      ->check(CLI::IsMember(std::vector<std::string>{"model", "bicubic", "identity"}));

  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate every (G, I) configuration of the grids");
  add_config(ablate_cmd);
  add_seed(ablate_cmd);
  add_scale(ablate_cmd);
  add_preset(ablate_cmd);
  add_manifest(ablate_cmd);
  add_out(ablate_cmd, "directory for ablation.csv");
  ablate_cmd->add_flag("--list", flags.list, "only list the unique configurations");

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  add_preset(gradcheck_cmd);
  add_seed(gradcheck_cmd);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error[usage]: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (degrade->parsed()) return cmd_degrade(flags, out);
    if (train_cmd->parsed()) return cmd_train(flags, out);
    if (infer_cmd->parsed()) return cmd_infer(flags, out);
    if (eval_cmd->parsed()) return cmd_eval(flags, out);
    if (ablate_cmd->parsed()) return cmd_ablate(flags, out);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(flags, out);
  } catch (const Error& e) {
    err << "error[" << error_kind_name(e.kind()) << "]: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << "\n";
    return kExitError;
  }
  return kExitUsage;
}

}  // namespace sisn::app
