#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sisn/checkpoint.hpp"
#include "sisn/manifest.hpp"
#include "sisn/metrics.hpp"
#include "sisn/train_config.hpp"

namespace sisn {

struct ImageMetrics {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> lpips;
  std::optional<double> mps;  // present iff lpips is
};

struct MetricReport {
  std::vector<ImageMetrics> images;  // ordered by id
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::optional<double> mean_lpips;  // over images that have one
  std::optional<double> mean_mps;
  std::size_t skipped = 0;  // pairs too small for the model or the SSIM window
};

// Produces an HR-sized estimate for a pair.
using Upscaler = std::function<ImageU8(const SamplePair&)>;

Upscaler identity_upscaler();  // returns the ground truth itself
Upscaler bicubic_upscaler();
Upscaler model_upscaler(const ModelParams<float>& model);

MetricReport evaluate(std::span<const ManifestEntry> entries, const Upscaler& upscaler,
                      const LpipsMap* lpips = nullptr);

// Rejects a checkpoint/manifest scale mismatch before running any inference.
MetricReport evaluate(const Checkpoint& checkpoint, const Manifest& manifest, Split split,
                      const LpipsMap* lpips = nullptr);

// Fixed-width text table: one row per image plus a "mean" row.
std::string format_report_table(const MetricReport& report);
// Same content as JSON.
std::string format_report_json(const MetricReport& report);
void write_report(const MetricReport& report, const std::filesystem::path& text_path,
                  const std::filesystem::path& json_path);

enum class AblationAxis { kEsag, kIsab };

// One sweep: hold `fixed_axis` at `fixed_value`, vary the other over [lo, hi].
struct AblationGrid {
  AblationAxis fixed_axis = AblationAxis::kEsag;
  int fixed_value = 10;
  int lo = 5;
  int hi = 20;
};

struct AblationConfig {
  int num_esag = 0;
  int num_isab = 0;
  friend bool operator==(const AblationConfig&, const AblationConfig&) = default;
};

struct AblationRow {
  int num_esag = 0;
  int num_isab = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

// ESAGs fixed at 10 with ISABs 5..20, and ISABs fixed at 10 with ESAGs 5..20.
std::vector<AblationGrid> published_ablation_grids();

// Unique (G, I) pairs in first-seen order.
std::vector<AblationConfig> ablation_configs(std::span<const AblationGrid> grids);

// Trains each unique configuration with `base` (model depth overridden) and
// evaluates it on `eval_split`.
std::vector<AblationRow> ablation_sweep(std::span<const AblationGrid> grids, const Manifest& manifest,
                                        const TrainConfig& base, Split eval_split,
                                        const std::function<void(const AblationRow&)>& on_row = {});

// "G,I,psnr,ssim" header plus one row per configuration.
std::string format_ablation_csv(std::span<const AblationRow> rows);

// "esag:10:5-20" or "isab:10:5-20"; several grids separated by ';' or ','.
std::vector<AblationGrid> parse_ablation_grids(const std::string& text);
std::string format_ablation_grids(std::span<const AblationGrid> grids);

}  // namespace sisn
