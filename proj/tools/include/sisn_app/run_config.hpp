#pragma once

#include <array>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "sisn/evaluator.hpp"
#include "sisn/manifest.hpp"
#include "sisn/train_config.hpp"

namespace sisn::app {

// Everything a command can be configured with. Files use one `key = value`
// per line; '#' starts a comment. Every key is optional.
struct RunConfig {
  TrainConfig train;  // seed and model.* live here

  std::string hr_dir;                 // data.hr_dir
  std::string manifest;               // data.manifest
  std::string out_dir;                // data.out_dir, also the default output directory
  std::array<int, 3> ratios{8, 1, 1};  // data.ratios

  std::string checkpoint;     // run.checkpoint
  std::string lpips_sidecar;  // eval.lpips_sidecar
  Split eval_split = Split::kTest;  // eval.split

  std::vector<AblationGrid> ablation_grids = published_ablation_grids();  // ablation.grids
  Split ablation_split = Split::kVal;                                  // ablation.split

  // Keys set by a file or a flag rather than left at their defaults.
  std::set<std::string> explicit_keys;

  bool is_set(const std::string& key) const { return explicit_keys.count(key) > 0; }
};

// Recognized keys in serialization order.
const std::vector<std::string>& run_config_keys();

// Applies one key; throws kParse naming the key for unknown keys or bad values.
void set_run_config_value(RunConfig& config, const std::string& key, const std::string& value);

// Errors name the origin, line and key.
RunConfig parse_run_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

// Writes every recognized key.
std::string serialize_run_config(const RunConfig& config);

}  // namespace sisn::app
