#include "sisn_app/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace sisn::app {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty())
    fail(ErrorKind::kParse, "key '" + key + "': '" + value + "' is not a valid number");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  // from_chars for double is missing from GCC 11's libstdc++ for some targets.
  char* end = nullptr;
  const double out = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size())
    fail(ErrorKind::kParse, "key '" + key + "': '" + value + "' is not a valid number");
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Split parse_split_value(const std::string& key, const std::string& value) {
  try {
    return parse_split(value);
  } catch (const Error&) {
    fail(ErrorKind::kParse, "key '" + key + "': unknown split '" + value + "' (train, val or test)");
  }
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

Field int_field(int TrainConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { c.train.*member = parse_number<int>(k, v); },
          [member](const RunConfig& c) { return std::to_string(c.train.*member); }};
}

Field model_field(int SisnConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            c.train.model.*member = parse_number<int>(k, v);
          },
          [member](const RunConfig& c) { return std::to_string(c.train.model.*member); }};
}

Field double_field(double TrainConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { c.train.*member = parse_double(k, v); },
          [member](const RunConfig& c) { return format_double(c.train.*member); }};
}

Field string_field(std::string RunConfig::*member) {
  return {[member](RunConfig& c, const std::string&, const std::string& v) { c.*member = v; },
          [member](const RunConfig& c) { return c.*member; }};
}

Field split_field(Split RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = parse_split_value(k, v); },
          [member](const RunConfig& c) { return std::string(split_name(c.*member)); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.train.seed = parse_number<std::uint64_t>(k, v); },
        [](const RunConfig& c) { return std::to_string(c.train.seed); }}},
      {"model.esag", model_field(&SisnConfig::num_esag)},
      {"model.isab", model_field(&SisnConfig::num_isab)},
      {"model.channels", model_field(&SisnConfig::channels)},
      {"model.splits", model_field(&SisnConfig::splits)},
      {"model.scale", model_field(&SisnConfig::scale)},
      {"model.reduction", model_field(&SisnConfig::reduction)},
      {"train.epochs", int_field(&TrainConfig::epochs)},
      {"train.batch_size", int_field(&TrainConfig::batch_size)},
      {"train.base_lr", double_field(&TrainConfig::base_lr)},
      {"train.halve_every", int_field(&TrainConfig::halve_every)},
      {"train.lr_patch", int_field(&TrainConfig::lr_patch)},
      {"train.beta1", double_field(&TrainConfig::beta1)},
      {"train.beta2", double_field(&TrainConfig::beta2)},
      {"train.eps", double_field(&TrainConfig::eps)},
      {"train.checkpoint_every", int_field(&TrainConfig::checkpoint_every)},
      {"data.hr_dir", string_field(&RunConfig::hr_dir)},
      {"data.manifest", string_field(&RunConfig::manifest)},
      {"data.out_dir", string_field(&RunConfig::out_dir)},
      {"data.ratios",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          std::array<int, 3> r{};
          std::istringstream in(v);
          std::string part;
          std::size_t n = 0;
          while (std::getline(in, part, ',')) {
            if (n == 3) fail(ErrorKind::kParse, "key '" + k + "': expected three ratios, got more");
            r[n++] = parse_number<int>(k, trim(part));
          }
          if (n != 3) fail(ErrorKind::kParse, "key '" + k + "': expected three comma-separated ratios");
          c.ratios = r;
        },
        [](const RunConfig& c) {
          return std::to_string(c.ratios[0]) + "," + std::to_string(c.ratios[1]) + "," + std::to_string(c.ratios[2]);
        }}},
      {"run.checkpoint", string_field(&RunConfig::checkpoint)},
      {"eval.split", split_field(&RunConfig::eval_split)},
      {"eval.lpips_sidecar", string_field(&RunConfig::lpips_sidecar)},
      {"ablation.grids",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          try {
            c.ablation_grids = parse_ablation_grids(v);
          } catch (const Error& e) {
            fail(ErrorKind::kParse, "key '" + k + "': " + e.what());
          }
        },
        [](const RunConfig& c) { return format_ablation_grids(c.ablation_grids); }}},
      {"ablation.split", split_field(&RunConfig::ablation_split)},
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& [name, field] : fields())
    if (name == key) return &field;
  return nullptr;
}

}  // namespace

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [name, field] : fields()) out.push_back(name);
    return out;
  }();
  return keys;
}

void set_run_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  const Field* field = find_field(key);
  if (field == nullptr) fail(ErrorKind::kParse, "unknown key '" + key + "'");
  field->set(config, key, value);
  config.explicit_keys.insert(key);
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(number) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::kParse, where + "expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (config.is_set(key)) fail(ErrorKind::kParse, where + "duplicate key '" + key + "'");
    try {
      set_run_config_value(config, key, value);
    } catch (const Error& e) {
      fail(e.kind(), where + e.what());
    }
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kMissingFile, "cannot open config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.string());
}

std::string serialize_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(config) + "\n";
  return out;
}

}  // namespace sisn::app
