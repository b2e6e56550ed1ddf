#include "sisn/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sisn/trainer.hpp"

namespace sisn {

Upscaler identity_upscaler() {
  return [](const SamplePair& pair) { return pair.hr; };
}

Upscaler bicubic_upscaler() {
  return [](const SamplePair& pair) { return bicubic_resize(pair.lr, pair.hr.width, pair.hr.height); };
}

Upscaler model_upscaler(const ModelParams<float>& model) {
  return [&model](const SamplePair& pair) { return to_image(infer(model, to_tensor<float>(pair.lr))); };
}

MetricReport evaluate(std::span<const ManifestEntry> entries, const Upscaler& upscaler, const LpipsMap* lpips) {
  require(!entries.empty(), ErrorKind::kInvalidArgument, "nothing to evaluate: the split has no images");
  std::vector<ManifestEntry> ordered(entries.begin(), entries.end());
  std::sort(ordered.begin(), ordered.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.source_id < b.source_id; });

  MetricReport report;
  for (const auto& entry : ordered) {
    const SamplePair pair = load_pair(entry);
    if (pair.lr.width < 8 || pair.lr.height < 8 || pair.hr.width < kSsimWindow || pair.hr.height < kSsimWindow) {
      ++report.skipped;
      continue;
    }
    const ImageU8 estimate = upscaler(pair);
    ImageMetrics m;
    m.id = entry.source_id;
    m.psnr = psnr(estimate, pair.hr);
    m.ssim = ssim(estimate, pair.hr);
    if (lpips != nullptr) {
      if (const auto it = lpips->find(m.id); it != lpips->end()) m.lpips = it->second;
    }
    m.mps = mps(m.ssim, m.lpips);
    report.images.push_back(std::move(m));
  }

  if (!report.images.empty()) {
    double p = 0.0, s = 0.0, l = 0.0, q = 0.0;
    std::size_t with_lpips = 0;
    for (const auto& m : report.images) {
      p += m.psnr;
      s += m.ssim;
      if (m.lpips) {
        l += *m.lpips;
        q += *m.mps;
        ++with_lpips;
      }
    }
    const auto n = static_cast<double>(report.images.size());
    report.mean_psnr = p / n;
    report.mean_ssim = s / n;
    if (with_lpips > 0) {
      report.mean_lpips = l / static_cast<double>(with_lpips);
      report.mean_mps = q / static_cast<double>(with_lpips);
    }
  }
  return report;
}

MetricReport evaluate(const Checkpoint& checkpoint, const Manifest& manifest, Split split, const LpipsMap* lpips) {
  require(checkpoint.config.model.scale == manifest.scale, ErrorKind::kScaleMismatch,
          "checkpoint scale x" + std::to_string(checkpoint.config.model.scale) + " does not match manifest scale x" +
              std::to_string(manifest.scale));
  const auto entries = manifest.split(split);
  return evaluate(entries, model_upscaler(checkpoint.model), lpips);
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string optional_fixed(const std::optional<double>& v, int digits) { return v ? fixed(*v, digits) : "-"; }

}  // namespace

std::string format_report_table(const MetricReport& report) {
  std::size_t id_width = 4;
  for (const auto& m : report.images) id_width = std::max(id_width, m.id.size());
  auto pad = [&](const std::string& s) { return s + std::string(id_width - std::min(id_width, s.size()), ' '); };
  auto cell = [](const std::string& s) { return std::string(s.size() < 10 ? 10 - s.size() : 0, ' ') + s; };

  std::ostringstream out;
  out << pad("id") << cell("psnr_db") << cell("ssim") << cell("lpips") << cell("mps") << "\n";
  for (const auto& m : report.images) {
    out << pad(m.id) << cell(fixed(m.psnr, 4)) << cell(fixed(m.ssim, 6)) << cell(optional_fixed(m.lpips, 4))
        << cell(optional_fixed(m.mps, 4)) << "\n";
  }
  out << pad("mean") << cell(fixed(report.mean_psnr, 4)) << cell(fixed(report.mean_ssim, 6))
      << cell(optional_fixed(report.mean_lpips, 4)) << cell(optional_fixed(report.mean_mps, 4)) << "\n";
  out << "images " << report.images.size() << ", skipped " << report.skipped << "\n";
  return out.str();
}

std::string format_report_json(const MetricReport& report) {
  using nlohmann::ordered_json;
  auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
  ordered_json doc;
  doc["images"] = ordered_json::array();
  for (const auto& m : report.images) {
    ordered_json row;
    row["id"] = m.id;
    row["psnr"] = m.psnr;
    row["ssim"] = m.ssim;
    row["lpips"] = opt(m.lpips);
    row["mps"] = opt(m.mps);
    doc["images"].push_back(row);
  }
  doc["aggregate"] = {{"psnr", report.mean_psnr},
                      {"ssim", report.mean_ssim},
                      {"lpips", opt(report.mean_lpips)},
                      {"mps", opt(report.mean_mps)},
                      {"count", report.images.size()},
                      {"skipped", report.skipped}};
  return doc.dump(2) + "\n";
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kWriteFailure, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) fail(ErrorKind::kWriteFailure, "failed writing '" + path.string() + "'");
}

}  // namespace

void write_report(const MetricReport& report, const std::filesystem::path& text_path,
                  const std::filesystem::path& json_path) {
  write_text(text_path, format_report_table(report));
  write_text(json_path, format_report_json(report));
}

std::vector<AblationGrid> published_ablation_grids() {
  return {{AblationAxis::kEsag, 10, 5, 20}, {AblationAxis::kIsab, 10, 5, 20}};
}

std::vector<AblationConfig> ablation_configs(std::span<const AblationGrid> grids) {
  require(!grids.empty(), ErrorKind::kInvalidArgument, "ablation needs at least one grid");
  std::vector<AblationConfig> out;
  for (const auto& g : grids) {
    require(g.lo <= g.hi, ErrorKind::kInvalidArgument,
            "ablation range [" + std::to_string(g.lo) + ", " + std::to_string(g.hi) + "] is empty");
    require(g.lo >= 1 && g.fixed_value >= 1, ErrorKind::kInvalidArgument, "ablation depths must be >= 1");
    for (int v = g.lo; v <= g.hi; ++v) {
      const AblationConfig c = g.fixed_axis == AblationAxis::kEsag ? AblationConfig{g.fixed_value, v}
                                                                   : AblationConfig{v, g.fixed_value};
      if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    }
  }
  return out;
}

std::vector<AblationRow> ablation_sweep(std::span<const AblationGrid> grids, const Manifest& manifest,
                                        const TrainConfig& base, Split eval_split,
                                        const std::function<void(const AblationRow&)>& on_row) {
  const auto configs = ablation_configs(grids);
  std::vector<AblationRow> rows;
  for (const auto& c : configs) {
    TrainConfig cfg = base;
    cfg.model.num_esag = c.num_esag;
    cfg.model.num_isab = c.num_isab;
    const Checkpoint trained = train(manifest, cfg);
    const MetricReport report = evaluate(trained, manifest, eval_split);
    AblationRow row{c.num_esag, c.num_isab, report.mean_psnr, report.mean_ssim};
    if (on_row) on_row(row);
    rows.push_back(row);
  }
  return rows;
}

std::string format_ablation_csv(std::span<const AblationRow> rows) {
  std::ostringstream out;
  out << "G,I,psnr,ssim\n";
  for (const auto& r : rows) out << r.num_esag << "," << r.num_isab << "," << fixed(r.psnr, 4) << "," << fixed(r.ssim, 6) << "\n";
  return out.str();
}

std::vector<AblationGrid> parse_ablation_grids(const std::string& text) {
  std::vector<AblationGrid> grids;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ';')) {
    std::istringstream parts(item);
    std::string piece;
    while (std::getline(parts, piece, ',')) {
      piece.erase(0, piece.find_first_not_of(" \t"));
      piece.erase(piece.find_last_not_of(" \t") + 1);
      if (piece.empty()) continue;
      AblationGrid g;
      char axis[8] = {};
      int fixed_value = 0, lo = 0, hi = 0, used = 0;
      if (std::sscanf(piece.c_str(), "%4[a-z]:%d:%d-%d%n", axis, &fixed_value, &lo, &hi, &used) != 4 ||
          used != static_cast<int>(piece.size()) || (std::string(axis) != "esag" && std::string(axis) != "isab"))
        fail(ErrorKind::kParse, "bad ablation grid '" + piece + "' (expected esag:<G>:<lo>-<hi> or isab:<I>:<lo>-<hi>)");
      g.fixed_axis = std::string(axis) == "esag" ? AblationAxis::kEsag : AblationAxis::kIsab;
      g.fixed_value = fixed_value;
      g.lo = lo;
      g.hi = hi;
      grids.push_back(g);
    }
  }
  require(!grids.empty(), ErrorKind::kParse, "no ablation grids in '" + text + "'");
  return grids;
}

std::string format_ablation_grids(std::span<const AblationGrid> grids) {
  std::string out;
  for (const auto& g : grids) {
    if (!out.empty()) out += ";";
    out += (g.fixed_axis == AblationAxis::kEsag ? "esag:" : "isab:") + std::to_string(g.fixed_value) + ":" +
           std::to_string(g.lo) + "-" + std::to_string(g.hi);
  }
  return out;
}

}  // namespace sisn
