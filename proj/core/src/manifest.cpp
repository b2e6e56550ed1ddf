#include "sisn/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sisn/rng.hpp"

namespace sisn {

namespace fs = std::filesystem;

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  fail(ErrorKind::kParse, "unknown split '" + std::string(name) + "' (expected train, val or test)");
}

std::array<std::size_t, 3> Manifest::counts() const {
  std::array<std::size_t, 3> out{};
  for (const auto& e : entries) ++out[static_cast<std::size_t>(e.split)];
  return out;
}

std::vector<ManifestEntry> Manifest::split(Split which) const {
  std::vector<ManifestEntry> out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
               [which](const ManifestEntry& e) { return e.split == which; });
  return out;
}

std::array<std::size_t, 3> partition_sizes(std::size_t count, const std::array<int, 3>& ratios) {
  for (const int r : ratios) require(r >= 0, ErrorKind::kInvalidArgument, "split ratios must be non-negative");
  const long long total = std::accumulate(ratios.begin(), ratios.end(), 0LL);
  require(total > 0, ErrorKind::kInvalidArgument, "split ratios must not all be zero");

  std::array<std::size_t, 3> sizes{};
  std::array<long long, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const long long scaled = static_cast<long long>(count) * ratios[i];
    sizes[i] = static_cast<std::size_t>(scaled / total);
    remainder[i] = scaled % total;
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < count; ++k, ++assigned) ++sizes[order[k % 3]];
  return sizes;
}

namespace {

std::string relative_to(const fs::path& target, const fs::path& base) {
  const fs::path rel = fs::proximate(target, base.empty() ? fs::path(".") : base);
  return rel.generic_string();
}

}  // namespace

Manifest build_manifest(const fs::path& hr_dir, int scale, const std::array<int, 3>& ratios, std::uint64_t seed,
                        const fs::path& out_dir) {
  require(scale == 2 || scale == 4 || scale == 8, ErrorKind::kInvalidArgument,
          "unsupported scale " + std::to_string(scale) + " (expected 2, 4 or 8)");
  if (!fs::is_directory(hr_dir)) fail(ErrorKind::kMissingFile, "HR directory '" + hr_dir.string() + "' not found");

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(hr_dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.push_back(entry.path());
  }
  require(!files.empty(), ErrorKind::kInvalidArgument, "no PNG images in '" + hr_dir.string() + "'");
  std::sort(files.begin(), files.end());

  Rng rng(seed);
  rng.shuffle(files);
  const auto sizes = partition_sizes(files.size(), ratios);

  const fs::path lr_dir = out_dir / ("lr_x" + std::to_string(scale));
  const fs::path hr_crop_dir = out_dir / ("hr_x" + std::to_string(scale));
  fs::create_directories(lr_dir);

  Manifest manifest;
  manifest.seed = seed;
  manifest.scale = scale;
  manifest.ratios = ratios;
  manifest.source_dir = hr_dir.generic_string();
  std::size_t index = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<fs::path> group(files.begin() + static_cast<std::ptrdiff_t>(index),
                                files.begin() + static_cast<std::ptrdiff_t>(index + sizes[s]));
    index += sizes[s];
    std::sort(group.begin(), group.end());
    for (const auto& file : group) {
      ManifestEntry e;
      e.split = static_cast<Split>(s);
      e.source_id = file.stem().string();
      e.scale = scale;
      const ImageU8 original = load_image(file);
      const ImageU8 hr = crop_to_multiple(original, scale);
      e.hr_path = file;
      if (hr.width != original.width || hr.height != original.height) {
        fs::create_directories(hr_crop_dir);
        e.hr_path = hr_crop_dir / (e.source_id + ".png");
        save_image(hr, e.hr_path);
      }
      e.lr_path = lr_dir / (e.source_id + ".png");
      save_image(bicubic_resize(hr, hr.width / scale, hr.height / scale), e.lr_path);
      manifest.entries.push_back(std::move(e));
    }
  }
  return manifest;
}

void write_manifest(const Manifest& m, const fs::path& path) {
  const fs::path base = path.parent_path();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kWriteFailure, "cannot write manifest '" + path.string() + "'");
  const auto counts = m.counts();
  out << "# sisn-manifest v1\n";
  out << "seed\t" << m.seed << "\n";
  out << "scale\t" << m.scale << "\n";
  out << "ratios\t" << m.ratios[0] << "\t" << m.ratios[1] << "\t" << m.ratios[2] << "\n";
  out << "counts\t" << counts[0] << "\t" << counts[1] << "\t" << counts[2] << "\n";
  out << "source\t" << m.source_dir << "\n";
  for (const auto& e : m.entries) {
    out << "sample\t" << split_name(e.split) << "\t" << e.source_id << "\t" << relative_to(e.hr_path, base) << "\t"
        << relative_to(e.lr_path, base) << "\t" << e.scale << "\n";
  }
  if (!out) fail(ErrorKind::kWriteFailure, "failed writing manifest '" + path.string() + "'");
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

long long parse_int(const std::string& text, const std::string& where) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used == text.size()) return v;
  } catch (...) {
  }
  fail(ErrorKind::kParse, where + ": expected an integer, got '" + text + "'");
}

}  // namespace

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kMissingFile, "cannot open manifest '" + path.string() + "'");
  const fs::path base = path.parent_path();
  Manifest m;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  std::array<std::size_t, 3> declared{};
  bool counts_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line_no == 1) {
        require(line == "# sisn-manifest v1", ErrorKind::kVersionMismatch, where + ": unsupported manifest header '" + line + "'");
        header_seen = true;
      }
      continue;
    }
    const auto f = split_tabs(line);
    const std::string& key = f[0];
    auto expect = [&](std::size_t n) {
      require(f.size() == n, ErrorKind::kParse,
              where + ": '" + key + "' record needs " + std::to_string(n - 1) + " fields, got " + std::to_string(f.size() - 1));
    };
    if (key == "seed") {
      expect(2);
      m.seed = static_cast<std::uint64_t>(parse_int(f[1], where));
    } else if (key == "scale") {
      expect(2);
      m.scale = static_cast<int>(parse_int(f[1], where));
    } else if (key == "ratios") {
      expect(4);
      for (std::size_t i = 0; i < 3; ++i) m.ratios[i] = static_cast<int>(parse_int(f[i + 1], where));
    } else if (key == "counts") {
      expect(4);
      for (std::size_t i = 0; i < 3; ++i) declared[i] = static_cast<std::size_t>(parse_int(f[i + 1], where));
      counts_seen = true;
    } else if (key == "source") {
      expect(2);
      m.source_dir = f[1];
    } else if (key == "sample") {
      expect(6);
      ManifestEntry e;
      e.split = parse_split(f[1]);
      e.source_id = f[2];
      e.hr_path = base / f[3];
      e.lr_path = base / f[4];
      e.scale = static_cast<int>(parse_int(f[5], where));
      require(e.scale == m.scale, ErrorKind::kScaleMismatch,
              where + ": sample scale " + f[5] + " differs from manifest scale " + std::to_string(m.scale));
      m.entries.push_back(std::move(e));
    } else {
      fail(ErrorKind::kParse, where + ": unknown record '" + key + "'");
    }
  }
  require(header_seen, ErrorKind::kVersionMismatch, "'" + path.string() + "' is not a sisn manifest");
  if (counts_seen)
    require(declared == m.counts(), ErrorKind::kCorrupt, "'" + path.string() + "': sample counts disagree with header");
  return m;
}

SamplePair load_pair(const ManifestEntry& entry) {
  SamplePair pair{load_image(entry.hr_path), load_image(entry.lr_path), entry.scale, entry.source_id};
  require(pair.lr.width * entry.scale == pair.hr.width && pair.lr.height * entry.scale == pair.hr.height,
          ErrorKind::kShapeMismatch,
          "sample '" + entry.source_id + "': LR " + std::to_string(pair.lr.width) + "x" + std::to_string(pair.lr.height) +
              " is not HR " + std::to_string(pair.hr.width) + "x" + std::to_string(pair.hr.height) + " / " +
              std::to_string(entry.scale));
  return pair;
}

}  // namespace sisn
