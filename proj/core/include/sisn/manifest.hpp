#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sisn/image.hpp"

namespace sisn {

enum class Split { kTrain, kVal, kTest };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

struct ManifestEntry {
  Split split = Split::kTrain;
  std::string source_id;
  std::filesystem::path hr_path;  // resolved (absolute or cwd-relative)
  std::filesystem::path lr_path;
  int scale = 1;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

// Dataset partition with generated LR images.
//
// On disk the manifest is tab-separated text:
//
//   # sisn-manifest v1
//   seed<TAB>42
//   scale<TAB>4
//   ratios<TAB>8<TAB>1<TAB>1
//   counts<TAB>8<TAB>1<TAB>1
//   source<TAB><hr_dir>
//   sample<TAB><split><TAB><id><TAB><hr path><TAB><lr path><TAB><scale>
//
// Sample paths are stored relative to the manifest's directory.
struct Manifest {
  std::uint64_t seed = 0;
  int scale = 4;
  std::array<int, 3> ratios{8, 1, 1};
  std::string source_dir;
  std::vector<ManifestEntry> entries;

  std::array<std::size_t, 3> counts() const;
  std::vector<ManifestEntry> split(Split which) const;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

// Split sizes by largest remainder: floor(n * r_i / sum) plus leftovers to
// the largest fractional parts, earlier splits first on ties.
std::array<std::size_t, 3> partition_sizes(std::size_t count, const std::array<int, 3>& ratios);

// Scans hr_dir for PNG images, shuffles them with `seed`, partitions by
// ratios and writes bicubic LR images (and scale-aligned HR crops where the
// source dimensions are not multiples of scale) under out_dir.
Manifest build_manifest(const std::filesystem::path& hr_dir, int scale, const std::array<int, 3>& ratios,
                        std::uint64_t seed, const std::filesystem::path& out_dir);

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

// Loads an entry's images and checks the LR/HR alignment invariant.
SamplePair load_pair(const ManifestEntry& entry);

}  // namespace sisn
