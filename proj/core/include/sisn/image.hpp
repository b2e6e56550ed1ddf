#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sisn/tensor.hpp"

namespace sisn {

// 8-bit RGB image, interleaved, row-major.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  ImageU8() = default;
  ImageU8(int w, int h, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  friend bool operator==(const ImageU8&, const ImageU8&) = default;
};

// Aligned LR/HR pair; lr is exactly hr / scale in both dimensions.
struct SamplePair {
  ImageU8 hr;
  ImageU8 lr;
  int scale = 1;
  std::string source_id;

  friend bool operator==(const SamplePair&, const SamplePair&) = default;
};

// Element of the dihedral group of the square: rotate clockwise by
// `rotation` degrees, then optionally mirror left-right.
struct AugmentSpec {
  int rotation = 0;  // 0, 90, 180 or 270
  bool hflip = false;

  friend bool operator==(const AugmentSpec&, const AugmentSpec&) = default;
};

// PNG I/O. Grayscale, palette, alpha and 16-bit inputs are converted to 8-bit
// RGB. Errors: kMissingFile, kUnsupportedFormat, kTruncatedData, kWriteFailure.
ImageU8 load_image(const std::filesystem::path& path);
void save_image(const ImageU8& image, const std::filesystem::path& path);

// Cubic convolution kernel with a = -0.5.
double cubic_kernel(double distance);

// Separable bicubic resampling, edge-clamped, rounded to nearest.
ImageU8 bicubic_resize(const ImageU8& image, int out_width, int out_height);

// Top-left crop so both dimensions are multiples of scale.
ImageU8 crop_to_multiple(const ImageU8& image, int scale);

ImageU8 apply_dihedral(const ImageU8& image, const AugmentSpec& spec);
SamplePair augment(const SamplePair& pair, const AugmentSpec& spec);

// Draws one of the 8 dihedral transforms uniformly.
class Rng;
AugmentSpec random_augment(Rng& rng);

// Aligned random crop: LR patch of lr_patch^2, HR patch of (scale*lr_patch)^2.
SamplePair random_crop_pair(const SamplePair& pair, int lr_patch, std::uint64_t seed);

// Same crop driven by an existing generator.
SamplePair random_crop_pair(const SamplePair& pair, int lr_patch, Rng& rng);

// [0,255] -> [0,1], shape 1 x 3 x H x W.
template <typename T>
Tensor<T> to_tensor(const ImageU8& image);

// Writes image into batch slot n of an existing N x 3 x H x W tensor.
template <typename T>
void write_tensor(const ImageU8& image, Tensor<T>& batch, int n);

// x * 255, rounded half up, clamped to [0,255]. Uses batch slot n.
template <typename T>
ImageU8 to_image(const Tensor<T>& tensor, int n = 0);

}  // namespace sisn
