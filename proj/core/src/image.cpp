#include "sisn/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sisn/rng.hpp"

namespace sisn {

ImageU8::ImageU8(int w, int h, std::uint8_t fill) : width(w), height(h) {
  require(w >= 1 && h >= 1, ErrorKind::kInvalidArgument,
          "image dimensions must be positive, got " + std::to_string(w) + "x" + std::to_string(h));
  pixels.assign(static_cast<std::size_t>(w) * h * 3, fill);
}

namespace {

constexpr std::array<std::uint8_t, 8> kPngSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

}  // namespace

ImageU8 load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in || std::filesystem::is_directory(path)) fail(ErrorKind::kMissingFile, "cannot open image '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < kPngSignature.size() || !std::equal(kPngSignature.begin(), kPngSignature.end(), bytes.begin()))
    fail(ErrorKind::kUnsupportedFormat, "'" + path.string() + "' is not a PNG file");

  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()) == 0) {
    const std::string message = image.message;
    png_image_free(&image);
    fail(ErrorKind::kTruncatedData, "cannot read PNG header of '" + path.string() + "': " + message);
  }
  image.format = PNG_FORMAT_RGB;
  ImageU8 out(static_cast<int>(image.width), static_cast<int>(image.height));
  if (png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr) == 0) {
    const std::string message = image.message;
    png_image_free(&image);
    fail(ErrorKind::kTruncatedData, "truncated or damaged PNG '" + path.string() + "': " + message);
  }
  return out;
}

void save_image(const ImageU8& img, const std::filesystem::path& path) {
  require(img.width >= 1 && img.height >= 1 && img.pixels.size() == static_cast<std::size_t>(img.width) * img.height * 3,
          ErrorKind::kInvalidArgument, "cannot save malformed image");
  const auto parent = path.parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent))
    fail(ErrorKind::kWriteFailure, "directory '" + parent.string() + "' does not exist");

  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr) == 0) {
    const std::string message = image.message;
    png_image_free(&image);
    fail(ErrorKind::kWriteFailure, "cannot write '" + path.string() + "': " + message);
  }
}

double cubic_kernel(double distance) {
  constexpr double a = -0.5;
  const double x = std::abs(distance);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace {

// Four taps per output sample along one axis.
struct Taps {
  std::array<int, 4> index;
  std::array<double, 4> weight;
};

std::vector<Taps> axis_taps(int in_size, int out_size) {
  std::vector<Taps> taps(static_cast<std::size_t>(out_size));
  const double ratio = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    const double center = (o + 0.5) * ratio - 0.5;
    const int base = static_cast<int>(std::floor(center));
    const double frac = center - base;
    Taps& t = taps[static_cast<std::size_t>(o)];
    for (int k = 0; k < 4; ++k) {
      t.index[k] = std::clamp(base - 1 + k, 0, in_size - 1);
      t.weight[k] = cubic_kernel(frac - (k - 1));
    }
  }
  return taps;
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

}  // namespace

ImageU8 bicubic_resize(const ImageU8& img, int out_width, int out_height) {
  require(out_width >= 1 && out_height >= 1, ErrorKind::kInvalidArgument,
          "bicubic_resize target must be at least 1x1, got " + std::to_string(out_width) + "x" +
              std::to_string(out_height));
  if (out_width == img.width && out_height == img.height) return img;

  const auto xt = axis_taps(img.width, out_width);
  const auto yt = axis_taps(img.height, out_height);

  // Horizontal pass kept in double; rounding happens once at the end.
  std::vector<double> rows(static_cast<std::size_t>(img.height) * out_width * 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < out_width; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += xt[x].weight[k] * img.at(xt[x].index[k], y, c);
        rows[(static_cast<std::size_t>(y) * out_width + x) * 3 + c] = acc;
      }

  ImageU8 out(out_width, out_height);
  for (int y = 0; y < out_height; ++y)
    for (int x = 0; x < out_width; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k)
          acc += yt[y].weight[k] * rows[(static_cast<std::size_t>(yt[y].index[k]) * out_width + x) * 3 + c];
        out.at(x, y, c) = quantize(acc);
      }
  return out;
}

ImageU8 crop_to_multiple(const ImageU8& img, int scale) {
  require(scale >= 1, ErrorKind::kInvalidArgument, "scale must be positive");
  const int w = img.width - img.width % scale;
  const int h = img.height - img.height % scale;
  require(w >= 1 && h >= 1, ErrorKind::kInvalidArgument,
          "image " + std::to_string(img.width) + "x" + std::to_string(img.height) + " is smaller than scale " +
              std::to_string(scale));
  if (w == img.width && h == img.height) return img;
  ImageU8 out(w, h);
  for (int y = 0; y < h; ++y)
    std::copy_n(img.pixels.begin() + static_cast<std::ptrdiff_t>(y) * img.width * 3, w * 3,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * w * 3);
  return out;
}

ImageU8 apply_dihedral(const ImageU8& img, const AugmentSpec& spec) {
  require(spec.rotation == 0 || spec.rotation == 90 || spec.rotation == 180 || spec.rotation == 270,
          ErrorKind::kInvalidArgument, "rotation must be 0, 90, 180 or 270, got " + std::to_string(spec.rotation));
  const bool swap = spec.rotation == 90 || spec.rotation == 270;
  const int ow = swap ? img.height : img.width;
  const int oh = swap ? img.width : img.height;
  ImageU8 out(ow, oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const int rx = spec.hflip ? ow - 1 - x : x;  // position before the mirror
      int sx = 0, sy = 0;
      switch (spec.rotation) {
        case 0: sx = rx; sy = y; break;
        case 90: sx = y; sy = img.height - 1 - rx; break;
        case 180: sx = img.width - 1 - rx; sy = img.height - 1 - y; break;
        case 270: sx = img.width - 1 - y; sy = rx; break;
      }
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  return out;
}

SamplePair augment(const SamplePair& pair, const AugmentSpec& spec) {
  return {apply_dihedral(pair.hr, spec), apply_dihedral(pair.lr, spec), pair.scale, pair.source_id};
}

AugmentSpec random_augment(Rng& rng) {
  const auto code = static_cast<int>(rng.below(8));
  return {90 * (code / 2), code % 2 == 1};
}

SamplePair random_crop_pair(const SamplePair& pair, int lr_patch, Rng& rng) {
  require(lr_patch >= 1, ErrorKind::kInvalidArgument, "patch size must be positive");
  require(lr_patch <= pair.lr.width && lr_patch <= pair.lr.height, ErrorKind::kInvalidArgument,
          "patch " + std::to_string(lr_patch) + " larger than LR image " + std::to_string(pair.lr.width) + "x" +
              std::to_string(pair.lr.height) + " of '" + pair.source_id + "'");
  const int ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(pair.lr.width - lr_patch + 1)));
  const int oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(pair.lr.height - lr_patch + 1)));
  auto crop = [](const ImageU8& img, int x0, int y0, int size) {
    ImageU8 out(size, size);
    for (int y = 0; y < size; ++y)
      std::copy_n(img.pixels.begin() + (static_cast<std::ptrdiff_t>(y0 + y) * img.width + x0) * 3, size * 3,
                  out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * size * 3);
    return out;
  };
  const int s = pair.scale;
  return {crop(pair.hr, ox * s, oy * s, lr_patch * s), crop(pair.lr, ox, oy, lr_patch), s, pair.source_id};
}

SamplePair random_crop_pair(const SamplePair& pair, int lr_patch, std::uint64_t seed) {
  Rng rng(seed);
  return random_crop_pair(pair, lr_patch, rng);
}

template <typename T>
void write_tensor(const ImageU8& img, Tensor<T>& batch, int n) {
  const Shape s = batch.shape();
  require(s.c == 3 && s.h == img.height && s.w == img.width && n >= 0 && n < s.n, ErrorKind::kShapeMismatch,
          "image " + std::to_string(img.width) + "x" + std::to_string(img.height) + " does not fit batch slot " +
              std::to_string(n) + " of " + s.str());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) batch.at(n, c, y, x) = static_cast<T>(img.at(x, y, c)) / T{255};
}

template <typename T>
Tensor<T> to_tensor(const ImageU8& img) {
  Tensor<T> out(Shape{1, 3, img.height, img.width});
  write_tensor(img, out, 0);
  return out;
}

template <typename T>
ImageU8 to_image(const Tensor<T>& tensor, int n) {
  const Shape s = tensor.shape();
  require(s.c == 3 && n >= 0 && n < s.n, ErrorKind::kShapeMismatch,
          "to_image expects an N x 3 x H x W tensor, got " + s.str());
  ImageU8 out(s.w, s.h);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        const double v = static_cast<double>(tensor.at(n, c, y, x));
        out.at(x, y, c) = std::isnan(v) ? 0 : quantize(v * 255.0);
      }
  return out;
}

template Tensor<float> to_tensor<float>(const ImageU8&);
template Tensor<double> to_tensor<double>(const ImageU8&);
template void write_tensor<float>(const ImageU8&, Tensor<float>&, int);
template void write_tensor<double>(const ImageU8&, Tensor<double>&, int);
template ImageU8 to_image<float>(const Tensor<float>&, int);
template ImageU8 to_image<double>(const Tensor<double>&, int);

}  // namespace sisn
