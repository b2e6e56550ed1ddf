#include "sisn/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace sisn {

double psnr(const ImageU8& a, const ImageU8& b) {
  require(a.width == b.width && a.height == b.height, ErrorKind::kShapeMismatch,
          "psnr: image sizes differ (" + std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
              std::to_string(b.width) + "x" + std::to_string(b.height) + ")");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
    sum += d * d;
  }
  if (sum == 0.0) return kPsnrCap;
  const double mse = sum / static_cast<double>(a.pixels.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

std::vector<double> luma(const ImageU8& img) {
  std::vector<double> y(static_cast<std::size_t>(img.width) * img.height);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::uint8_t* p = &img.pixels[i * 3];
    y[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  }
  return y;
}

namespace {

// Sums over every k x k window (top-left anchored), computed separably.
std::vector<double> box_sums(const std::vector<double>& plane, int width, int height, int k) {
  const int ow = width - k + 1;
  const int oh = height - k + 1;
  std::vector<double> cols(static_cast<std::size_t>(oh) * width);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int d = 0; d < k; ++d) acc += plane[static_cast<std::size_t>(y + d) * width + x];
      cols[static_cast<std::size_t>(y) * width + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int d = 0; d < k; ++d) acc += cols[static_cast<std::size_t>(y) * width + x + d];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace

double ssim(const ImageU8& a, const ImageU8& b) {
  require(a.width == b.width && a.height == b.height, ErrorKind::kShapeMismatch,
          "ssim: image sizes differ (" + std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
              std::to_string(b.width) + "x" + std::to_string(b.height) + ")");
  require(a.width >= kSsimWindow && a.height >= kSsimWindow, ErrorKind::kInvalidArgument,
          "ssim: image " + std::to_string(a.width) + "x" + std::to_string(a.height) + " smaller than the " +
              std::to_string(kSsimWindow) + "x" + std::to_string(kSsimWindow) + " window");
  constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  constexpr double n = kSsimWindow * kSsimWindow;

  const auto ya = luma(a);
  const auto yb = luma(b);
  std::vector<double> aa(ya.size()), bb(ya.size()), ab(ya.size());
  for (std::size_t i = 0; i < ya.size(); ++i) {
    aa[i] = ya[i] * ya[i];
    bb[i] = yb[i] * yb[i];
    ab[i] = ya[i] * yb[i];
  }
  const int w = a.width, h = a.height;
  const auto sa = box_sums(ya, w, h, kSsimWindow);
  const auto sb = box_sums(yb, w, h, kSsimWindow);
  const auto saa = box_sums(aa, w, h, kSsimWindow);
  const auto sbb = box_sums(bb, w, h, kSsimWindow);
  const auto sab = box_sums(ab, w, h, kSsimWindow);

  double total = 0.0;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    const double mu_a = sa[i] / n;
    const double mu_b = sb[i] / n;
    const double var_a = saa[i] / n - mu_a * mu_a;
    const double var_b = sbb[i] / n - mu_b * mu_b;
    const double cov = sab[i] / n - mu_a * mu_b;
    total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
  }
  return total / static_cast<double>(sa.size());
}

double mps(double ssim_value, double lpips_value) { return 0.5 * (ssim_value + (1.0 - lpips_value)); }

std::optional<double> mps(double ssim_value, std::optional<double> lpips_value) {
  if (!lpips_value) return std::nullopt;
  return mps(ssim_value, *lpips_value);
}

LpipsMap parse_lpips(const std::string& text, const std::string& origin) {
  LpipsMap out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::string id, value_text, extra;
    if (!(fields >> id) || id[0] == '#') continue;
    if (!(fields >> value_text) || (fields >> extra))
      fail(ErrorKind::kParse, where + ": expected '<id> <lpips>', got '" + line + "'");
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(value_text, &used);
      if (used != value_text.size()) throw std::invalid_argument(value_text);
    } catch (const std::exception&) {
      fail(ErrorKind::kParse, where + ": '" + value_text + "' is not a number");
    }
    require(std::isfinite(value) && value >= 0.0, ErrorKind::kParse,
            where + ": LPIPS value " + value_text + " for '" + id + "' must be finite and non-negative");
    require(out.emplace(id, value).second, ErrorKind::kParse, where + ": duplicate image id '" + id + "'");
  }
  return out;
}

LpipsMap lpips_ingest(const std::filesystem::path& sidecar) {
  std::ifstream in(sidecar);
  if (!in) fail(ErrorKind::kMissingFile, "cannot open LPIPS sidecar '" + sidecar.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_lpips(text.str(), sidecar.string());
}

}  // namespace sisn
