#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sisn/image.hpp"

namespace sisn {

inline constexpr double kPsnrCap = 100.0;
inline constexpr int kSsimWindow = 8;

// 10 log10(255^2 / MSE) over every RGB sample; identical images give kPsnrCap.
double psnr(const ImageU8& a, const ImageU8& b);

// BT.601 luma, in [0, 255].
std::vector<double> luma(const ImageU8& image);

// Mean SSIM over all 8x8 windows (stride 1, uniform weights, population
// statistics) of the luma plane, C1 = (0.01 * 255)^2, C2 = (0.03 * 255)^2.
double ssim(const ImageU8& a, const ImageU8& b);

// 0.5 * (SSIM + (1 - LPIPS)).
double mps(double ssim_value, double lpips_value);

// Present only when LPIPS is known.
std::optional<double> mps(double ssim_value, std::optional<double> lpips_value);

using LpipsMap = std::map<std::string, double>;

// Parses "id value" lines. Blank lines and '#' comments are skipped.
// Malformed lines, negative values and duplicate ids are rejected with the
// line number.
LpipsMap lpips_ingest(const std::filesystem::path& sidecar);
LpipsMap parse_lpips(const std::string& text, const std::string& origin = "<text>");

}  // namespace sisn
