#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "sisn/image.hpp"
#include "sisn/rng.hpp"

namespace sisn::testing {

// Deterministic face-like test card: background gradient, hair, a skin
// ellipse, eyes, brows and a mouth, plus mild per-pixel noise. Sharp edges
// give bicubic upscaling something to lose.
inline ImageU8 synthetic_face(int width, int height, std::uint64_t seed) {
  Rng rng(seed);
  ImageU8 img(width, height);
  const double cx = width * (0.45 + 0.1 * rng.uniform());
  const double cy = height * (0.5 + 0.08 * rng.uniform());
  const double rx = width * (0.26 + 0.06 * rng.uniform());
  const double ry = height * (0.34 + 0.06 * rng.uniform());
  const double skin[3] = {170 + 60 * rng.uniform(), 120 + 50 * rng.uniform(), 90 + 50 * rng.uniform()};
  const double hair[3] = {20 + 80 * rng.uniform(), 15 + 50 * rng.uniform(), 10 + 40 * rng.uniform()};
  const double bg0[3] = {255 * rng.uniform(), 255 * rng.uniform(), 255 * rng.uniform()};
  const double bg1[3] = {255 * rng.uniform(), 255 * rng.uniform(), 255 * rng.uniform()};
  const double eye_dx = rx * 0.45, eye_y = cy - ry * 0.2, eye_r = std::max(1.5, rx * 0.14);
  const double stripe = 2.0 + 2.0 * rng.uniform();

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double t = static_cast<double>(x + y) / (width + height);
      double c[3];
      for (int k = 0; k < 3; ++k) c[k] = bg0[k] * (1 - t) + bg1[k] * t;
      const double ex = (x - cx) / rx, ey = (y - cy) / ry;
      const double d = ex * ex + ey * ey;
      if (d < 1.35 && ey < -0.35) {
        const double s = std::sin((x + 0.5 * y) * 3.14159 / stripe) > 0 ? 1.0 : 0.7;
        for (int k = 0; k < 3; ++k) c[k] = hair[k] * s;
      } else if (d < 1.0) {
        for (int k = 0; k < 3; ++k) c[k] = skin[k] * (1.0 - 0.15 * ey);
        for (const double side : {-1.0, 1.0}) {
          const double dx = x - (cx + side * eye_dx), dy = y - eye_y;
          if (dx * dx + dy * dy < eye_r * eye_r) {
            c[0] = 30;
            c[1] = 25;
            c[2] = 20;
          }
          if (std::abs(dy + eye_r * 1.8) < 1.0 && std::abs(dx) < eye_r * 1.6)
            for (int k = 0; k < 3; ++k) c[k] = hair[k];
        }
        if (std::abs(y - (cy + ry * 0.5)) < std::max(1.0, ry * 0.05) && std::abs(x - cx) < rx * 0.4) {
          c[0] = 150;
          c[1] = 40;
          c[2] = 50;
        }
      }
      for (int k = 0; k < 3; ++k) {
        const double v = c[k] + 6.0 * (rng.uniform() - 0.5);
        img.at(x, y, k) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return img;
}

// Writes `count` faces as face_<i>.png into dir.
inline void write_synthetic_faces(const std::filesystem::path& dir, int count, int width, int height,
                                  std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "face_%02d.png", i);
    save_image(synthetic_face(width, height, seed * 1000 + static_cast<std::uint64_t>(i)), dir / name);
  }
}

}  // namespace sisn::testing
