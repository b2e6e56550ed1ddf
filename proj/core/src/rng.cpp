#include "sisn/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "sisn/error.hpp"

namespace sisn {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view sample_id, std::int64_t epoch) {
  // FNV-1a over the id.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char ch : sample_id) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return mix64(mix64(global_seed) ^ mix64(h) ^ mix64(static_cast<std::uint64_t>(epoch) + 0x51ed27ULL));
}

std::uint64_t Rng::below(std::uint64_t bound) {
  require(bound > 0, ErrorKind::kInvalidArgument, "Rng::below needs a positive bound");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t draw = engine_();
  while (draw >= limit) draw = engine_();
  return draw % bound;
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::set_state(const std::string& state) {
  std::istringstream in(state);
  in >> engine_;
  require(!in.fail(), ErrorKind::kCorrupt, "invalid random generator state");
}

}  // namespace sisn
