#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace sisn {

// Stateless 64-bit mixer.
std::uint64_t mix64(std::uint64_t x);

// Seed for a per-sample stream: a pure function of (global seed, sample id,
// epoch), so results do not depend on processing order.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view sample_id, std::int64_t epoch);

// Deterministic generator with portable sampling helpers (the standard
// distributions are implementation-defined) and a serializable state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, bound), unbiased.
  std::uint64_t below(std::uint64_t bound);

  // Uniform in [0, 1).
  double uniform();

  // Standard normal via Box-Muller.
  double normal();

  template <typename Item>
  void shuffle(std::vector<Item>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::string state() const;
  void set_state(const std::string& state);

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::mt19937_64 engine_;
};

}  // namespace sisn
