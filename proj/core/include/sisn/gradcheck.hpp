#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sisn/model.hpp"

namespace sisn {

// Central-difference estimate (f(x + h e_i) - f(x - h e_i)) / 2h for every
// element of x.
template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T step);

// |a - n| / max(|a|, |n|, kRelativeErrorFloor). The floor keeps coordinates
// whose true gradient is zero from dividing by round-off.
inline constexpr double kRelativeErrorFloor = 1e-6;
double relative_error(double analytic, double numeric);

struct GradcheckResult {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  bool passed = false;
};

// Builds a taped computation from the given leaves and returns its output.
using GraphBuilder = std::function<Var(Tape<double>&, std::span<const Var>)>;

struct GradcheckOptions {
  double step = 1e-4;
  double tolerance = 1e-4;
  // Per input tensor; 0 checks every coordinate.
  std::size_t max_coordinates = 0;
  // Number of input tensors to probe (the first is always included); 0 = all.
  std::size_t max_tensors = 0;
  std::uint64_t seed = 1;
};

// Compares backward() against finite differences of <out, R> for a fixed
// random projection R, over every input tensor.
GradcheckResult gradcheck(const std::string& name, const GraphBuilder& build, const std::vector<Tensor<double>>& inputs,
                          const GradcheckOptions& options);

enum class GradcheckPreset { kToy, kPaperDefault };

// Every differentiable op, the attention blocks and the full model.
std::vector<GradcheckResult> run_gradcheck_suite(GradcheckPreset preset, std::uint64_t seed = 7);

}  // namespace sisn
