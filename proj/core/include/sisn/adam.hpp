#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sisn/tensor.hpp"

namespace sisn {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double base_lr = 1e-4;

  friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
};

// First/second moment estimates, one pair per parameter tensor.
template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::int64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;

  static AdamState zeros_like(std::span<const Tensor<T>> params, const AdamHyper& hyper) {
    AdamState state;
    state.hyper = hyper;
    for (const auto& p : params) {
      state.m.emplace_back(p.shape());
      state.v.emplace_back(p.shape());
    }
    return state;
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// One bias-corrected Adam update of every parameter at learning rate lr.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, AdamState<T>& state, double lr);

}  // namespace sisn
