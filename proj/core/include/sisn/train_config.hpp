#pragma once

#include <cstdint>

#include "sisn/adam.hpp"
#include "sisn/model.hpp"

namespace sisn {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 8;
  double base_lr = 1e-4;
  int halve_every = 50;
  std::uint64_t seed = 0;
  SisnConfig model;
  int lr_patch = 48;  // LR patch side; 0 trains on whole images
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int checkpoint_every = 1;  // epochs between checkpoint writes

  void validate() const;
  AdamHyper adam() const { return {beta1, beta2, eps, base_lr}; }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// base_lr * 0.5^floor(epoch / halve_every), epochs counted from 0.
double lr_at_epoch(std::int64_t epoch, const TrainConfig& config);

}  // namespace sisn
