#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sisn/tape.hpp"

namespace sisn {

// Architecture hyperparameters.
struct SisnConfig {
  int num_esag = 10;   // G
  int num_isab = 10;   // I, per group
  int channels = 64;   // C
  int splits = 2;      // r
  int scale = 4;       // 2, 4 or 8
  int reduction = 4;   // bottleneck divisor of the attention 1x1 convs

  // Throws kInvalidArgument naming the first violated constraint.
  void validate() const;

  int split_channels() const { return channels / splits; }
  int bottleneck() const;
  int upscale_stages() const;

  static SisnConfig paper_default() { return {}; }
  static SisnConfig toy() { return {2, 2, 16, 2, 2, 4}; }

  friend bool operator==(const SisnConfig&, const SisnConfig&) = default;
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;

  friend bool operator==(const Parameter&, const Parameter&) = default;
};

// Tape handles of one block's parameters.
struct ConvVars {
  Var weight;
  Var bias;
};

struct IsaVars {
  ConvVars reduce;  // 1x1, C/r -> bottleneck
  ConvVars expand;  // 1x1, bottleneck -> C (r x C/r logits)
};

struct IsabVars {
  ConvVars conv1;
  ConvVars conv2;
  IsaVars isa;
};

struct EsagVars {
  std::vector<IsabVars> isabs;
  ConvVars tail;  // 3x3 conv closing the texture path
  IsaVars isa;    // structure path
};

struct SisnVars {
  ConvVars coarse;
  std::vector<EsagVars> esags;
  std::vector<ConvVars> upscale;
  ConvVars recon;
};

// Internal-feature split attention. The r weighted splits are summed into one
// C/r-channel feature, which is repeated r times to restore C channels.
template <typename T>
Var isa_forward(Tape<T>& tape, Var x, const IsaVars& params, int splits);

// x + ISA(conv3x3(relu(conv3x3(x)))).
template <typename T>
Var isab_forward(Tape<T>& tape, Var x, const IsabVars& params, int splits);

// conv3x3(ISAB_I(...ISAB_1(x))) + ISA(x).
template <typename T>
Var esag_forward(Tape<T>& tape, Var x, const EsagVars& params, int splits);

// coarse conv -> G groups -> log2(s) x (conv C->4C, pixel_shuffle 2) -> conv C->3.
template <typename T>
Var sisn_forward(Tape<T>& tape, Var lr_image, const SisnVars& params, const SisnConfig& config);

// Full parameter set, in a fixed canonical order derived from the config.
template <typename T>
class ModelParams {
 public:
  ModelParams() = default;

  // Conv weights ~ N(0, 2 / fan_in), biases zero.
  static ModelParams initialize(const SisnConfig& config, std::uint64_t seed);
  static ModelParams zeros(const SisnConfig& config);

  const SisnConfig& config() const { return config_; }
  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }

  Parameter<T>& find(const std::string& name);
  const Parameter<T>& find(const std::string& name) const;

  std::size_t parameter_count() const;

  // Registers every parameter as a tape leaf; leaves[i] matches params()[i].
  SisnVars bind(Tape<T>& tape, bool requires_grad, std::vector<Var>* leaves = nullptr) const;

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.config_ = config_;
    for (const auto& p : params_) out.params_.push_back({p.name, p.value.template cast<U>()});
    return out;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  template <typename U>
  friend class ModelParams;

  SisnConfig config_;
  std::vector<Parameter<T>> params_;
};

struct ParameterSpec {
  std::string name;
  Shape shape;
  int fan_in = 0;  // 0 for biases
};

// Names and shapes of every parameter, in canonical order.
std::vector<ParameterSpec> parameter_specs(const SisnConfig& config);

// Forward pass without gradient tracking.
template <typename T>
Tensor<T> infer(const ModelParams<T>& model, const Tensor<T>& lr_image);

}  // namespace sisn
