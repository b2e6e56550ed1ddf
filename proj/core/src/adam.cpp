#include "sisn/adam.hpp"

#include <cmath>
#include <string>

namespace sisn {

template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, AdamState<T>& state, double lr) {
  require(params.size() == grads.size() && params.size() == state.m.size() && params.size() == state.v.size(),
          ErrorKind::kShapeMismatch,
          "adam_step: " + std::to_string(params.size()) + " params, " + std::to_string(grads.size()) + " grads, " +
              std::to_string(state.m.size()) + " moment slots");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i]->shape() == grads[i].shape() && params[i]->shape() == state.m[i].shape(),
            ErrorKind::kShapeMismatch,
            "adam_step: parameter " + std::to_string(i) + " has shape " + params[i]->shape().str() +
                " but gradient " + grads[i].shape().str());
  }

  ++state.step;
  const AdamHyper& hp = state.hyper;
  const double correction1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i];
    const Tensor<T>& g = grads[i];
    Tensor<T>& m = state.m[i];
    Tensor<T>& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = hp.beta1 * static_cast<double>(m[j]) + (1.0 - hp.beta1) * gj;
      const double vj = hp.beta2 * static_cast<double>(v[j]) + (1.0 - hp.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = lr * (mj / correction1) / (std::sqrt(vj / correction2) + hp.eps);
      p[j] = static_cast<T>(static_cast<double>(p[j]) - update);
    }
  }
}

template void adam_step<float>(std::span<Tensor<float>* const>, std::span<const Tensor<float>>, AdamState<float>&,
                               double);
template void adam_step<double>(std::span<Tensor<double>* const>, std::span<const Tensor<double>>,
                                AdamState<double>&, double);

}  // namespace sisn
