#include "sisn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "sisn/ops.hpp"
#include "sisn/rng.hpp"

namespace sisn {

template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T step) {
  require(step > T{0}, ErrorKind::kInvalidArgument, "finite difference step must be positive");
  Tensor<T> grad(x.shape());
  Tensor<T> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const T plus = f(probe);
    probe[i] = x[i] - step;
    const T minus = f(probe);
    probe[i] = x[i];
    grad[i] = (plus - minus) / (T{2} * step);
  }
  return grad;
}

template Tensor<float> finite_diff_grad<float>(const std::function<float(const Tensor<float>&)>&, const Tensor<float>&,
                                               float);
template Tensor<double> finite_diff_grad<double>(const std::function<double(const Tensor<double>&)>&,
                                                 const Tensor<double>&, double);

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kRelativeErrorFloor});
  return std::abs(analytic - numeric) / scale;
}

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = scale * (2.0 * rng.uniform() - 1.0);
  return t;
}

// Uniform values with |v| >= margin, so kinks at zero stay out of reach of
// the difference stencil.
Tensor<double> away_from_zero(Shape shape, Rng& rng, double margin) {
  Tensor<double> t(shape);
  for (auto& v : t.data()) {
    const double mag = margin + (1.0 - margin) * rng.uniform();
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

}  // namespace

GradcheckResult gradcheck(const std::string& name, const GraphBuilder& build, const std::vector<Tensor<double>>& inputs,
                          const GradcheckOptions& options) {
  Rng rng(options.seed);
  Tensor<double> projection;
  {
    Tape<double> tape;
    std::vector<Var> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t, false));
    projection = random_tensor(tape.shape(build(tape, leaves)), rng);
  }

  auto evaluate = [&](const std::vector<Tensor<double>>& values, std::vector<Tensor<double>>* grads) {
    Tape<double> tape;
    std::vector<Var> leaves;
    for (const auto& t : values) leaves.push_back(tape.leaf(t, grads != nullptr));
    const Var out = build(tape, leaves);
    const Var loss = sum_all(tape, mul(tape, out, tape.constant(projection)));
    if (grads != nullptr) {
      tape.backward(loss);
      for (const Var v : leaves) grads->push_back(tape.grad(v));
    }
    return tape.value(loss)[0];
  };

  std::vector<Tensor<double>> analytic;
  evaluate(inputs, &analytic);

  GradcheckResult result;
  result.name = name;
  std::vector<Tensor<double>> probe = inputs;
  std::vector<std::size_t> tensors(inputs.size());
  for (std::size_t k = 0; k < tensors.size(); ++k) tensors[k] = k;
  if (options.max_tensors > 0 && tensors.size() > options.max_tensors) {
    // Keep the first input (the data tensor) and sample the rest.
    std::vector<std::size_t> rest(tensors.begin() + 1, tensors.end());
    rng.shuffle(rest);
    rest.resize(options.max_tensors - 1);
    std::sort(rest.begin(), rest.end());
    tensors.assign(1, 0);
    tensors.insert(tensors.end(), rest.begin(), rest.end());
  }
  for (const std::size_t k : tensors) {
    const std::size_t n = inputs[k].size();
    std::vector<std::size_t> coords(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    if (options.max_coordinates > 0 && n > options.max_coordinates) {
      rng.shuffle(coords);
      coords.resize(options.max_coordinates);
    }
    for (const std::size_t i : coords) {
      const double original = inputs[k][i];
      probe[k][i] = original + options.step;
      const double plus = evaluate(probe, nullptr);
      probe[k][i] = original - options.step;
      const double minus = evaluate(probe, nullptr);
      probe[k][i] = original;
      const double numeric = (plus - minus) / (2.0 * options.step);
      result.max_relative_error = std::max(result.max_relative_error, relative_error(analytic[k][i], numeric));
      ++result.coordinates;
    }
  }
  result.passed = result.max_relative_error < options.tolerance;
  return result;
}

namespace {

void append_params(std::vector<Tensor<double>>& inputs, const ModelParams<double>& model) {
  for (const auto& p : model.params()) inputs.push_back(p.value);
}

// Rebuilds tape handles for a flat parameter list appended after `offset`
// leading inputs.
SisnVars vars_from_leaves(const SisnConfig& config, std::span<const Var> leaves, std::size_t offset) {
  // Binding a zero model on a scratch tape yields the structure with handles
  // 0..P-1, which are then remapped onto the caller's leaves.
  Tape<double> scratch;
  const SisnVars local = ModelParams<double>::zeros(config).bind(scratch, false);
  auto remap = [&](Var v) { return leaves[offset + v.id]; };
  auto conv = [&](const ConvVars& c) { return ConvVars{remap(c.weight), remap(c.bias)}; };
  auto isa = [&](const IsaVars& a) { return IsaVars{conv(a.reduce), conv(a.expand)}; };
  SisnVars out;
  out.coarse = conv(local.coarse);
  for (const auto& e : local.esags) {
    EsagVars ev;
    for (const auto& b : e.isabs) ev.isabs.push_back({conv(b.conv1), conv(b.conv2), isa(b.isa)});
    ev.tail = conv(e.tail);
    ev.isa = isa(e.isa);
    out.esags.push_back(std::move(ev));
  }
  for (const auto& u : local.upscale) out.upscale.push_back(conv(u));
  out.recon = conv(local.recon);
  return out;
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck_suite(GradcheckPreset preset, std::uint64_t seed) {
  Rng rng(seed);
  GradcheckOptions opt;
  opt.seed = seed;
  std::vector<GradcheckResult> results;

  // Primitive ops on small random tensors.
  results.push_back(gradcheck(
      "conv2d_3x3",
      [](Tape<double>& t, std::span<const Var> v) { return conv2d(t, v[0], v[1], v[2], 1); },
      {random_tensor({2, 3, 6, 5}, rng), random_tensor({4, 3, 3, 3}, rng), random_tensor({1, 4, 1, 1}, rng)}, opt));
  results.push_back(gradcheck(
      "conv2d_1x1",
      [](Tape<double>& t, std::span<const Var> v) { return conv2d(t, v[0], v[1], v[2], 0); },
      {random_tensor({2, 4, 3, 3}, rng), random_tensor({5, 4, 1, 1}, rng), random_tensor({1, 5, 1, 1}, rng)}, opt));
  results.push_back(gradcheck(
      "elementwise_sum", [](Tape<double>& t, std::span<const Var> v) { return add(t, v[0], v[1]); },
      {random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 3, 4, 4}, rng)}, opt));
  results.push_back(gradcheck(
      "elementwise_product", [](Tape<double>& t, std::span<const Var> v) { return mul(t, v[0], v[1]); },
      {random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 3, 4, 4}, rng)}, opt));
  results.push_back(gradcheck(
      "elementwise_product_broadcast", [](Tape<double>& t, std::span<const Var> v) { return mul(t, v[0], v[1]); },
      {random_tensor({2, 3, 4, 5}, rng), random_tensor({2, 3, 1, 1}, rng)}, opt));
  results.push_back(gradcheck(
      "global_avg_pool", [](Tape<double>& t, std::span<const Var> v) { return global_avg_pool(t, v[0]); },
      {random_tensor({2, 4, 5, 3}, rng)}, opt));
  results.push_back(gradcheck(
      "r_softmax", [](Tape<double>& t, std::span<const Var> v) { return r_softmax(t, v[0], 3); },
      {random_tensor({2, 6, 2, 2}, rng, 3.0)}, opt));
  results.push_back(gradcheck(
      "pixel_shuffle", [](Tape<double>& t, std::span<const Var> v) { return pixel_shuffle(t, v[0], 2); },
      {random_tensor({2, 8, 3, 4}, rng)}, opt));
  results.push_back(gradcheck(
      "relu", [](Tape<double>& t, std::span<const Var> v) { return relu(t, v[0]); },
      {away_from_zero({2, 3, 4, 4}, rng, 0.05)}, opt));
  results.push_back(gradcheck(
      "l1_loss",
      [](Tape<double>& t, std::span<const Var> v) { return l1_loss(t, add(t, v[0], v[1]), v[1]); },
      {away_from_zero({2, 3, 4, 4}, rng, 0.05), random_tensor({2, 3, 4, 4}, rng)}, opt));
  results.push_back(gradcheck(
      "channel_slice_concat",
      [](Tape<double>& t, std::span<const Var> v) {
        const Var parts[] = {channel_slice(t, v[0], 2, 3), v[1], channel_slice(t, v[0], 0, 2)};
        return channel_concat<double>(t, parts);
      },
      {random_tensor({2, 6, 3, 3}, rng), random_tensor({2, 2, 3, 3}, rng)}, opt));

  // Attention blocks and the full model, built from a model parameter set.
  SisnConfig block_config = preset == GradcheckPreset::kToy ? SisnConfig{1, 2, 8, 2, 2, 4} : SisnConfig{1, 2, 64, 2, 2, 4};
  SisnConfig model_config = preset == GradcheckPreset::kToy ? SisnConfig{1, 1, 8, 2, 2, 4} : SisnConfig::paper_default();
  GradcheckOptions block_opt = opt;
  if (preset == GradcheckPreset::kPaperDefault) block_opt.max_coordinates = 6;

  const auto block_params = ModelParams<double>::initialize(block_config, seed + 1);
  const int c = block_config.channels;
  const int r = block_config.splits;
  {
    std::vector<Tensor<double>> inputs{random_tensor({2, c, 6, 6}, rng)};
    append_params(inputs, block_params);
    const SisnConfig cfg = block_config;
    results.push_back(gradcheck(
        "isa",
        [cfg, r](Tape<double>& t, std::span<const Var> v) {
          return isa_forward(t, v[0], vars_from_leaves(cfg, v, 1).esags[0].isa, r);
        },
        inputs, block_opt));
    results.push_back(gradcheck(
        "isab",
        [cfg, r](Tape<double>& t, std::span<const Var> v) {
          return isab_forward(t, v[0], vars_from_leaves(cfg, v, 1).esags[0].isabs[0], r);
        },
        inputs, block_opt));
    results.push_back(gradcheck(
        "esag",
        [cfg, r](Tape<double>& t, std::span<const Var> v) {
          return esag_forward(t, v[0], vars_from_leaves(cfg, v, 1).esags[0], r);
        },
        inputs, block_opt));
  }
  {
    const auto model = ModelParams<double>::initialize(model_config, seed + 2);
    std::vector<Tensor<double>> inputs{random_tensor({1, 3, 8, 8}, rng)};
    for (auto& v : inputs[0].data()) v = 0.5 * (v + 1.0);
    append_params(inputs, model);
    GradcheckOptions model_opt = opt;
    if (preset == GradcheckPreset::kPaperDefault) {
      model_opt.max_coordinates = 1;
      model_opt.max_tensors = 12;
    }
    const SisnConfig cfg = model_config;
    results.push_back(gradcheck(
        "sisn_full_model",
        [cfg](Tape<double>& t, std::span<const Var> v) {
          return sisn_forward(t, v[0], vars_from_leaves(cfg, v, 1), cfg);
        },
        inputs, model_opt));
  }
  return results;
}

}  // namespace sisn
