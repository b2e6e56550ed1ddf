#include "sisn/model.hpp"

#include <algorithm>

#include "sisn/ops.hpp"
#include "sisn/rng.hpp"

namespace sisn {

void SisnConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    require(ok, ErrorKind::kInvalidArgument, "invalid model config: " + what);
  };
  check(num_esag >= 1, "num_esag must be >= 1, got " + std::to_string(num_esag));
  check(num_isab >= 1, "num_isab must be >= 1, got " + std::to_string(num_isab));
  check(splits >= 1, "splits must be >= 1, got " + std::to_string(splits));
  check(channels >= splits, "channels (" + std::to_string(channels) + ") must be >= splits (" +
                                std::to_string(splits) + ")");
  check(channels % splits == 0, "channels (" + std::to_string(channels) + ") must be divisible by splits (" +
                                    std::to_string(splits) + ")");
  check(reduction >= 1, "reduction must be >= 1, got " + std::to_string(reduction));
  check(channels % reduction == 0, "channels (" + std::to_string(channels) +
                                       ") must be divisible by reduction (" + std::to_string(reduction) + ")");
  check(scale == 2 || scale == 4 || scale == 8, "scale must be 2, 4 or 8, got " + std::to_string(scale));
}

int SisnConfig::bottleneck() const { return std::max(channels / reduction, 4); }

int SisnConfig::upscale_stages() const {
  int stages = 0;
  for (int s = scale; s > 1; s /= 2) ++stages;
  return stages;
}

namespace {

struct ConvSlot {
  std::size_t weight = 0;
  std::size_t bias = 0;
};
struct IsaSlot {
  ConvSlot reduce;
  ConvSlot expand;
};
struct IsabSlot {
  ConvSlot conv1;
  ConvSlot conv2;
  IsaSlot isa;
};
struct EsagSlot {
  std::vector<IsabSlot> isabs;
  ConvSlot tail;
  IsaSlot isa;
};
struct Layout {
  ConvSlot coarse;
  std::vector<EsagSlot> esags;
  std::vector<ConvSlot> upscale;
  ConvSlot recon;
};

// Single source of truth for parameter order, names and shapes.
Layout build_layout(const SisnConfig& config, std::vector<ParameterSpec>* specs) {
  config.validate();
  std::size_t next = 0;
  auto conv = [&](const std::string& name, int c_out, int c_in, int k) {
    if (specs != nullptr) {
      specs->push_back({name + ".weight", Shape{c_out, c_in, k, k}, c_in * k * k});
      specs->push_back({name + ".bias", Shape{1, c_out, 1, 1}, 0});
    }
    ConvSlot slot{next, next + 1};
    next += 2;
    return slot;
  };
  const int c = config.channels;
  auto isa = [&](const std::string& name) {
    IsaSlot slot;
    slot.reduce = conv(name + ".reduce", config.bottleneck(), config.split_channels(), 1);
    slot.expand = conv(name + ".expand", c, config.bottleneck(), 1);
    return slot;
  };

  Layout layout;
  layout.coarse = conv("coarse", c, 3, 3);
  for (int g = 0; g < config.num_esag; ++g) {
    const std::string group = "esag." + std::to_string(g);
    EsagSlot esag;
    for (int i = 0; i < config.num_isab; ++i) {
      const std::string block = group + ".isab." + std::to_string(i);
      IsabSlot isab;
      isab.conv1 = conv(block + ".conv1", c, c, 3);
      isab.conv2 = conv(block + ".conv2", c, c, 3);
      isab.isa = isa(block + ".isa");
      esag.isabs.push_back(isab);
    }
    esag.tail = conv(group + ".tail", c, c, 3);
    esag.isa = isa(group + ".isa");
    layout.esags.push_back(std::move(esag));
  }
  for (int s = 0; s < config.upscale_stages(); ++s) layout.upscale.push_back(conv("upscale." + std::to_string(s), 4 * c, c, 3));
  layout.recon = conv("recon", 3, c, 3);
  return layout;
}

ConvVars bind_conv(const std::vector<Var>& leaves, const ConvSlot& slot) {
  return {leaves[slot.weight], leaves[slot.bias]};
}

IsaVars bind_isa(const std::vector<Var>& leaves, const IsaSlot& slot) {
  return {bind_conv(leaves, slot.reduce), bind_conv(leaves, slot.expand)};
}

IsabVars bind_isab(const std::vector<Var>& leaves, const IsabSlot& slot) {
  return {bind_conv(leaves, slot.conv1), bind_conv(leaves, slot.conv2), bind_isa(leaves, slot.isa)};
}

template <typename T>
Var conv3x3(Tape<T>& tape, Var x, const ConvVars& p) {
  return conv2d(tape, x, p.weight, p.bias, 1);
}

}  // namespace

std::vector<ParameterSpec> parameter_specs(const SisnConfig& config) {
  std::vector<ParameterSpec> specs;
  build_layout(config, &specs);
  return specs;
}

template <typename T>
Var isa_forward(Tape<T>& tape, Var x, const IsaVars& params, int splits) {
  const Shape xs = tape.shape(x);
  require(splits >= 1, ErrorKind::kInvalidArgument, "ISA needs at least one split");
  require(xs.c % splits == 0, ErrorKind::kShapeMismatch,
          "ISA input " + xs.str() + ": " + std::to_string(xs.c) + " channels not divisible by " +
              std::to_string(splits) + " splits");
  require(tape.shape(params.expand.weight).n == xs.c, ErrorKind::kShapeMismatch,
          "ISA expand conv produces " + std::to_string(tape.shape(params.expand.weight).n) +
              " logits but input has " + std::to_string(xs.c) + " channels");
  const int group = xs.c / splits;

  std::vector<Var> parts;
  for (int k = 0; k < splits; ++k) parts.push_back(splits == 1 ? x : channel_slice(tape, x, k * group, group));

  Var fusion = parts[0];
  for (int k = 1; k < splits; ++k) fusion = add(tape, fusion, parts[k]);

  const Var pooled = global_avg_pool(tape, fusion);
  const Var hidden = relu(tape, conv2d(tape, pooled, params.reduce.weight, params.reduce.bias, 0));
  const Var logits = conv2d(tape, hidden, params.expand.weight, params.expand.bias, 0);
  const Var weights = r_softmax(tape, logits, splits);

  auto weight_of = [&](int k) { return splits == 1 ? weights : channel_slice(tape, weights, k * group, group); };
  Var fused = mul(tape, parts[0], weight_of(0));
  for (int k = 1; k < splits; ++k) fused = add(tape, fused, mul(tape, parts[k], weight_of(k)));
  if (splits == 1) return fused;

  const std::vector<Var> copies(static_cast<std::size_t>(splits), fused);
  return channel_concat<T>(tape, copies);
}

template <typename T>
Var isab_forward(Tape<T>& tape, Var x, const IsabVars& params, int splits) {
  const Shape xs = tape.shape(x);
  const Shape ws = tape.shape(params.conv1.weight);
  require(xs.c == ws.c, ErrorKind::kShapeMismatch,
          "ISAB input " + xs.str() + " does not match block channels " + std::to_string(ws.c));
  const Var body = conv3x3(tape, relu(tape, conv3x3(tape, x, params.conv1)), params.conv2);
  return add(tape, x, isa_forward(tape, body, params.isa, splits));
}

template <typename T>
Var esag_forward(Tape<T>& tape, Var x, const EsagVars& params, int splits) {
  const Shape xs = tape.shape(x);
  const Shape ws = tape.shape(params.tail.weight);
  require(xs.c == ws.n, ErrorKind::kShapeMismatch,
          "ESAG input " + xs.str() + " does not match group channels " + std::to_string(ws.n));
  Var texture = x;
  for (const auto& isab : params.isabs) texture = isab_forward(tape, texture, isab, splits);
  texture = conv3x3(tape, texture, params.tail);
  const Var structure = isa_forward(tape, x, params.isa, splits);
  return add(tape, texture, structure);
}

template <typename T>
Var sisn_forward(Tape<T>& tape, Var lr_image, const SisnVars& params, const SisnConfig& config) {
  config.validate();
  const Shape xs = tape.shape(lr_image);
  require(xs.c == 3, ErrorKind::kShapeMismatch, "SISN input must have 3 channels, got " + xs.str());
  require(xs.h >= 8 && xs.w >= 8, ErrorKind::kInvalidArgument,
          "SISN input must be at least 8x8, got " + std::to_string(xs.h) + "x" + std::to_string(xs.w));
  require(static_cast<int>(params.esags.size()) == config.num_esag &&
              static_cast<int>(params.upscale.size()) == config.upscale_stages(),
          ErrorKind::kShapeMismatch, "parameter set does not match model config");

  Var feature = conv3x3(tape, lr_image, params.coarse);
  for (const auto& esag : params.esags) feature = esag_forward(tape, feature, esag, config.splits);
  for (const auto& stage : params.upscale) feature = pixel_shuffle(tape, conv3x3(tape, feature, stage), 2);
  return conv3x3(tape, feature, params.recon);
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const SisnConfig& config) {
  ModelParams out;
  out.config_ = config;
  for (const auto& spec : parameter_specs(config)) out.params_.push_back({spec.name, Tensor<T>(spec.shape)});
  return out;
}

template <typename T>
ModelParams<T> ModelParams<T>::initialize(const SisnConfig& config, std::uint64_t seed) {
  ModelParams out;
  out.config_ = config;
  Rng rng(seed);
  for (const auto& spec : parameter_specs(config)) {
    Tensor<T> value(spec.shape);
    if (spec.fan_in > 0) {
      const double stddev = std::sqrt(2.0 / spec.fan_in);
      for (auto& v : value.data()) v = static_cast<T>(stddev * rng.normal());
    }
    out.params_.push_back({spec.name, std::move(value)});
  }
  return out;
}

template <typename T>
Parameter<T>& ModelParams<T>::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  fail(ErrorKind::kInvalidArgument, "no parameter named '" + name + "'");
}

template <typename T>
const Parameter<T>& ModelParams<T>::find(const std::string& name) const {
  return const_cast<ModelParams*>(this)->find(name);
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.value.size();
  return total;
}

template <typename T>
SisnVars ModelParams<T>::bind(Tape<T>& tape, bool requires_grad, std::vector<Var>* leaves) const {
  const Layout layout = build_layout(config_, nullptr);
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(tape.leaf(p.value, requires_grad));

  SisnVars out;
  out.coarse = bind_conv(vars, layout.coarse);
  for (const auto& esag : layout.esags) {
    EsagVars ev;
    for (const auto& isab : esag.isabs) ev.isabs.push_back(bind_isab(vars, isab));
    ev.tail = bind_conv(vars, esag.tail);
    ev.isa = bind_isa(vars, esag.isa);
    out.esags.push_back(std::move(ev));
  }
  for (const auto& stage : layout.upscale) out.upscale.push_back(bind_conv(vars, stage));
  out.recon = bind_conv(vars, layout.recon);
  if (leaves != nullptr) *leaves = std::move(vars);
  return out;
}

namespace {

// Runs one block on a fresh tape so inference memory stays bounded by the
// largest block rather than the whole network.
template <typename T, typename Block>
Tensor<T> run_block(const ModelParams<T>& model, const Tensor<T>& input, Block&& block) {
  Tape<T> tape;
  const Var x = tape.constant(input);
  auto bind = [&](const ConvSlot& slot) {
    return ConvVars{tape.constant(model.params()[slot.weight].value), tape.constant(model.params()[slot.bias].value)};
  };
  return tape.value(block(tape, x, bind));
}

}  // namespace

template <typename T>
Tensor<T> infer(const ModelParams<T>& model, const Tensor<T>& lr_image) {
  const SisnConfig& config = model.config();
  const Layout layout = build_layout(config, nullptr);
  require(model.params().size() == parameter_specs(config).size(), ErrorKind::kShapeMismatch,
          "parameter set does not match model config");
  const Shape xs = lr_image.shape();
  require(xs.c == 3, ErrorKind::kShapeMismatch, "SISN input must have 3 channels, got " + xs.str());
  require(xs.h >= 8 && xs.w >= 8, ErrorKind::kInvalidArgument,
          "SISN input must be at least 8x8, got " + std::to_string(xs.h) + "x" + std::to_string(xs.w));
  const int r = config.splits;

  Tensor<T> feature = run_block(model, lr_image, [&](Tape<T>& t, Var x, auto bind) {
    return conv3x3(t, x, bind(layout.coarse));
  });
  for (const auto& esag : layout.esags) {
    Tensor<T> texture = feature;
    for (const auto& isab : esag.isabs) {
      texture = run_block(model, texture, [&](Tape<T>& t, Var x, auto bind) {
        return isab_forward(t, x, IsabVars{bind(isab.conv1), bind(isab.conv2), {bind(isab.isa.reduce), bind(isab.isa.expand)}}, r);
      });
    }
    texture = run_block(model, texture, [&](Tape<T>& t, Var x, auto bind) { return conv3x3(t, x, bind(esag.tail)); });
    Tensor<T> structure = run_block(model, feature, [&](Tape<T>& t, Var x, auto bind) {
      return isa_forward(t, x, IsaVars{bind(esag.isa.reduce), bind(esag.isa.expand)}, r);
    });
    for (std::size_t i = 0; i < texture.size(); ++i) texture[i] += structure[i];
    feature = std::move(texture);
  }
  for (const auto& stage : layout.upscale) {
    feature = run_block(model, feature, [&](Tape<T>& t, Var x, auto bind) {
      return pixel_shuffle(t, conv3x3(t, x, bind(stage)), 2);
    });
  }
  return run_block(model, feature, [&](Tape<T>& t, Var x, auto bind) { return conv3x3(t, x, bind(layout.recon)); });
}

#define SISN_INSTANTIATE_MODEL(T)                                              \
  template Var isa_forward<T>(Tape<T>&, Var, const IsaVars&, int);             \
  template Var isab_forward<T>(Tape<T>&, Var, const IsabVars&, int);           \
  template Var esag_forward<T>(Tape<T>&, Var, const EsagVars&, int);           \
  template Var sisn_forward<T>(Tape<T>&, Var, const SisnVars&, const SisnConfig&); \
  template class ModelParams<T>;                                               \
  template Tensor<T> infer<T>(const ModelParams<T>&, const Tensor<T>&);

SISN_INSTANTIATE_MODEL(float)
SISN_INSTANTIATE_MODEL(double)

}  // namespace sisn
