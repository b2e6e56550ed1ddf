#include "sisn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace sisn {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  model.validate();
  auto check = [](bool ok, const std::string& what) {
    require(ok, ErrorKind::kInvalidArgument, "invalid training config: " + what);
  };
  check(epochs >= 0, "epochs must be >= 0");
  check(batch_size >= 1, "batch_size must be >= 1");
  check(base_lr > 0.0, "base_lr must be positive");
  check(halve_every >= 1, "halve_every must be >= 1");
  check(lr_patch >= 0, "lr_patch must be >= 0");
  check(checkpoint_every >= 1, "checkpoint_every must be >= 1");
  check(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must lie in [0, 1)");
  check(eps > 0.0, "Adam epsilon must be positive");
}

double lr_at_epoch(std::int64_t epoch, const TrainConfig& config) {
  require(epoch >= 0, ErrorKind::kInvalidArgument, "epoch must be non-negative");
  double lr = config.base_lr;
  for (std::int64_t halvings = epoch / config.halve_every; halvings > 0; --halvings) lr *= 0.5;
  return lr;
}

namespace {

constexpr char kMagic[8] = {'S', 'I', 'S', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint8_t kDtypeF32 = 1;
constexpr std::uint8_t kDtypeF64 = 2;

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i32(std::int32_t v) { uint(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { uint(static_cast<std::uint64_t>(v)); }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    uint(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }

  void tensor(const std::string& name, const Tensor<float>& t) {
    str(name);
    uint(kDtypeF32);
    uint(std::uint8_t{4});
    const Shape s = t.shape();
    for (const int d : {s.n, s.c, s.h, s.w}) uint(static_cast<std::uint32_t>(d));
    for (const float v : t.data()) f32(v);
  }

  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t limit, std::string origin)
      : bytes_(bytes), limit_(limit), origin_(std::move(origin)) {}

  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(uint<std::uint32_t>()); }
  std::int64_t i64() { return static_cast<std::int64_t>(uint<std::uint64_t>()); }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str() {
    const auto n = uint<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::pair<std::string, Tensor<float>> tensor() {
    std::string name = str();
    const auto dtype = uint<std::uint8_t>();
    const auto rank = uint<std::uint8_t>();
    require(rank == 4, ErrorKind::kCorrupt, origin_ + ": tensor '" + name + "' has rank " + std::to_string(rank));
    Shape s;
    s.n = static_cast<int>(uint<std::uint32_t>());
    s.c = static_cast<int>(uint<std::uint32_t>());
    s.h = static_cast<int>(uint<std::uint32_t>());
    s.w = static_cast<int>(uint<std::uint32_t>());
    require(s.valid(), ErrorKind::kCorrupt, origin_ + ": tensor '" + name + "' has invalid shape " + s.str());
    std::vector<float> data(s.numel());
    if (dtype == kDtypeF32) {
      need(data.size() * 4);
      for (auto& v : data) v = f32();
    } else if (dtype == kDtypeF64) {
      need(data.size() * 8);
      for (auto& v : data) v = static_cast<float>(f64());
    } else {
      fail(ErrorKind::kCorrupt, origin_ + ": tensor '" + name + "' has unknown dtype tag " + std::to_string(dtype));
    }
    return {std::move(name), Tensor<float>(s, std::move(data))};
  }

  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > limit_) fail(ErrorKind::kCorrupt, origin_ + ": checkpoint is truncated");
  }

  const std::string& bytes_;
  std::size_t limit_;
  std::size_t pos_ = 0;
  std::string origin_;
};

void check_model(const std::vector<Parameter<float>>& params, const SisnConfig& config, const std::string& origin) {
  const auto specs = parameter_specs(config);
  for (std::size_t i = 0; i < std::min(specs.size(), params.size()); ++i) {
    require(params[i].name == specs[i].name, ErrorKind::kShapeMismatch,
            origin + ": expected tensor '" + specs[i].name + "' at position " + std::to_string(i) + ", found '" +
                params[i].name + "'");
    require(params[i].value.shape() == specs[i].shape, ErrorKind::kShapeMismatch,
            origin + ": tensor '" + specs[i].name + "' has shape " + params[i].value.shape().str() +
                " but the model config requires " + specs[i].shape.str());
  }
  require(specs.size() == params.size(), ErrorKind::kShapeMismatch,
          origin + ": checkpoint holds " + std::to_string(params.size()) + " tensors, model config requires " +
              std::to_string(specs.size()));
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.uint(ck.version);

  const TrainConfig& c = ck.config;
  for (const int v : {c.model.num_esag, c.model.num_isab, c.model.channels, c.model.splits, c.model.scale,
                      c.model.reduction, c.epochs, c.batch_size, c.halve_every, c.lr_patch, c.checkpoint_every})
    w.i32(v);
  w.uint(c.seed);
  for (const double v : {c.base_lr, c.beta1, c.beta2, c.eps}) w.f64(v);
  w.i64(ck.epoch);

  const auto& params = ck.model.params();
  w.uint(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) w.tensor(p.name, p.value);

  w.i64(ck.optimizer.step);
  require(ck.optimizer.m.size() == params.size() && ck.optimizer.v.size() == params.size(), ErrorKind::kShapeMismatch,
          "optimizer state does not match the parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) w.tensor("m/" + params[i].name, ck.optimizer.m[i]);
  for (std::size_t i = 0; i < params.size(); ++i) w.tensor("v/" + params[i].name, ck.optimizer.v[i]);

  w.str(ck.rng_state);
  w.f64(ck.best_val_psnr);

  const std::uint64_t sum = fnv1a(w.bytes().data(), w.bytes().size());
  w.uint(sum);
  return std::move(w.bytes());
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin) {
  require(bytes.size() >= sizeof(kMagic) + 4 + 8 && std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) == 0,
          ErrorKind::kCorrupt, origin + ": not a sisn checkpoint");
  const std::size_t body = bytes.size() - 8;
  {
    Reader head(bytes, body, origin);
    for (std::size_t i = 0; i < sizeof(kMagic); ++i) head.uint<std::uint8_t>();
    const auto version = head.uint<std::uint32_t>();
    require(version == kCheckpointVersion, ErrorKind::kVersionMismatch,
            origin + ": checkpoint format version " + std::to_string(version) + ", this build reads version " +
                std::to_string(kCheckpointVersion));
  }
  Reader tail(bytes, bytes.size(), origin);
  for (std::size_t i = 0; i < body; ++i) tail.uint<std::uint8_t>();
  require(tail.uint<std::uint64_t>() == fnv1a(bytes.data(), body), ErrorKind::kCorrupt,
          origin + ": checksum mismatch (file is damaged)");

  Reader r(bytes, body, origin);
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) r.uint<std::uint8_t>();
  Checkpoint ck;
  ck.version = r.uint<std::uint32_t>();
  TrainConfig& c = ck.config;
  for (int* field : {&c.model.num_esag, &c.model.num_isab, &c.model.channels, &c.model.splits, &c.model.scale,
                     &c.model.reduction, &c.epochs, &c.batch_size, &c.halve_every, &c.lr_patch, &c.checkpoint_every})
    *field = r.i32();
  c.seed = r.uint<std::uint64_t>();
  for (double* field : {&c.base_lr, &c.beta1, &c.beta2, &c.eps}) *field = r.f64();
  ck.epoch = r.i64();
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kCorrupt, origin + ": " + e.what());
  }

  const auto count = r.uint<std::uint32_t>();
  std::vector<Parameter<float>> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, value] = r.tensor();
    params.push_back({std::move(name), std::move(value)});
  }
  check_model(params, c.model, origin);
  ck.model = ModelParams<float>::zeros(c.model);
  ck.model.params() = std::move(params);

  ck.optimizer.hyper = c.adam();
  ck.optimizer.step = r.i64();
  for (auto* moments : {&ck.optimizer.m, &ck.optimizer.v}) {
    const std::string prefix = moments == &ck.optimizer.m ? "m/" : "v/";
    for (const auto& p : ck.model.params()) {
      auto [name, value] = r.tensor();
      require(name == prefix + p.name && value.shape() == p.value.shape(), ErrorKind::kShapeMismatch,
              origin + ": optimizer tensor '" + name + "' " + value.shape().str() + " does not match parameter '" +
                  p.name + "' " + p.value.shape().str());
      moments->push_back(std::move(value));
    }
  }
  ck.rng_state = r.str();
  ck.best_val_psnr = r.f64();
  require(r.position() == body, ErrorKind::kCorrupt, origin + ": trailing bytes after checkpoint payload");
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const fs::path& path) {
  const std::string bytes = serialize_checkpoint(ck);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kWriteFailure, "cannot write checkpoint '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::kWriteFailure, "failed writing checkpoint '" + path.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::kWriteFailure, "cannot replace checkpoint '" + path.string() + "': " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in || fs::is_directory(path)) fail(ErrorKind::kMissingFile, "cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, path.string());
}

Checkpoint load_checkpoint(const fs::path& path, const SisnConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.config.model != expected) {
    check_model(ck.model.params(), expected, path.string());
    fail(ErrorKind::kShapeMismatch, path.string() + ": checkpoint model config differs from the expected one");
  }
  return ck;
}

}  // namespace sisn
