#include "edgeseg/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "edgeseg/errors.hpp"

namespace edgeseg {
namespace {

constexpr char kMagic[4] = {'E', 'S', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeFloat32 = 0;

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw TruncationError(std::string("checkpoint: truncated while reading ") + what);
  return v;
}

}  // namespace

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& e : tensors)
    if (e.name == name) return &e.data;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open for writing: " + path);
  out.write(kMagic, sizeof kMagic);
  put(out, kVersion);
  put(out, checkpoint.topology_hash);
  put(out, checkpoint.encoder_hash);
  put(out, checkpoint.seed);
  put(out, checkpoint.iteration);
  put(out, checkpoint.optimizer_steps);
  put(out, std::uint32_t(checkpoint.tensors.size()));
  for (const auto& e : checkpoint.tensors) {
    put(out, std::uint32_t(e.name.size()));
    out.write(e.name.data(), std::streamsize(e.name.size()));
    put(out, kDtypeFloat32);
    const TensorShape s = e.data.shape();
    for (std::int64_t d : {s.n, s.c, s.x, s.y, s.z}) put(out, d);
    out.write(reinterpret_cast<const char*>(e.data.data()), std::streamsize(e.data.numel() * sizeof(float)));
  }
  out.flush();
  if (!out) throw IoError("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open: " + path);
  char magic[4];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw FormatError("checkpoint: bad magic in " + path);
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint ck;
  ck.topology_hash = get<std::uint64_t>(in, "topology hash");
  ck.encoder_hash = get<std::uint64_t>(in, "encoder hash");
  ck.seed = get<std::uint64_t>(in, "seed");
  ck.iteration = get<std::int64_t>(in, "iteration");
  ck.optimizer_steps = get<std::int64_t>(in, "optimizer steps");
  const auto count = get<std::uint32_t>(in, "tensor count");
  ck.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(in, "name length");
    if (name_len > 4096) throw FormatError("checkpoint: implausible tensor name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw TruncationError("checkpoint: truncated tensor name");
    const auto dtype = get<std::uint8_t>(in, "dtype");
    if (dtype != kDtypeFloat32) throw FormatError("checkpoint: unsupported dtype for " + name);
    TensorShape s;
    s.n = get<std::int64_t>(in, "dim n");
    s.c = get<std::int64_t>(in, "dim c");
    s.x = get<std::int64_t>(in, "dim x");
    s.y = get<std::int64_t>(in, "dim y");
    s.z = get<std::int64_t>(in, "dim z");
    if (s.n <= 0 || s.c <= 0 || s.x <= 0 || s.y <= 0 || s.z <= 0)
      throw FormatError("checkpoint: non-positive dimension for " + name);
    Tensor<float> data(s);
    in.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.numel() * sizeof(float)));
    if (!in) throw TruncationError("checkpoint: truncated payload for " + name);
    ck.tensors.push_back({std::move(name), std::move(data)});
  }
  return ck;
}

EncoderLoadReport load_encoder_checkpoint(ModelGraph<float>& model, const std::string& path, bool strict) {
  const Checkpoint ck = load_checkpoint(path);
  if (strict && ck.encoder_hash != model.encoder_hash())
    throw LoadError("encoder load: encoder hash mismatch between checkpoint and model");

  EncoderLoadReport report;
  std::vector<std::string> offenders;
  for (const auto& e : ck.tensors) {
    if (e.name.rfind("encoder.", 0) != 0) continue;
    const auto param = model.try_find_parameter(e.name);
    if (!param || !(param->value.shape() == e.data.shape())) {
      ++report.skipped;
      offenders.push_back(e.name);
      continue;
    }
    param->value = e.data;
    ++report.loaded;
  }
  if (strict && !offenders.empty()) {
    std::string msg = "encoder load: unmatched tensors:";
    for (const auto& n : offenders) msg += " " + n;
    throw LoadError(msg);
  }
  return report;
}

void restore_model(ModelGraph<float>& model, const Checkpoint& checkpoint) {
  if (checkpoint.topology_hash != model.topology_hash())
    throw LoadError("restore: topology hash mismatch between checkpoint and model");
  for (const auto& p : model.parameters()) {
    const Tensor<float>* src = checkpoint.find(p->name);
    if (!src) throw LoadError("restore: checkpoint is missing parameter " + p->name);
    if (!(src->shape() == p->value.shape())) throw LoadError("restore: shape mismatch for " + p->name);
    p->value = *src;
  }
}

}  // namespace edgeseg
