#include "equiflow/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace equiflow {

namespace {

constexpr char kMagic[4] = {'E', 'Q', 'F', 'W'};
constexpr std::uint32_t kVersion = 1;

// container I/O assumes a little-endian host (x86-64 / aarch64)
template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated container");
  return v;
}

}  // namespace

void write_manifest(const std::string& path, const std::map<std::string, std::string>& kv) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  for (const auto& [key, value] : kv) os << key << " = " << value << "\n";
}

std::map<std::string, std::string> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw std::runtime_error("manifest: bad line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

void write_tensor_container(const std::string& path,
                            const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint64_t>(os, tensors.size());
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put<std::uint64_t>(os, static_cast<std::uint64_t>(t.shape()[i]));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size()) * static_cast<std::streamsize>(sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: short write to " + path);
}

std::vector<std::pair<std::string, Tensor>> read_tensor_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto count = get<std::uint64_t>(is);
  std::vector<std::pair<std::string, Tensor>> tensors;
  tensors.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto rank = get<std::uint32_t>(is);
    if (rank > static_cast<std::uint32_t>(Shape::kMaxRank))
      throw std::runtime_error("checkpoint: rank too large");
    std::vector<std::int64_t> dims;
    for (std::uint32_t r = 0; r < rank; ++r)
      dims.push_back(static_cast<std::int64_t>(get<std::uint64_t>(is)));
    Tensor t((Shape(dims)));
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size()) * static_cast<std::streamsize>(sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor data");
    tensors.emplace_back(std::move(name), std::move(t));
  }
  return tensors;
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::string& stem, const ParamStore& store,
                     const std::map<std::string, std::string>& manifest,
                     const std::vector<std::pair<std::string, Tensor>>& extra) {
  std::vector<std::pair<std::string, Tensor>> tensors;
  for (int i = 0; i < store.count(); ++i) tensors.emplace_back(store.name(i), store.value(i));
  for (const auto& e : extra) tensors.push_back(e);
  write_tensor_container(stem + ".weights", tensors);
  write_manifest(stem + ".manifest", manifest);
}

Checkpoint load_checkpoint(const std::string& stem) {
  Checkpoint ckpt;
  ckpt.tensors = read_tensor_container(stem + ".weights");
  ckpt.manifest = read_manifest(stem + ".manifest");
  return ckpt;
}

void load_into_store(const Checkpoint& ckpt, ParamStore& store) {
  for (int i = 0; i < store.count(); ++i) {
    const Tensor* t = ckpt.find(store.name(i));
    if (!t) throw std::runtime_error("checkpoint: missing tensor " + store.name(i));
    if (t->shape() != store.value(i).shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + store.name(i) + ": stored " +
                               t->shape().str() + " vs model " + store.value(i).shape().str());
    store.value(i) = *t;
  }
}

}  // namespace equiflow
