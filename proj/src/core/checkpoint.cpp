#include "core/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace voxpipe {

namespace {

constexpr char kMagic[8] = {'V', 'O', 'X', 'C', 'K', 'P', 'T', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw BadCheckpoint("checkpoint truncated");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, uint64_t max_len = 1ull << 30) {
  uint64_t n = get<uint64_t>(is);
  if (n > max_len) throw BadCheckpoint("checkpoint string length out of range");
  std::string s(static_cast<size_t>(n), '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw BadCheckpoint("checkpoint truncated");
  return s;
}

}  // namespace

const nn::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put_string(os, ck.arch);
  put_string(os, ck.config_json);
  put<uint64_t>(os, ck.tensors.size());
  for (const auto& [name, t] : ck.tensors) {
    put_string(os, name);
    put<uint32_t>(os, static_cast<uint32_t>(t.shape().ndim()));
    for (int i = 0; i < t.shape().ndim(); ++i) put<int64_t>(os, t.shape().dim(i));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!os) throw IoError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw BadCheckpoint(path + " is not a recognized checkpoint");
  }
  Checkpoint ck;
  ck.arch = get_string(is);
  ck.config_json = get_string(is);
  uint64_t count = get<uint64_t>(is);
  if (count > 1u << 20) throw BadCheckpoint("checkpoint tensor count out of range");
  ck.tensors.reserve(count);
  for (uint64_t k = 0; k < count; ++k) {
    std::string name = get_string(is, 1u << 16);
    uint32_t ndim = get<uint32_t>(is);
    if (ndim > 8) throw BadCheckpoint("checkpoint tensor rank out of range");
    std::vector<int64_t> dims;
    int64_t numel = 1;
    for (uint32_t i = 0; i < ndim; ++i) {
      int64_t d = get<int64_t>(is);
      if (d <= 0 || numel > (1ll << 40) / d) {
        throw BadCheckpoint("checkpoint tensor dims out of range");
      }
      dims.push_back(d);
      numel *= d;
    }
    nn::Tensor t = nn::Tensor::zeros(nn::Shape(dims));
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(numel * sizeof(float)));
    if (!is) throw BadCheckpoint("checkpoint truncated");
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

}  // namespace voxpipe
