#pragma once

// Checkpoint file: binary map name -> shape -> row-major float64 values.
// Round-trips bit-exactly.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "latentplan/nn.hpp"

namespace latentplan {

struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
constexpr char kCkptMagic[4] = {'L', 'P', 'C', 'K'};
constexpr std::uint32_t kCkptVersion = 1;

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw CheckpointError("checkpoint truncated");
  return v;
}
}  // namespace detail

inline void save_checkpoint(const ParamStore& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open for writing: " + path);
  os.write(detail::kCkptMagic, 4);
  detail::write_u32(os, detail::kCkptVersion);
  detail::write_u32(os, static_cast<std::uint32_t>(store.params().size()));
  for (const auto& p : store.params()) {
    detail::write_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::write_u32(os, static_cast<std::uint32_t>(p.tensor.shape().size()));
    for (int d : p.tensor.shape()) detail::write_u32(os, static_cast<std::uint32_t>(d));
    const auto& v = p.tensor.values();
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!os) throw CheckpointError("write failed: " + path);
}

// Loads values into an already-constructed store; names and shapes must match.
inline void load_checkpoint(ParamStore& store, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, detail::kCkptMagic, 4) != 0)
    throw CheckpointError("bad magic number in " + path);
  const std::uint32_t version = detail::read_u32(is);
  if (version != detail::kCkptVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = detail::read_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = detail::read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw CheckpointError("checkpoint truncated");
    const std::uint32_t ndim = detail::read_u32(is);
    std::vector<int> shape(ndim);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<int>(detail::read_u32(is));
      n *= static_cast<std::size_t>(d);
    }
    Parameter& p = store.find(name);
    if (p.tensor.shape() != shape)
      throw CheckpointError("shape mismatch for " + name);
    is.read(reinterpret_cast<char*>(p.tensor.values().data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw CheckpointError("checkpoint truncated reading " + name);
  }
}

}  // namespace latentplan
