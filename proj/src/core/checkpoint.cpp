#include "core/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "core/error.hpp"

namespace df {

namespace {

constexpr char kMagic[5] = {'D', 'F', 'L', 'D', '1'};

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, const double* v, size_t n) {
  // little-endian host assumed; doubles are written verbatim
  os.write(reinterpret_cast<const char*>(v), static_cast<std::streamsize>(n * sizeof(double)));
}

uint32_t get_u32(std::istream& is, const std::string& file) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError(file + ": truncated at byte " + std::to_string(is.tellg()));
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 | static_cast<uint32_t>(b[2]) << 16 |
         static_cast<uint32_t>(b[3]) << 24;
}

std::string get_str(std::istream& is, uint32_t len, const std::string& file) {
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  if (!is) throw IoError(file + ": truncated string at byte " + std::to_string(is.tellg()));
  return s;
}

}  // namespace

void write_params(const ParamSet& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(kMagic, 5);
  put_u32(os, static_cast<uint32_t>(params.size()));
  std::vector<std::string> frozen;
  for (const auto& [name, e] : params) {
    if (!e.trainable) frozen.push_back(name);
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const auto& s = e.value.shape();
    put_u32(os, static_cast<uint32_t>(s.size()));
    for (int d : s) put_u32(os, static_cast<uint32_t>(d));
    put_f64(os, e.value.data(), static_cast<size_t>(e.value.numel()));
  }
  put_u32(os, static_cast<uint32_t>(frozen.size()));
  for (const auto& name : frozen) {
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

ParamSet read_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, kMagic, 5) != 0) throw IoError(path + ": bad magic, not a parameter file");
  ParamSet ps;
  const uint32_t count = get_u32(is, path);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get_u32(is, path);
    std::string name = get_str(is, name_len, path);
    const uint32_t rank = get_u32(is, path);
    if (rank > 8) throw IoError(path + ": implausible rank " + std::to_string(rank));
    Shape shape(rank);
    int64_t n = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<int>(get_u32(is, path));
      if (shape[d] <= 0) throw IoError(path + ": bad extent in '" + name + "'");
      n *= shape[d];
    }
    std::vector<double> data(static_cast<size_t>(n));
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw IoError(path + ": truncated data for '" + name + "' at byte " + std::to_string(is.tellg()));
    ps.insert(name, Tensor::from(std::move(shape), std::move(data)), true);
  }
  const uint32_t n_frozen = get_u32(is, path);
  for (uint32_t i = 0; i < n_frozen; ++i) {
    const uint32_t name_len = get_u32(is, path);
    std::string name = get_str(is, name_len, path);
    ps.set_trainable(name, false);
  }
  return ps;
}

}  // namespace df
