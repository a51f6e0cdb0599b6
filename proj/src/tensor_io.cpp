#include "stc/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace stc {

static_assert(std::endian::native == std::endian::little,
              "STCT writer assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'T', 'C', 'T'};
constexpr uint16_t kVersion = 1;

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("STCT: truncated stream");
  return v;
}

}  // namespace

void write_stct(std::ostream& os, const Tensor& t) {
  if (t.empty()) throw IoError("STCT: cannot write empty tensor");
  os.write(kMagic, 4);
  write_raw(os, kVersion);
  write_raw(os, static_cast<uint8_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) write_raw(os, static_cast<uint32_t>(t.dim(i)));
  write_raw(os, static_cast<uint8_t>(t.dtype()));
  dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto s = t.data<T>();
    os.write(reinterpret_cast<const char*>(s.data()),
             static_cast<std::streamsize>(s.size() * sizeof(T)));
  });
  if (!os) throw IoError("STCT: write failed");
}

Tensor read_stct(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw IoError("STCT: bad magic");
  uint16_t version = read_raw<uint16_t>(is);
  if (version != kVersion) throw IoError("STCT: unsupported format version");
  uint8_t rank = read_raw<uint8_t>(is);
  if (rank < 1 || rank > 4) throw IoError("STCT: rank out of range");
  std::vector<int> dims(rank);
  for (auto& d : dims) {
    uint32_t e = read_raw<uint32_t>(is);
    if (e == 0 || e > (1u << 24)) throw IoError("STCT: bad extent");
    d = static_cast<int>(e);
  }
  uint8_t code = read_raw<uint8_t>(is);
  if (code > 1) throw IoError("STCT: unknown dtype code");
  Dtype dt = static_cast<Dtype>(code);
  Tensor t = Tensor::zeros(dims, dt);
  dispatch(dt, [&](auto tag) {
    using T = decltype(tag);
    auto s = t.data<T>();
    is.read(reinterpret_cast<char*>(s.data()),
            static_cast<std::streamsize>(s.size() * sizeof(T)));
  });
  if (!is) throw IoError("STCT: truncated payload");
  return t;
}

void write_stct(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path.string());
  write_stct(os, t);
}

Tensor read_stct(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for read: " + path.string());
  return read_stct(is);
}

}  // namespace stc
