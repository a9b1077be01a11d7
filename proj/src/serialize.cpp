#include "slk/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace slk {

namespace {

constexpr char kMagic[4] = {'S', 'L', 'K', '1'};

static_assert(std::endian::native == std::endian::little, "SLK1 I/O assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <class T>
void put_raw(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

}  // namespace

std::vector<std::uint8_t> encode_array(const NdArray& a, DType dtype) {
  if (a.ndim() > 255) throw ValidationError("too many dimensions for SLK1");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.push_back(static_cast<std::uint8_t>(dtype));
  out.push_back(static_cast<std::uint8_t>(a.ndim()));
  for (int d : a.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  const std::size_t elem = dtype == DType::f64 ? 8 : 4;
  out.reserve(out.size() + a.size() * elem);
  for (double v : a.data()) {
    if (dtype == DType::f64) {
      put_raw(out, v);
    } else {
      put_raw(out, static_cast<float>(v));
    }
  }
  return out;
}

NdArray decode_array(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw ValidationError("not an SLK1 array");
  const std::uint8_t tag = bytes[4];
  if (tag > 1) throw ValidationError("unknown SLK1 dtype tag " + std::to_string(tag));
  const int ndim = bytes[5];
  std::size_t pos = 6;
  if (bytes.size() < pos + 4u * ndim) throw ValidationError("truncated SLK1 header");
  Shape shape(ndim);
  for (int d = 0; d < ndim; ++d) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
    shape[d] = static_cast<int>(v);
    pos += 4;
  }
  const std::size_t n = numel(shape);
  const std::size_t elem = tag == 0 ? 8 : 4;
  if (bytes.size() != pos + n * elem) throw ValidationError("SLK1 payload size does not match header");
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (tag == 0) {
      std::memcpy(&data[i], bytes.data() + pos + 8 * i, 8);
    } else {
      float f;
      std::memcpy(&f, bytes.data() + pos + 4 * i, 4);
      data[i] = f;
    }
  }
  return NdArray(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void save_array(const std::filesystem::path& path, const NdArray& a, DType dtype) {
  write_file(path, encode_array(a, dtype));
}

NdArray load_array(const std::filesystem::path& path) { return decode_array(read_file(path)); }

std::string fnv1a_hex(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

}  // namespace slk
