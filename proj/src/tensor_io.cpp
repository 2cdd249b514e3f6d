#include "mfa/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mfa {
namespace {

constexpr char kMagic[4] = {'T', 'N', 'S', 'R'};
constexpr std::uint32_t kVersion = 1;

void need(const std::vector<std::uint8_t>& in, std::size_t pos, std::size_t count) {
  if (pos + count > in.size() || pos + count < pos) {
    throw ValidationError("tensor record truncated at byte " + std::to_string(pos));
  }
}

template <typename T>
T read_scalar(const std::vector<std::uint8_t>& in, std::size_t& pos, DType dtype) {
  if (dtype == DType::f32) {
    std::uint32_t bits = get_u32(in, pos);
    return static_cast<T>(std::bit_cast<float>(bits));
  }
  std::uint64_t bits = get_u64(in, pos);
  return static_cast<T>(std::bit_cast<double>(bits));
}

}  // namespace

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  need(in, pos, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

std::uint64_t get_u64(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  need(in, pos, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  pos += 8;
  return v;
}

template <typename T>
void encode_tensor(const Tensor<T>& t, std::vector<std::uint8_t>& out) {
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kVersion);
  out.push_back(static_cast<std::uint8_t>(dtype_of<T>()));
  out.push_back(4);
  const Shape& s = t.shape();
  for (std::size_t d : {s.n, s.c, s.h, s.w}) put_u64(out, d);
  out.reserve(out.size() + t.size() * sizeof(T));
  for (T v : t.values()) {
    if constexpr (sizeof(T) == 4) {
      put_u32(out, std::bit_cast<std::uint32_t>(v));
    } else {
      put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  }
}

DType peek_dtype(const std::vector<std::uint8_t>& in, std::size_t pos) {
  need(in, pos, 9);
  return static_cast<DType>(in[pos + 8]);
}

template <typename T>
Tensor<T> decode_tensor(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  need(in, pos, 4);
  if (std::memcmp(in.data() + pos, kMagic, 4) != 0) {
    throw ValidationError("bad tensor magic at byte " + std::to_string(pos));
  }
  pos += 4;
  const std::uint32_t version = get_u32(in, pos);
  if (version != kVersion) throw ValidationError("unsupported tensor version " + std::to_string(version));
  need(in, pos, 2);
  const auto dtype = static_cast<DType>(in[pos]);
  const std::uint8_t ndim = in[pos + 1];
  pos += 2;
  if (dtype != DType::f32 && dtype != DType::f64) {
    throw ValidationError("unknown tensor dtype tag " + std::to_string(static_cast<int>(dtype)));
  }
  if (ndim != 4) throw ValidationError("tensor ndim must be 4, got " + std::to_string(ndim));
  Shape s;
  s.n = get_u64(in, pos);
  s.c = get_u64(in, pos);
  s.h = get_u64(in, pos);
  s.w = get_u64(in, pos);
  const std::size_t width = dtype == DType::f32 ? 4 : 8;
  // Guard against overflow before trusting the dims.
  const long double numel = static_cast<long double>(s.n) * s.c * s.h * s.w;
  if (numel * width > static_cast<long double>(in.size() - pos)) {
    throw ValidationError("tensor payload for shape " + s.str() + " truncated");
  }
  AlignedVector<T> data(s.numel());
  for (auto& v : data) v = read_scalar<T>(in, pos, dtype);
  return Tensor<T>(s, std::move(data));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("cannot write '" + path.string() + "'");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
      std::filesystem::remove(tmp);
      throw ValidationError("write failed for '" + path.string() + "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

template <typename T>
void save_tensor(const Tensor<T>& t, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  encode_tensor(t, bytes);
  write_file_atomic(path, bytes);
}

template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::size_t pos = 0;
  auto t = decode_tensor<T>(bytes, pos);
  if (pos != bytes.size()) throw ValidationError("trailing bytes after tensor in '" + path.string() + "'");
  return t;
}

template void encode_tensor(const Tensor<float>&, std::vector<std::uint8_t>&);
template void encode_tensor(const Tensor<double>&, std::vector<std::uint8_t>&);
template Tensor<float> decode_tensor(const std::vector<std::uint8_t>&, std::size_t&);
template Tensor<double> decode_tensor(const std::vector<std::uint8_t>&, std::size_t&);
template void save_tensor(const Tensor<float>&, const std::filesystem::path&);
template void save_tensor(const Tensor<double>&, const std::filesystem::path&);
template Tensor<float> load_tensor(const std::filesystem::path&);
template Tensor<double> load_tensor(const std::filesystem::path&);

}  // namespace mfa
