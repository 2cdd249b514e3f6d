#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mfa/tensor.hpp"

namespace mfa {

/// Element type tag stored in the binary tensor header.
enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

// Binary tensor layout ("TNSR"), all little-endian:
//   magic "TNSR" | u32 version = 1 | u8 dtype (1 = f32, 2 = f64) | u8 ndim = 4
//   | 4 x u64 dims | row-major payload

/// Appends the encoded tensor to `out`.
template <typename T>
void encode_tensor(const Tensor<T>& t, std::vector<std::uint8_t>& out);

/// Decodes one tensor starting at `pos`, advancing it. Values stored in the other
/// precision are converted. Throws ValidationError on malformed input.
template <typename T>
Tensor<T> decode_tensor(const std::vector<std::uint8_t>& in, std::size_t& pos);

/// dtype tag of the tensor encoded at `pos` (does not advance).
DType peek_dtype(const std::vector<std::uint8_t>& in, std::size_t pos);

template <typename T>
void save_tensor(const Tensor<T>& t, const std::filesystem::path& path);

template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path);

// Little-endian primitives shared by the container formats.
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& pos);
std::uint64_t get_u64(const std::vector<std::uint8_t>& in, std::size_t& pos);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames into place.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace mfa
