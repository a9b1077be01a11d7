#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slk/ndarray.hpp"

namespace slk {

enum class DType : std::uint8_t { f64 = 0, f32 = 1 };

// "SLK1", u8 dtype, u8 ndim, ndim x u32 LE extents, raw row-major data.
std::vector<std::uint8_t> encode_array(const NdArray& a, DType dtype = DType::f64);
NdArray decode_array(const std::vector<std::uint8_t>& bytes);

void save_array(const std::filesystem::path& path, const NdArray& a, DType dtype = DType::f64);
NdArray load_array(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::vector<std::uint8_t>& bytes);

}  // namespace slk
