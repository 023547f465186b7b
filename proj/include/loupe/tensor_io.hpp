#pragma once

// Raw tensor files ("KSR1") and 8-bit grayscale PNG export.
//
// KSR1 layout, little-endian: magic "KSR1", u32 rank, u32 dims[rank], then
// product(dims) f64 values in row-major order. Complex tensors are stored
// with a trailing dimension of 2.

#include "loupe/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace loupe {

using Bytes = std::vector<std::uint8_t>;

void append_u32(Bytes &out, std::uint32_t v);
void append_u64(Bytes &out, std::uint64_t v);
void append_f64(Bytes &out, double v);

// Bounds-checked little-endian reader; throws FormatError(Truncated).
class ByteReader
{
public:
  ByteReader(std::uint8_t const *data, std::size_t size)
    : data_(data)
    , size_(size)
  {
  }
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  void f64s(double *dst, std::size_t n);
  void bytes(void *dst, std::size_t n);
  std::size_t remaining() const { return size_ - pos_; }
  std::size_t position() const { return pos_; }

private:
  void need(std::size_t n) const;
  std::uint8_t const *data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

Bytes read_file(std::filesystem::path const &path);
void write_file(std::filesystem::path const &path, Bytes const &bytes);

void encode_tensor(Bytes &out, RTensor const &t);
RTensor decode_tensor(ByteReader &in);

void write_tensor(std::filesystem::path const &path, RTensor const &t);
RTensor read_tensor(std::filesystem::path const &path);

// Grayscale PNG of a [H,W] image; values are clamped to [0,1], scaled by 255
// and rounded.
void write_png_gray(std::filesystem::path const &path, RTensor const &img);

} // namespace loupe
