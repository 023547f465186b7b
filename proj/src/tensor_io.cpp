#include "loupe/tensor_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace loupe {

namespace {

constexpr char kTensorMagic[4] = {'K', 'S', 'R', '1'};
constexpr std::size_t kMaxRank = 8;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;

template <typename T>
T to_le(T v)
{
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <typename T>
void append_raw(Bytes &out, T v)
{
  v = to_le(v);
  auto const *p = reinterpret_cast<std::uint8_t const *>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

void append_be32(Bytes &out, std::uint32_t v)
{
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

} // namespace

void append_u32(Bytes &out, std::uint32_t v)
{
  append_raw(out, v);
}

void append_u64(Bytes &out, std::uint64_t v)
{
  append_raw(out, v);
}

void append_f64(Bytes &out, double v)
{
  append_raw(out, std::bit_cast<std::uint64_t>(v));
}

void ByteReader::need(std::size_t n) const
{
  if (n > size_ - pos_) {
    throw FormatError(FormatErrorKind::Truncated, "unexpected end of data at byte " + std::to_string(pos_) +
                                                      " (need " + std::to_string(n) + " more)");
  }
}

void ByteReader::bytes(void *dst, std::size_t n)
{
  need(n);
  std::memcpy(dst, data_ + pos_, n);
  pos_ += n;
}

std::uint32_t ByteReader::u32()
{
  std::uint32_t v;
  bytes(&v, sizeof v);
  return to_le(v);
}

std::uint64_t ByteReader::u64()
{
  std::uint64_t v;
  bytes(&v, sizeof v);
  return to_le(v);
}

double ByteReader::f64()
{
  return std::bit_cast<double>(u64());
}

void ByteReader::f64s(double *dst, std::size_t n)
{
  need(n * 8);
  std::memcpy(dst, data_ + pos_, n * 8);
  pos_ += n * 8;
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < n; ++i) {
      dst[i] = std::bit_cast<double>(to_le(std::bit_cast<std::uint64_t>(dst[i])));
    }
  }
}

Bytes read_file(std::filesystem::path const &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(std::filesystem::path const &path, Bytes const &bytes)
{
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out.write(reinterpret_cast<char const *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

void encode_tensor(Bytes &out, RTensor const &t)
{
  out.insert(out.end(), kTensorMagic, kTensorMagic + 4);
  append_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) {
    append_u32(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + t.size() * 8);
  for (double v : t.values()) {
    append_f64(out, v);
  }
}

RTensor decode_tensor(ByteReader &in)
{
  char magic[4];
  in.bytes(magic, 4);
  if (std::memcmp(magic, kTensorMagic, 4) != 0) {
    throw FormatError(FormatErrorKind::BadMagic, "not a KSR1 tensor");
  }
  std::uint32_t const rank = in.u32();
  if (rank > kMaxRank) {
    throw FormatError(FormatErrorKind::DimensionOverflow, "tensor rank " + std::to_string(rank) + " too large");
  }
  Shape shape(rank);
  std::uint64_t total = 1;
  for (auto &d : shape) {
    d = in.u32();
    total *= d;
    if (total > kMaxElements) {
      throw FormatError(FormatErrorKind::DimensionOverflow, "tensor too large");
    }
  }
  RTensor t(shape);
  in.f64s(t.data(), t.size());
  return t;
}

void write_tensor(std::filesystem::path const &path, RTensor const &t)
{
  Bytes b;
  encode_tensor(b, t);
  write_file(path, b);
}

RTensor read_tensor(std::filesystem::path const &path)
{
  Bytes const b = read_file(path);
  ByteReader in(b.data(), b.size());
  RTensor t = decode_tensor(in);
  if (in.remaining() != 0) {
    throw FormatError(FormatErrorKind::Invalid, path.string() + ": trailing bytes after tensor");
  }
  return t;
}

void write_png_gray(std::filesystem::path const &path, RTensor const &img)
{
  if (img.rank() != 2) {
    throw ShapeError("write_png_gray: expected [H,W], got " + shape_str(img.shape()));
  }
  auto const h = static_cast<std::uint32_t>(img.dim(0)), w = static_cast<std::uint32_t>(img.dim(1));

  Bytes raw;
  raw.reserve(static_cast<std::size_t>(h) * (w + 1));
  for (std::uint32_t r = 0; r < h; ++r) {
    raw.push_back(0); // filter: none
    for (std::uint32_t c = 0; c < w; ++c) {
      double const v = std::clamp(img(r, c), 0.0, 1.0);
      raw.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  Bytes z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw IoError("png: deflate failed");
  }
  z.resize(zlen);

  Bytes png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  auto chunk = [&](char const *type, Bytes const &data) {
    append_be32(png, static_cast<std::uint32_t>(data.size()));
    std::size_t const start = png.size();
    png.insert(png.end(), type, type + 4);
    png.insert(png.end(), data.begin(), data.end());
    auto const crc = crc32(0, png.data() + start, static_cast<uInt>(png.size() - start));
    append_be32(png, static_cast<std::uint32_t>(crc));
  };
  Bytes ihdr;
  append_be32(ihdr, w);
  append_be32(ihdr, h);
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0}); // 8-bit grayscale, deflate, no interlace
  chunk("IHDR", ihdr);
  chunk("IDAT", z);
  chunk("IEND", {});
  write_file(path, png);
}

} // namespace loupe
