#include "antehoc/png.hpp"

#include <zlib.h>

#include <fstream>
#include <stdexcept>

namespace antehoc {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& payload) {
  put_u32(out, std::uint32_t(payload.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uLong crc = crc32(crc32(0L, Z_NULL, 0), out.data() + crc_start,
                          uInt(out.size() - crc_start));
  put_u32(out, std::uint32_t(crc));
}

}  // namespace

void write_png_rgb(const std::string& path, std::size_t width,
                   std::size_t height, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != width * height * 3)
    throw std::invalid_argument("write_png_rgb: buffer size mismatch");
  // Raw image with a filter-type-0 byte per scanline.
  std::vector<std::uint8_t> raw;
  raw.reserve(height * (1 + width * 3));
  for (std::size_t y = 0; y < height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), rgb.begin() + std::ptrdiff_t(y * width * 3),
               rgb.begin() + std::ptrdiff_t((y + 1) * width * 3));
  }
  uLongf comp_len = compressBound(uLong(raw.size()));
  std::vector<std::uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), uLong(raw.size()), 6) !=
      Z_OK)
    throw std::runtime_error("write_png_rgb: compression failed");
  comp.resize(comp_len);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, std::uint32_t(width));
  put_u32(ihdr, std::uint32_t(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", comp);
  put_chunk(out, "IEND", {});

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_png_rgb: cannot open " + path);
  os.write(reinterpret_cast<const char*>(out.data()),
           std::streamsize(out.size()));
  if (!os) throw std::runtime_error("write_png_rgb: write failed for " + path);
}

}  // namespace antehoc
