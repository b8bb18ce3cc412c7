#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace antehoc {

// Minimal truecolor PNG encoder (zlib-compressed, deterministic bytes).
// rgb is row-major, 3 bytes per pixel.
void write_png_rgb(const std::string& path, std::size_t width,
                   std::size_t height, const std::vector<std::uint8_t>& rgb);

}  // namespace antehoc
