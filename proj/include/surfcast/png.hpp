#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace surfcast {

// Minimal RGB8 PNG writer (zlib-compressed, filter 0).
void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb);

}  // namespace surfcast
