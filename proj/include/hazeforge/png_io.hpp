#pragma once

#include <string>

#include "hazeforge/image.hpp"

namespace hazeforge::png {

// 8-bit PNG exchange path. Writing quantizes linear [0,1] floats to 8-bit
// RGB (no gamma applied; the HZTR raster is the lossless path). Reading
// accepts 8-bit grayscale / RGB / RGBA, non-interlaced, any zlib stream.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

}  // namespace hazeforge::png
