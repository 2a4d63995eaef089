#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hazeforge::hztr {

// HZTR raster: magic "HZTR", u32 version, u32 ndim, ndim x u32 dims,
// little-endian float32 row-major payload.

inline constexpr uint32_t kVersion = 1;

void write(const std::string& path, const std::vector<uint32_t>& dims, const float* data);
// Throws FormatError on bad magic/version, IntegrityError on truncation.
std::vector<float> read(const std::string& path, std::vector<uint32_t>& dims_out);

}  // namespace hazeforge::hztr
