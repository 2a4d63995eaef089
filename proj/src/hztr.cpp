#include "hazeforge/hztr.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "hazeforge/errors.hpp"

namespace hazeforge::hztr {

static_assert(std::endian::native == std::endian::little, "HZTR I/O assumes a little-endian host");

namespace {
constexpr char kMagic[4] = {'H', 'Z', 'T', 'R'};
}

void write(const std::string& path, const std::vector<uint32_t>& dims, const float* data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("hztr: cannot open for writing: " + path);
    f.write(kMagic, 4);
    uint32_t version = kVersion;
    uint32_t ndim = static_cast<uint32_t>(dims.size());
    f.write(reinterpret_cast<const char*>(&version), 4);
    f.write(reinterpret_cast<const char*>(&ndim), 4);
    size_t count = 1;
    for (uint32_t d : dims) {
        f.write(reinterpret_cast<const char*>(&d), 4);
        count *= d;
    }
    f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(float)));
    if (!f) throw IoError("hztr: write failed: " + path);
}

std::vector<float> read(const std::string& path, std::vector<uint32_t>& dims_out) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("hztr: cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("hztr: bad magic in " + path);
    uint32_t version = 0, ndim = 0;
    f.read(reinterpret_cast<char*>(&version), 4);
    f.read(reinterpret_cast<char*>(&ndim), 4);
    if (!f) throw FormatError("hztr: truncated header in " + path);
    if (version != kVersion)
        throw FormatError("hztr: unsupported version " + std::to_string(version) + " in " + path);
    if (ndim == 0 || ndim > 8) throw FormatError("hztr: implausible ndim in " + path);
    dims_out.resize(ndim);
    size_t count = 1;
    for (uint32_t i = 0; i < ndim; ++i) {
        f.read(reinterpret_cast<char*>(&dims_out[i]), 4);
        count *= dims_out[i];
    }
    if (!f) throw FormatError("hztr: truncated dims in " + path);
    std::vector<float> data(count);
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<size_t>(f.gcount()) != count * sizeof(float))
        throw IntegrityError("hztr: truncated payload in " + path);
    return data;
}

}  // namespace hazeforge::hztr
