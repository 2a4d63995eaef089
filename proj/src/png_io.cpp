#include "hazeforge/png_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace hazeforge::png {

namespace {

uint32_t crc32_table_entry(uint32_t n) {
    for (int k = 0; k < 8; ++k) n = (n & 1) ? 0xedb88320u ^ (n >> 1) : n >> 1;
    return n;
}

uint32_t crc32(const uint8_t* data, size_t len, uint32_t crc = 0xffffffffu) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) t[i] = crc32_table_entry(i);
        return t;
    }();
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
    return crc;
}

uint32_t adler32(const uint8_t* data, size_t len) {
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < len; ++i) {
        a = (a + data[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void write_chunk(std::ofstream& f, const char type[4], const std::vector<uint8_t>& payload) {
    std::vector<uint8_t> head;
    put_u32(head, static_cast<uint32_t>(payload.size()));
    f.write(reinterpret_cast<const char*>(head.data()), 4);
    std::vector<uint8_t> body(type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    f.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
    std::vector<uint8_t> crc;
    put_u32(crc, crc32(body.data(), body.size()) ^ 0xffffffffu);
    f.write(reinterpret_cast<const char*>(crc.data()), 4);
}

// ---- inflate ---------------------------------------------------------------

struct BitReader {
    const uint8_t* data;
    size_t len;
    size_t pos = 0;
    uint32_t bitbuf = 0;
    int bitcnt = 0;

    int bit() {
        if (bitcnt == 0) {
            if (pos >= len) throw FormatError("png: zlib stream truncated");
            bitbuf = data[pos++];
            bitcnt = 8;
        }
        const int b = bitbuf & 1;
        bitbuf >>= 1;
        --bitcnt;
        return b;
    }
    uint32_t bits(int n) {
        uint32_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<uint32_t>(bit()) << i;
        return v;
    }
    void align() { bitcnt = 0; }
};

struct Huffman {
    // canonical code tables per RFC 1951
    std::vector<uint16_t> counts;   // codes per bit length
    std::vector<uint16_t> symbols;  // symbols sorted by code

    void build(const uint8_t* lengths, int n) {
        counts.assign(16, 0);
        for (int i = 0; i < n; ++i) counts[lengths[i]]++;
        counts[0] = 0;
        symbols.assign(n, 0);
        std::vector<uint16_t> offs(16, 0);
        for (int len = 1; len < 16; ++len) offs[len] = offs[len - 1] + counts[len - 1];
        for (int i = 0; i < n; ++i)
            if (lengths[i]) symbols[offs[lengths[i]]++] = static_cast<uint16_t>(i);
    }

    int decode(BitReader& br) const {
        int code = 0, first = 0, index = 0;
        for (int len = 1; len < 16; ++len) {
            code |= br.bit();
            const int count = counts[len];
            if (code - first < count) return symbols[index + (code - first)];
            index += count;
            first = (first + count) << 1;
            code <<= 1;
        }
        throw FormatError("png: bad huffman code");
    }
};

std::vector<uint8_t> inflate(const uint8_t* data, size_t len) {
    if (len < 2) throw FormatError("png: zlib stream too short");
    // 2-byte zlib header, then deflate blocks
    BitReader br{data + 2, len - 2};
    std::vector<uint8_t> out;

    static const uint16_t len_base[29] = {3,  4,  5,  6,  7,  8,  9,  10, 11,  13,  15,  17,  19,  23, 27,
                                          31, 35, 43, 51, 59, 67, 83, 99, 115, 131, 163, 195, 227, 258};
    static const uint8_t len_extra[29] = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2,
                                          2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0};
    static const uint16_t dist_base[30] = {1,    2,    3,    4,    5,    7,     9,     13,    17,   25,
                                           33,   49,   65,   97,   129,  193,   257,   385,   513,  769,
                                           1025, 1537, 2049, 3073, 4097, 6145,  8193,  12289, 16385, 24577};
    static const uint8_t dist_extra[30] = {0, 0, 0, 0, 1, 1, 2, 2,  3,  3,  4,  4,  5,  5,  6,
                                           6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13};

    bool final = false;
    while (!final) {
        final = br.bit() != 0;
        const uint32_t type = br.bits(2);
        if (type == 0) {
            br.align();
            if (br.pos + 4 > br.len) throw FormatError("png: truncated stored block");
            const uint32_t n = br.data[br.pos] | (br.data[br.pos + 1] << 8);
            const uint32_t nn = br.data[br.pos + 2] | (br.data[br.pos + 3] << 8);
            if ((n ^ 0xffffu) != nn) throw FormatError("png: stored block length check failed");
            br.pos += 4;
            if (br.pos + n > br.len) throw FormatError("png: truncated stored block payload");
            out.insert(out.end(), br.data + br.pos, br.data + br.pos + n);
            br.pos += n;
        } else if (type == 1 || type == 2) {
            Huffman lit, dist;
            if (type == 1) {
                uint8_t lengths[288];
                for (int i = 0; i < 144; ++i) lengths[i] = 8;
                for (int i = 144; i < 256; ++i) lengths[i] = 9;
                for (int i = 256; i < 280; ++i) lengths[i] = 7;
                for (int i = 280; i < 288; ++i) lengths[i] = 8;
                lit.build(lengths, 288);
                uint8_t dlengths[30];
                for (auto& d : dlengths) d = 5;
                dist.build(dlengths, 30);
            } else {
                const int hlit = static_cast<int>(br.bits(5)) + 257;
                const int hdist = static_cast<int>(br.bits(5)) + 1;
                const int hclen = static_cast<int>(br.bits(4)) + 4;
                static const int order[19] = {16, 17, 18, 0, 8, 7, 9, 6, 10, 5, 11, 4, 12, 3, 13, 2, 14, 1, 15};
                uint8_t clen[19] = {};
                for (int i = 0; i < hclen; ++i) clen[order[i]] = static_cast<uint8_t>(br.bits(3));
                Huffman cl;
                cl.build(clen, 19);
                std::vector<uint8_t> lengths(static_cast<size_t>(hlit) + hdist, 0);
                size_t i = 0;
                while (i < lengths.size()) {
                    const int sym = cl.decode(br);
                    if (sym < 16) {
                        lengths[i++] = static_cast<uint8_t>(sym);
                    } else if (sym == 16) {
                        if (i == 0) throw FormatError("png: bad code length repeat");
                        const int rep = 3 + static_cast<int>(br.bits(2));
                        for (int r = 0; r < rep; ++r, ++i) lengths[i] = lengths[i - 1];
                    } else if (sym == 17) {
                        i += 3 + br.bits(3);
                    } else {
                        i += 11 + br.bits(7);
                    }
                }
                lit.build(lengths.data(), hlit);
                dist.build(lengths.data() + hlit, hdist);
            }
            while (true) {
                const int sym = lit.decode(br);
                if (sym < 256) {
                    out.push_back(static_cast<uint8_t>(sym));
                } else if (sym == 256) {
                    break;
                } else {
                    const int li = sym - 257;
                    if (li >= 29) throw FormatError("png: bad length symbol");
                    const uint32_t length = len_base[li] + br.bits(len_extra[li]);
                    const int di = dist.decode(br);
                    if (di >= 30) throw FormatError("png: bad distance symbol");
                    const uint32_t distance = dist_base[di] + br.bits(dist_extra[di]);
                    if (distance > out.size()) throw FormatError("png: distance past start of output");
                    for (uint32_t r = 0; r < length; ++r) out.push_back(out[out.size() - distance]);
                }
            }
        } else {
            throw FormatError("png: reserved deflate block type");
        }
    }
    return out;
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("png: cannot open for writing: " + path);
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    f.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(img.width));
    put_u32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type RGB
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter
    ihdr.push_back(0);  // no interlace
    write_chunk(f, "IHDR", ihdr);

    // raw scanlines, filter byte 0
    const size_t stride = static_cast<size_t>(img.width) * 3 + 1;
    std::vector<uint8_t> raw(stride * img.height);
    for (int y = 0; y < img.height; ++y) {
        uint8_t* row = raw.data() + y * stride;
        row[0] = 0;
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(img.at(y, x, c), 0.0f, 1.0f);
                row[1 + x * 3 + c] = static_cast<uint8_t>(std::lround(v * 255.0f));
            }
    }

    // zlib wrapper with stored (uncompressed) deflate blocks
    std::vector<uint8_t> z;
    z.push_back(0x78);
    z.push_back(0x01);
    size_t off = 0;
    while (off < raw.size()) {
        const size_t n = std::min<size_t>(65535, raw.size() - off);
        const bool last = off + n == raw.size();
        z.push_back(last ? 1 : 0);
        z.push_back(static_cast<uint8_t>(n & 0xff));
        z.push_back(static_cast<uint8_t>(n >> 8));
        z.push_back(static_cast<uint8_t>(~n & 0xff));
        z.push_back(static_cast<uint8_t>((~n >> 8) & 0xff));
        z.insert(z.end(), raw.begin() + off, raw.begin() + off + n);
        off += n;
    }
    put_u32(z, adler32(raw.data(), raw.size()));
    write_chunk(f, "IDAT", z);
    write_chunk(f, "IEND", {});
    if (!f) throw IoError("png: write failed: " + path);
}

Image read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("png: cannot open: " + path);
    std::vector<uint8_t> file((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0)
        throw FormatError("png: bad signature in " + path);

    size_t pos = 8;
    uint32_t width = 0, height = 0;
    int bit_depth = 0, color_type = 0;
    std::vector<uint8_t> idat;
    auto read_u32 = [&](size_t p) {
        return (static_cast<uint32_t>(file[p]) << 24) | (file[p + 1] << 16) | (file[p + 2] << 8) | file[p + 3];
    };
    while (pos + 8 <= file.size()) {
        const uint32_t len = read_u32(pos);
        if (pos + 12 + len > file.size()) throw FormatError("png: truncated chunk in " + path);
        const char* type = reinterpret_cast<const char*>(file.data() + pos + 4);
        const uint8_t* payload = file.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            width = read_u32(pos + 8);
            height = read_u32(pos + 12);
            bit_depth = payload[8];
            color_type = payload[9];
            if (payload[12] != 0) throw FormatError("png: interlaced images not supported: " + path);
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (width == 0 || height == 0 || idat.empty()) throw FormatError("png: missing IHDR/IDAT in " + path);
    if (bit_depth != 8) throw FormatError("png: only 8-bit images supported: " + path);
    int channels = 0;
    switch (color_type) {
        case 0: channels = 1; break;
        case 2: channels = 3; break;
        case 6: channels = 4; break;
        default: throw FormatError("png: unsupported color type " + std::to_string(color_type) + ": " + path);
    }

    std::vector<uint8_t> raw = inflate(idat.data(), idat.size());
    const size_t stride = static_cast<size_t>(width) * channels;
    if (raw.size() < (stride + 1) * height) throw IntegrityError("png: decompressed data too short: " + path);

    // undo per-row filters in place
    std::vector<uint8_t> pix(stride * height);
    for (uint32_t y = 0; y < height; ++y) {
        const uint8_t filter = raw[y * (stride + 1)];
        const uint8_t* src = raw.data() + y * (stride + 1) + 1;
        uint8_t* dst = pix.data() + y * stride;
        const uint8_t* prev = y > 0 ? pix.data() + (y - 1) * stride : nullptr;
        for (size_t x = 0; x < stride; ++x) {
            const int a = x >= static_cast<size_t>(channels) ? dst[x - channels] : 0;
            const int b = prev ? prev[x] : 0;
            const int c = (prev && x >= static_cast<size_t>(channels)) ? prev[x - channels] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw FormatError("png: unknown filter type in " + path);
            }
            dst[x] = static_cast<uint8_t>(v & 0xff);
        }
    }

    Image img(static_cast<int>(height), static_cast<int>(width));
    for (uint32_t y = 0; y < height; ++y)
        for (uint32_t x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c) {
                const uint8_t v = channels == 1 ? pix[y * stride + x] : pix[y * stride + x * channels + c];
                img.at(static_cast<int>(y), static_cast<int>(x), c) = static_cast<float>(v) / 255.0f;
            }
    return img;
}

}  // namespace hazeforge::png
