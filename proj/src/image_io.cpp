#include "zsad/image_io.hpp"

#include <cctype>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "zsad/errors.hpp"

namespace zsad {

namespace {

std::string read_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image file: " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_binary(const std::filesystem::path& path, const std::string& blob) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open image file for writing: " + path.string());
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw DataError("short write to image file: " + path.string());
}

// --- NetPBM -----------------------------------------------------------------

// Skips whitespace and '#' comments, then parses one decimal token.
std::size_t pnm_token(const std::string& blob, std::size_t& pos, const std::filesystem::path& p) {
    while (pos < blob.size()) {
        const char ch = blob[pos];
        if (ch == '#') {
            while (pos < blob.size() && blob[pos] != '\n') ++pos;
        } else if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
            ++pos;
        } else {
            break;
        }
    }
    std::size_t value = 0;
    bool any = false;
    while (pos < blob.size() && blob[pos] >= '0' && blob[pos] <= '9') {
        value = value * 10 + static_cast<std::size_t>(blob[pos] - '0');
        ++pos;
        any = true;
    }
    if (!any) throw DataError("malformed NetPBM header: " + p.string());
    return value;
}

RawImage read_pnm(const std::string& blob, const std::filesystem::path& path) {
    if (blob.size() < 2 || blob[0] != 'P' || (blob[1] != '5' && blob[1] != '6')) {
        throw DataError("unsupported NetPBM variant (need binary P5/P6): " + path.string());
    }
    RawImage img;
    img.channels = blob[1] == '6' ? 3 : 1;
    std::size_t pos = 2;
    img.width = pnm_token(blob, pos, path);
    img.height = pnm_token(blob, pos, path);
    const std::size_t maxval = pnm_token(blob, pos, path);
    if (maxval == 0 || maxval > 255) {
        throw DataError("NetPBM maxval out of 8-bit range: " + path.string());
    }
    ++pos;  // single whitespace after maxval
    const std::size_t need = img.width * img.height * img.channels;
    if (blob.size() < pos + need) throw DataError("truncated NetPBM payload: " + path.string());
    img.pixels.assign(blob.begin() + static_cast<std::ptrdiff_t>(pos),
                      blob.begin() + static_cast<std::ptrdiff_t>(pos + need));
    return img;
}

// --- PNG ---------------------------------------------------------------------

std::uint32_t be32(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void put_be32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
}

constexpr unsigned char kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::vector<std::uint8_t> zlib_inflate(const unsigned char* data, std::size_t len,
                                       std::size_t expected, const std::filesystem::path& path) {
    std::vector<std::uint8_t> out(expected);
    z_stream zs;
    std::memset(&zs, 0, sizeof(zs));
    if (inflateInit(&zs) != Z_OK) throw DataError("zlib init failed for " + path.string());
    zs.next_in = const_cast<Bytef*>(data);
    zs.avail_in = static_cast<uInt>(len);
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || zs.total_out != expected) {
        throw DataError("corrupt PNG pixel stream: " + path.string());
    }
    return out;
}

std::string zlib_deflate(const std::vector<std::uint8_t>& data) {
    uLongf bound = compressBound(static_cast<uLong>(data.size()));
    std::vector<std::uint8_t> out(bound);
    if (compress2(out.data(), &bound, data.data(), static_cast<uLong>(data.size()),
                  Z_DEFAULT_COMPRESSION) != Z_OK) {
        throw DataError("zlib deflate failed");
    }
    return std::string(reinterpret_cast<const char*>(out.data()), bound);
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a);
    const int pb = std::abs(p - b);
    const int pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

RawImage read_png(const std::string& blob, const std::filesystem::path& path) {
    if (blob.size() < 8 || std::memcmp(blob.data(), kPngSignature, 8) != 0) {
        throw DataError("not a PNG file: " + path.string());
    }
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());

    std::size_t width = 0, height = 0;
    int bit_depth = 0, color_type = -1, interlace = 0;
    std::vector<std::uint8_t> idat;

    std::size_t pos = 8;
    while (pos + 8 <= blob.size()) {
        const std::uint32_t len = be32(bytes + pos);
        if (pos + 12ull + len > blob.size()) throw DataError("truncated PNG: " + path.string());
        const std::string type(blob.substr(pos + 4, 4));
        const unsigned char* payload = bytes + pos + 8;
        if (type == "IHDR") {
            if (len != 13) throw DataError("bad IHDR: " + path.string());
            width = be32(payload);
            height = be32(payload + 4);
            bit_depth = payload[8];
            color_type = payload[9];
            interlace = payload[12];
        } else if (type == "IDAT") {
            idat.insert(idat.end(), payload, payload + len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12ull + len;
    }
    if (width == 0 || height == 0) throw DataError("PNG missing IHDR: " + path.string());
    if (bit_depth != 8 || interlace != 0) {
        throw DataError("unsupported PNG (need 8-bit non-interlaced): " + path.string());
    }
    std::size_t src_channels;
    switch (color_type) {
        case 0: src_channels = 1; break;  // gray
        case 2: src_channels = 3; break;  // rgb
        case 4: src_channels = 2; break;  // gray+alpha
        case 6: src_channels = 4; break;  // rgba
        default:
            throw DataError("unsupported PNG color type (palettes not handled): " + path.string());
    }

    const std::size_t stride = width * src_channels;
    auto raw = zlib_inflate(idat.data(), idat.size(), (stride + 1) * height, path);

    // Undo per-scanline filters in place.
    std::vector<std::uint8_t> image(stride * height);
    const std::size_t bpp = src_channels;
    for (std::size_t y = 0; y < height; ++y) {
        const std::uint8_t filter = raw[y * (stride + 1)];
        const std::uint8_t* src = raw.data() + y * (stride + 1) + 1;
        std::uint8_t* dst = image.data() + y * stride;
        const std::uint8_t* prev = y > 0 ? image.data() + (y - 1) * stride : nullptr;
        for (std::size_t x = 0; x < stride; ++x) {
            const int a = x >= bpp ? dst[x - bpp] : 0;
            const int b = prev != nullptr ? prev[x] : 0;
            const int c = (prev != nullptr && x >= bpp) ? prev[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw DataError("bad PNG filter byte: " + path.string());
            }
            dst[x] = static_cast<std::uint8_t>(v & 0xff);
        }
    }

    RawImage img;
    img.width = width;
    img.height = height;
    img.channels = (src_channels >= 3) ? 3 : 1;
    img.pixels.resize(width * height * img.channels);
    for (std::size_t i = 0; i < width * height; ++i) {
        for (std::size_t c = 0; c < img.channels; ++c) {
            img.pixels[i * img.channels + c] = image[i * src_channels + c];
        }
    }
    return img;
}

std::string png_chunk(const char type[4], const std::string& payload) {
    std::string chunk;
    put_be32(chunk, static_cast<std::uint32_t>(payload.size()));
    chunk.append(type, 4);
    chunk += payload;
    const auto crc =
        crc32(crc32(0L, nullptr, 0),
              reinterpret_cast<const Bytef*>(chunk.data() + 4), static_cast<uInt>(4 + payload.size()));
    put_be32(chunk, static_cast<std::uint32_t>(crc));
    return chunk;
}

} // namespace

RawImage read_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw DataError("image file not found: " + path.string());
    }
    const std::string blob = read_binary(path);
    auto ext = path.extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (ext == ".ppm" || ext == ".pgm") return read_pnm(blob, path);
    if (ext == ".png") return read_png(blob, path);
    // Fall back on content sniffing for unknown extensions.
    if (blob.size() >= 8 && std::memcmp(blob.data(), kPngSignature, 8) == 0) {
        return read_png(blob, path);
    }
    if (blob.size() >= 2 && blob[0] == 'P' && (blob[1] == '5' || blob[1] == '6')) {
        return read_pnm(blob, path);
    }
    throw DataError("unsupported image format: " + path.string());
}

void write_ppm(const std::filesystem::path& path, const RawImage& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw InputError("write_ppm: channels must be 1 or 3");
    }
    std::string blob = image.channels == 3 ? "P6\n" : "P5\n";
    blob += std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    blob.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
    write_binary(path, blob);
}

void write_png(const std::filesystem::path& path, const RawImage& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw InputError("write_png: channels must be 1 or 3");
    }
    const std::size_t stride = image.width * image.channels;
    std::vector<std::uint8_t> filtered((stride + 1) * image.height);
    for (std::size_t y = 0; y < image.height; ++y) {
        filtered[y * (stride + 1)] = 0;  // filter: none
        std::memcpy(filtered.data() + y * (stride + 1) + 1, image.pixels.data() + y * stride,
                    stride);
    }

    std::string ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(image.width));
    put_be32(ihdr, static_cast<std::uint32_t>(image.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(image.channels == 3 ? 2 : 0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);

    std::string blob(reinterpret_cast<const char*>(kPngSignature), 8);
    blob += png_chunk("IHDR", ihdr);
    blob += png_chunk("IDAT", zlib_deflate(filtered));
    blob += png_chunk("IEND", "");
    write_binary(path, blob);
}

} // namespace zsad
