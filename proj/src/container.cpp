#include "zsad/container.hpp"

#include <cstring>
#include <fstream>

#include "zsad/errors.hpp"

namespace zsad::container {

namespace {

void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32_le(std::string& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    put_u32_le(out, bits);
}

std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float get_f32_le(const unsigned char* p) {
    std::uint32_t bits = get_u32_le(p);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return f;
}

} // namespace

const Tensor& File::tensor(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return t;
    }
    throw FormatError("container: tensor '" + name + "' not present");
}

void write_file(const std::filesystem::path& path, const char magic[4],
                const nlohmann::ordered_json& meta, const std::vector<Tensor>& tensors) {
    nlohmann::ordered_json header = meta;
    nlohmann::ordered_json listing = nlohmann::ordered_json::array();
    for (const auto& t : tensors) {
        nlohmann::ordered_json entry;
        entry["name"] = t.name;
        entry["shape"] = t.shape;
        entry["dtype"] = "float32";
        listing.push_back(entry);
        if (t.values.size() != t.element_count()) {
            throw FormatError("container: tensor '" + t.name + "' shape/value mismatch");
        }
    }
    header["tensors"] = listing;
    const std::string header_str = header.dump();

    std::string blob;
    blob.append(magic, 4);
    put_u32_le(blob, static_cast<std::uint32_t>(header_str.size()));
    blob += header_str;
    for (const auto& t : tensors) {
        for (float f : t.values) put_f32_le(blob, f);
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("container: cannot open '" + path.string() + "' for writing");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw DataError("container: short write to '" + path.string() + "'");
}

File read_file(const std::filesystem::path& path, const char magic[4]) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AssetError("container: file not found: " + path.string());
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (blob.size() < 8) throw FormatError("container: truncated file: " + path.string());
    if (std::memcmp(blob.data(), magic, 4) != 0) {
        throw FormatError("container: bad magic in " + path.string() + " (expected '" +
                          std::string(magic, 4) + "')");
    }
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    const std::uint32_t header_len = get_u32_le(bytes + 4);
    if (blob.size() < 8ull + header_len) {
        throw FormatError("container: truncated header: " + path.string());
    }

    File file;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(blob.substr(8, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("container: unparseable header in " + path.string() + ": " + e.what());
    }
    if (!header.contains("tensors") || !header["tensors"].is_array()) {
        throw FormatError("container: header missing tensor listing: " + path.string());
    }

    std::size_t offset = 8ull + header_len;
    for (const auto& entry : header["tensors"]) {
        Tensor t;
        t.name = entry.value("name", "");
        if (entry.value("dtype", "") != "float32") {
            throw FormatError("container: tensor '" + t.name + "' has unsupported dtype");
        }
        for (const auto& s : entry["shape"]) t.shape.push_back(s.get<std::size_t>());
        const std::size_t n = t.element_count();
        if (blob.size() < offset + 4 * n) {
            throw FormatError("container: truncated payload for tensor '" + t.name + "'");
        }
        t.values.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            t.values[i] = get_f32_le(bytes + offset + 4 * i);
        }
        offset += 4 * n;
        file.tensors.push_back(std::move(t));
    }
    header.erase("tensors");
    file.meta = std::move(header);
    return file;
}

Tensor from_matrix(const std::string& name, const Matrix& m) {
    Tensor t;
    t.name = name;
    t.shape = {m.rows, m.cols};
    t.values.reserve(m.data.size());
    for (double v : m.data) t.values.push_back(static_cast<float>(v));
    return t;
}

Matrix to_matrix(const Tensor& t) {
    if (t.shape.size() != 2) {
        throw FormatError("container: tensor '" + t.name + "' is not 2-D");
    }
    Matrix m(t.shape[0], t.shape[1]);
    for (std::size_t i = 0; i < t.values.size(); ++i) m.data[i] = t.values[i];
    return m;
}

} // namespace zsad::container
