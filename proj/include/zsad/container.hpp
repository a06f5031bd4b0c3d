#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "zsad/common.hpp"

namespace zsad::container {

// Shared on-disk container: 4-byte magic, u32 little-endian header length,
// JSON header, then the tensors listed under header["tensors"] as raw
// little-endian float32 in listing order. Used by prompt checkpoints,
// backbone weight bundles and raw anomaly-map exports.

struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<float> values;

    std::size_t element_count() const {
        std::size_t n = 1;
        for (std::size_t s : shape) n *= s;
        return n;
    }
};

struct File {
    nlohmann::json meta;          // header without the "tensors" key
    std::vector<Tensor> tensors;

    const Tensor& tensor(const std::string& name) const;  // FormatError if absent
};

void write_file(const std::filesystem::path& path, const char magic[4],
                const nlohmann::ordered_json& meta, const std::vector<Tensor>& tensors);

// Throws AssetError when the file does not exist, FormatError on bad magic,
// truncated payload or malformed header.
File read_file(const std::filesystem::path& path, const char magic[4]);

Tensor from_matrix(const std::string& name, const Matrix& m);
Matrix to_matrix(const Tensor& t);  // requires 2-D shape

} // namespace zsad::container
