#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace zsad {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. All numeric state in the toolkit lives
// in doubles; serialized tensors are quantized to float32 at the file layer.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    Vec row(std::size_t r) const {
        return Vec(data.begin() + static_cast<std::ptrdiff_t>(r * cols),
                   data.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
    }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    bool operator==(const Matrix& other) const {
        return rows == other.rows && cols == other.cols && data == other.data;
    }
};

// Planar channel-major image tensor (C x H x W).
struct Image {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> data;

    Image() = default;
    Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
        : channels(c), height(h), width(w), data(c * h * w, fill) {}

    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return data[(c * height + y) * width + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return data[(c * height + y) * width + x];
    }
};

// Binary H x W mask, 1 marks anomalous pixels.
struct Mask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(std::size_t h, std::size_t w, std::uint8_t fill = 0)
        : height(h), width(w), data(h * w, fill) {}

    std::uint8_t& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
    std::uint8_t at(std::size_t y, std::size_t x) const { return data[y * width + x]; }

    std::size_t positive_count() const {
        std::size_t n = 0;
        for (auto v : data) n += (v != 0);
        return n;
    }

    bool operator==(const Mask& other) const {
        return height == other.height && width == other.width && data == other.data;
    }
};

double dot(const Vec& a, const Vec& b);
double l2_norm(const Vec& v);
// Normalizes to unit length; norms below 1e-12 are clamped to avoid division blowup.
Vec l2_normalize(const Vec& v);
bool all_finite(const Vec& v);
bool all_finite(const Matrix& m);

// FNV-1a 64-bit over bytes. Stable across platforms; used for mock embedding
// seeds and pipeline fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t seed);

// SplitMix64 generator with hand-rolled Box-Muller. The standard library
// distributions are implementation-defined, which would break cross-platform
// reproducibility, so every random draw in the toolkit goes through this.
struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed) : state(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, two uniforms per draw, no cached second sample.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Unbiased-enough index draw for shuffling and sampling.
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(next_u64() % (n == 0 ? 1 : n));
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(next_u64() % (i + 1));
            std::swap(v[i], v[j]);
        }
    }
};

// Derives a child seed from a root seed and a tag, so independent streams
// (init, shuffling, per-layer weights) never collide.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index);

} // namespace zsad
