#include "zsad/common.hpp"

#include <cmath>

namespace zsad {

double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    const std::size_t n = a.size() < b.size() ? a.size() : b.size();
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

Vec l2_normalize(const Vec& v) {
    double n = l2_norm(v);
    if (n < 1e-12) n = 1e-12;
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

bool all_finite(const Vec& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

bool all_finite(const Matrix& m) {
    for (double x : m.data) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    return fnv1a64(bytes.data(), bytes.size(), 0xcbf29ce484222325ULL);
}

std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

double Rng::normal() {
    // u1 in (0, 1] so the log stays finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
    std::uint64_t h = fnv1a64(tag);
    Rng mix(root ^ h);
    return mix.next_u64();
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index) {
    Rng mix(derive_seed(root, tag) ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
    return mix.next_u64();
}

} // namespace zsad
