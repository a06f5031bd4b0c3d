#include "encoder_core.hpp"

#include <algorithm>
#include <cmath>

#include "zsad/errors.hpp"

namespace zsad::detail {

Vec matvec(const Matrix& m, const Vec& x) {
    Vec out(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        double s = 0.0;
        const double* row = m.data.data() + r * m.cols;
        for (std::size_t c = 0; c < m.cols; ++c) s += row[c] * x[c];
        out[r] = s;
    }
    return out;
}

Vec matvec_transposed(const Matrix& m, const Vec& x) {
    Vec out(m.cols, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.data.data() + r * m.cols;
        for (std::size_t c = 0; c < m.cols; ++c) out[c] += row[c] * x[r];
    }
    return out;
}

void check_image_shape(const Image& image, const BackboneConfig& config) {
    const auto res = static_cast<std::size_t>(config.input_resolution);
    if (image.height != res || image.width != res) {
        throw InputError("encode_image: expected " + std::to_string(res) + "x" +
                         std::to_string(res) + " input, got " + std::to_string(image.height) +
                         "x" + std::to_string(image.width));
    }
    if (image.channels != static_cast<std::size_t>(config.channels())) {
        throw InputError("encode_image: expected " + std::to_string(config.channels()) +
                         " channels, got " + std::to_string(image.channels));
    }
}

void check_token_sequence(const TokenEmbeddingSequence& seq, const BackboneConfig& config,
                          std::size_t max_context) {
    const std::size_t L = seq.tokens.rows;
    if (L < 1) throw InputError("encode_token_sequence: empty sequence");
    if (L > max_context) {
        throw InputError("encode_token_sequence: length " + std::to_string(L) +
                         " exceeds context limit " + std::to_string(max_context));
    }
    if (seq.tokens.cols != static_cast<std::size_t>(config.text_token_dim)) {
        throw InputError("encode_token_sequence: token width " + std::to_string(seq.tokens.cols) +
                         " != configured D_t " + std::to_string(config.text_token_dim));
    }
    if (!all_finite(seq.tokens)) {
        throw InputError("encode_token_sequence: non-finite token row");
    }
}

Matrix project_patches(const Image& image, const Matrix& projection, int patch_size) {
    const std::size_t p = static_cast<std::size_t>(patch_size);
    const std::size_t side = image.height / p;
    const std::size_t n = side * side;

    Matrix features(n, projection.rows);
    Vec patch(projection.cols);
    for (std::size_t gy = 0; gy < side; ++gy) {
        for (std::size_t gx = 0; gx < side; ++gx) {
            std::size_t k = 0;
            for (std::size_t c = 0; c < image.channels; ++c) {
                for (std::size_t y = 0; y < p; ++y) {
                    for (std::size_t x = 0; x < p; ++x) {
                        patch[k++] = image.at(c, gy * p + y, gx * p + x);
                    }
                }
            }
            Vec row = matvec(projection, patch);
            std::copy(row.begin(), row.end(),
                      features.data.begin() +
                          static_cast<std::ptrdiff_t>((gy * side + gx) * features.cols));
        }
    }
    return features;
}

VisualFeatures fuse_visual_features(const Image& image,
                                    const std::map<int, Matrix>& projections,
                                    const std::vector<int>& layers, int patch_size) {
    const std::size_t d = projections.at(layers.front()).rows;
    const std::size_t side = image.height / static_cast<std::size_t>(patch_size);
    const std::size_t n = side * side;

    Matrix patches(n, d, 0.0);
    for (int l : layers) {
        Matrix layer = project_patches(image, projections.at(l), patch_size);
        for (std::size_t i = 0; i < layer.data.size(); ++i) patches.data[i] += layer.data[i];
    }
    const double inv = 1.0 / static_cast<double>(layers.size());
    for (double& v : patches.data) v *= inv;

    VisualFeatures out;
    out.grid_h = side;
    out.grid_w = side;

    out.spatial_token.assign(d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) out.spatial_token[c] += patches.at(r, c);
    }
    for (double& v : out.spatial_token) v /= static_cast<double>(n);

    Vec channel_mean(image.channels, 0.0);
    for (std::size_t c = 0; c < image.channels; ++c) {
        double s = 0.0;
        const double* plane = image.data.data() + c * image.height * image.width;
        for (std::size_t i = 0; i < image.height * image.width; ++i) s += plane[i];
        channel_mean[c] = s / static_cast<double>(image.height * image.width);
    }
    const std::size_t p = static_cast<std::size_t>(patch_size);
    Vec mean_patch(image.channels * p * p);
    std::size_t k = 0;
    for (std::size_t c = 0; c < image.channels; ++c) {
        for (std::size_t i = 0; i < p * p; ++i) mean_patch[k++] = channel_mean[c];
    }
    out.object_token.assign(d, 0.0);
    for (int l : layers) {
        Vec proj = matvec(projections.at(l), mean_patch);
        for (std::size_t c = 0; c < d; ++c) out.object_token[c] += proj[c];
    }
    for (double& v : out.object_token) v *= inv;

    out.patch_features = std::move(patches);
    return out;
}

TextEmbedding pool_project_normalize(const Matrix& tokens, const Matrix& projection) {
    Vec pooled(tokens.cols, 0.0);
    for (std::size_t r = 0; r < tokens.rows; ++r) {
        for (std::size_t c = 0; c < tokens.cols; ++c) pooled[c] += tokens.at(r, c);
    }
    for (double& v : pooled) v /= static_cast<double>(tokens.rows);
    return TextEmbedding{l2_normalize(matvec(projection, pooled)), true};
}

Matrix pool_project_normalize_backward(const Matrix& tokens, const Matrix& projection,
                                       const Vec& grad_embedding) {
    const std::size_t L = tokens.rows;
    Vec pooled(tokens.cols, 0.0);
    for (std::size_t r = 0; r < L; ++r) {
        for (std::size_t c = 0; c < tokens.cols; ++c) pooled[c] += tokens.at(r, c);
    }
    for (double& v : pooled) v /= static_cast<double>(L);

    Vec u = matvec(projection, pooled);
    double norm = l2_norm(u);
    if (norm < 1e-12) norm = 1e-12;
    Vec g(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) g[i] = u[i] / norm;

    // Through g = u/|u|: grad_u = (grad - <grad,g> g) / |u|.
    const double gg = dot(grad_embedding, g);
    Vec grad_u(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) grad_u[i] = (grad_embedding[i] - gg * g[i]) / norm;

    Vec grad_pooled = matvec_transposed(projection, grad_u);

    Matrix grad_rows(L, tokens.cols);
    const double inv_l = 1.0 / static_cast<double>(L);
    for (std::size_t r = 0; r < L; ++r) {
        for (std::size_t c = 0; c < tokens.cols; ++c) grad_rows.at(r, c) = grad_pooled[c] * inv_l;
    }
    return grad_rows;
}

} // namespace zsad::detail
