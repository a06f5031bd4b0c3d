#pragma once

// Internal helpers shared by the mock backbone and the weight-bundle adapter.
// Both encoders are affine: patch pixels and mean-pooled token rows go through
// linear projections, with L2 normalization on the text side.

#include <map>
#include <vector>

#include "zsad/backbone.hpp"

namespace zsad::detail {

Vec matvec(const Matrix& m, const Vec& x);
Vec matvec_transposed(const Matrix& m, const Vec& x);  // M^T x

// Dense patch features for one projection (D x C*p*p): one row per patch in
// row-major grid order; grid side = floor(resolution / patch_size).
Matrix project_patches(const Image& image, const Matrix& projection, int patch_size);

// Averages the selected blocks' patch maps element-wise and derives the two
// global tokens: spatial = mean patch feature, object = projection of a patch
// filled with the per-channel mean pixel.
VisualFeatures fuse_visual_features(const Image& image,
                                    const std::map<int, Matrix>& projections,
                                    const std::vector<int>& layers, int patch_size);

TextEmbedding pool_project_normalize(const Matrix& tokens, const Matrix& projection);

// Gradient of pool_project_normalize w.r.t. every token row.
Matrix pool_project_normalize_backward(const Matrix& tokens, const Matrix& projection,
                                       const Vec& grad_embedding);

void check_image_shape(const Image& image, const BackboneConfig& config);

void check_token_sequence(const TokenEmbeddingSequence& seq, const BackboneConfig& config,
                          std::size_t max_context);

} // namespace zsad::detail
