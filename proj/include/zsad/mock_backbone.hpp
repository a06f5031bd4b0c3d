#pragma once

#include <map>
#include <string>
#include <vector>

#include "zsad/backbone.hpp"

namespace zsad {

// Deterministic CPU backbone for tests and desk-scale runs.
//
// Vision side: each patch's flattened pixels go through a fixed seeded random
// linear projection to D dims (one projection per configured block index,
// averaged element-wise when several blocks are selected). The spatial token
// is the mean of the patch features; the object token is the projection of a
// patch filled with the image's per-channel mean pixel.
//
// Text side: each word hashes to a seeded base embedding row (D_t); rows are
// mean-pooled, linearly projected to D and L2-normalized. The pre-norm path
// is affine, so exact gradients w.r.t. token rows are available.
class MockBackbone : public Backbone {
public:
    static constexpr std::uint64_t kDefaultSeed = 0x7a5ad0c5ULL;
    static constexpr int kNumBlocks = 24;

    explicit MockBackbone(BackboneConfig config, std::uint64_t seed = kDefaultSeed);

    const BackboneConfig& config() const override { return config_; }

    VisualFeatures encode_image(const Image& image) const override;
    TextEmbedding encode_text(const std::string& prompt) const override;
    TextEmbedding encode_token_sequence(const TokenEmbeddingSequence& seq) const override;
    Matrix lookup_word_embedding(const std::string& word) const override;
    Matrix encode_token_sequence_backward(const TokenEmbeddingSequence& seq,
                                          const Vec& grad_embedding) const override;

    std::size_t max_context_length() const override { return 77; }
    std::uint64_t parameter_fingerprint() const override;

    // Patch features of a single encoder block, used by layer-fusion tests.
    Matrix encode_patch_layer(const Image& image, int layer) const;

    // Tokenizer shared with the bundle backbone: lowercase words split on
    // non-alphanumeric characters.
    static std::vector<std::string> tokenize(const std::string& text);

    const Matrix& text_projection() const { return text_projection_; }
    const std::map<int, Matrix>& vision_projections() const { return vision_projections_; }
    std::uint64_t seed() const { return seed_; }

private:
    Vec word_base_embedding(const std::string& word) const;
    void check_image(const Image& image) const;

    BackboneConfig config_;
    std::uint64_t seed_;
    std::vector<int> layers_;               // resolved, sorted
    std::map<int, Matrix> vision_projections_;  // block index -> D x (C*p*p)
    Matrix text_projection_;                 // D x D_t
};

} // namespace zsad
