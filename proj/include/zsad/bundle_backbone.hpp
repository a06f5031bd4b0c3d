#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "zsad/backbone.hpp"

namespace zsad {

// Adapter for externally supplied pretrained weights. Weights live in a
// "ZSBN" bundle file (JSON header + float32 tensors) holding the token
// embedding table with its vocabulary, the text projection, and one dense
// patch projection per exported encoder block. The toolkit never ships
// weights; bundles are exported offline from the upstream model release
// (see README for the recipe).
class BundleBackbone : public Backbone {
public:
    // Loads config.weights_path. Missing file -> AssetError naming the path;
    // malformed contents or dimension mismatch vs config -> FormatError.
    explicit BundleBackbone(BackboneConfig config);

    const BackboneConfig& config() const override { return config_; }

    VisualFeatures encode_image(const Image& image) const override;
    TextEmbedding encode_text(const std::string& prompt) const override;
    TextEmbedding encode_token_sequence(const TokenEmbeddingSequence& seq) const override;
    Matrix lookup_word_embedding(const std::string& word) const override;
    Matrix encode_token_sequence_backward(const TokenEmbeddingSequence& seq,
                                          const Vec& grad_embedding) const override;

    std::size_t max_context_length() const override { return max_context_; }
    std::uint64_t parameter_fingerprint() const override;

    const std::vector<int>& available_blocks() const { return available_blocks_; }

private:
    BackboneConfig config_;
    std::size_t max_context_ = 77;
    std::vector<int> layers_;                    // resolved from config
    std::vector<int> available_blocks_;          // everything in the bundle
    std::map<int, Matrix> vision_projections_;   // block -> D x (C*p*p)
    Matrix text_projection_;                     // D x D_t
    Matrix token_table_;                         // V x D_t
    std::unordered_map<std::string, std::size_t> vocab_;
};

// Writes a bundle usable by BundleBackbone. `vision_projections` maps block
// index -> D x (C*p*p); `vocab` pairs each word with its token-table row.
void write_backbone_bundle(const std::filesystem::path& path, const BackboneConfig& config,
                           const std::map<int, Matrix>& vision_projections,
                           const Matrix& text_projection,
                           const std::vector<std::string>& vocab, const Matrix& token_table);

} // namespace zsad
