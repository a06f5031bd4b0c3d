#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "zsad/common.hpp"

namespace zsad {

// Configuration block for a vision-language backbone. Field defaults mirror
// the large high-resolution reference encoder; desk-scale runs override them
// (see mock_config()).
struct BackboneConfig {
    std::string name = "mock";
    std::string weights_path;        // adapter backbones only; mock ignores it
    int patch_size = 14;
    int input_resolution = 518;
    int embed_dim = 1024;            // D, shared visual/text embedding width
    int text_token_dim = 768;        // D_t, width of token-embedding rows
    double temperature = 0.0042;
    // Encoder block indices (1-based) whose dense patch outputs are used.
    // Empty means "last block only". Multiple layers are averaged element-wise.
    std::vector<int> patch_layers;
    std::vector<double> normalization_mean = {0.485, 0.456, 0.406};
    std::vector<double> normalization_std = {0.229, 0.224, 0.225};

    int grid_side() const { return input_resolution / patch_size; }
    int channels() const { return static_cast<int>(normalization_mean.size()); }

    // Throws ParamError on violated invariants (tau <= 0, empty norm stats,
    // resolution smaller than one patch, ...).
    void validate() const;
};

// Desk-scale deterministic configuration used by tests and the default CLI
// config: 128x128 inputs, 8px patches (16x16 grid), 64-dim embeddings.
BackboneConfig mock_config();

// Published size variants of the upstream encoder family, usable as config
// presets (embedding width and parameter count per the released models).
struct BackboneProfile {
    std::string name;
    int embed_dim;
    int patch_size;
    int input_resolution;
    const char* params_note;
};

const std::vector<BackboneProfile>& known_backbone_profiles();
const BackboneProfile* find_backbone_profile(const std::string& name);

// Dense patch embeddings plus the two global tokens produced for one image.
struct VisualFeatures {
    Matrix patch_features;   // N x D, rows in row-major grid order
    Vec object_token;        // D, object-centric global embedding
    Vec spatial_token;       // D, spatial global embedding
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;

    std::size_t patch_count() const { return patch_features.rows; }
};

struct TextEmbedding {
    Vec vector;
    bool normalized = false;
};

enum class TokenProvenance : std::uint8_t { learned, word_lookup };

// Encoder-side representation of a prompt given as raw token-embedding rows
// rather than a string; rows marked `learned` participate in gradients.
struct TokenEmbeddingSequence {
    Matrix tokens;                            // L x D_t
    std::vector<TokenProvenance> provenance;  // length L

    std::size_t length() const { return tokens.rows; }
};

// Frozen vision-language encoder contract. Implementations are immutable
// after construction and safe for concurrent read-only use.
class Backbone {
public:
    virtual ~Backbone() = default;

    virtual const BackboneConfig& config() const = 0;

    // Encodes a preprocessed (normalized, input_resolution-sized) image into
    // dense patch features and the two global tokens.
    virtual VisualFeatures encode_image(const Image& image) const = 0;

    // Encodes a prompt string into a unit-norm D-vector.
    virtual TextEmbedding encode_text(const std::string& prompt) const = 0;

    // Encodes raw token rows into a unit-norm D-vector.
    virtual TextEmbedding encode_token_sequence(const TokenEmbeddingSequence& seq) const = 0;

    // Rows of the token-embedding table for one word; multi-token words
    // return stacked rows (k x D_t).
    virtual Matrix lookup_word_embedding(const std::string& word) const = 0;

    // Backward pass of encode_token_sequence: given dL/d(embedding) for the
    // unit-norm output, returns dL/d(row) for every input row (L x D_t).
    // Prompt training pulls the learned rows out of this.
    virtual Matrix encode_token_sequence_backward(const TokenEmbeddingSequence& seq,
                                                  const Vec& grad_embedding) const = 0;

    virtual std::size_t max_context_length() const = 0;

    // Hash over every frozen parameter, used to assert the encoder is
    // bitwise untouched by training.
    virtual std::uint64_t parameter_fingerprint() const = 0;
};

// Constructs a backbone from config: name "mock" builds the deterministic
// test backbone, anything else loads a weight bundle from weights_path.
std::unique_ptr<Backbone> make_backbone(const BackboneConfig& config);

} // namespace zsad
