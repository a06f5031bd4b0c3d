#include "zsad/mock_backbone.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "encoder_core.hpp"
#include "zsad/errors.hpp"

namespace zsad {

namespace {

Matrix seeded_projection(std::uint64_t seed, std::size_t out_dim, std::size_t in_dim) {
    Matrix m(out_dim, in_dim);
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (double& v : m.data) v = rng.normal(0.0, scale);
    return m;
}

} // namespace

void BackboneConfig::validate() const {
    if (patch_size < 1) throw ParamError("backbone: patch_size must be >= 1");
    if (input_resolution < patch_size) {
        throw ParamError("backbone: input_resolution smaller than one patch");
    }
    if (embed_dim < 1) throw ParamError("backbone: embed_dim must be >= 1");
    if (text_token_dim < 1) throw ParamError("backbone: text_token_dim must be >= 1");
    if (!(temperature > 0.0)) throw ParamError("backbone: temperature must be > 0");
    if (normalization_mean.empty() || normalization_mean.size() != normalization_std.size()) {
        throw ParamError("backbone: normalization mean/std must be non-empty and same length");
    }
    for (double s : normalization_std) {
        if (!(s > 0.0)) throw ParamError("backbone: normalization std entries must be > 0");
    }
}

BackboneConfig mock_config() {
    BackboneConfig cfg;
    cfg.name = "mock";
    cfg.patch_size = 8;
    cfg.input_resolution = 128;
    cfg.embed_dim = 64;
    cfg.text_token_dim = 32;
    cfg.temperature = 0.0042;
    cfg.patch_layers = {24};
    cfg.normalization_mean = {0.5, 0.5, 0.5};
    cfg.normalization_std = {0.5, 0.5, 0.5};
    return cfg;
}

const std::vector<BackboneProfile>& known_backbone_profiles() {
    static const std::vector<BackboneProfile> profiles = {
        {"tips-s-14-hr", 384, 14, 518, "55.2M params"},
        {"tips-b-14-hr", 768, 14, 518, "195.3M params"},
        {"tips-l-14-hr", 1024, 14, 518, "487.1M params"},
        {"tips-so-14-hr", 1152, 14, 518, "860.8M params"},
        {"tips-g-14-lr", 1536, 14, 518, "1.5B params, low-resolution pretraining"},
        {"tips-g-14-hr", 1536, 14, 518, "1.5B params"},
    };
    return profiles;
}

const BackboneProfile* find_backbone_profile(const std::string& name) {
    for (const auto& p : known_backbone_profiles()) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

MockBackbone::MockBackbone(BackboneConfig config, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed) {
    config_.validate();
    layers_ = config_.patch_layers;
    if (layers_.empty()) layers_ = {kNumBlocks};
    std::sort(layers_.begin(), layers_.end());
    layers_.erase(std::unique(layers_.begin(), layers_.end()), layers_.end());
    for (int l : layers_) {
        if (l < 1 || l > kNumBlocks) {
            throw ParamError("backbone: patch layer index " + std::to_string(l) +
                             " outside valid blocks 1.." + std::to_string(kNumBlocks));
        }
    }

    const std::size_t d = static_cast<std::size_t>(config_.embed_dim);
    const std::size_t patch_in = static_cast<std::size_t>(config_.channels()) *
                                 static_cast<std::size_t>(config_.patch_size) *
                                 static_cast<std::size_t>(config_.patch_size);
    for (int l : layers_) {
        vision_projections_[l] = seeded_projection(
            derive_seed(seed_, "vision_projection", static_cast<std::uint64_t>(l)), d, patch_in);
    }
    text_projection_ = seeded_projection(derive_seed(seed_, "text_projection"), d,
                                         static_cast<std::size_t>(config_.text_token_dim));
}

Matrix MockBackbone::encode_patch_layer(const Image& image, int layer) const {
    detail::check_image_shape(image, config_);
    auto it = vision_projections_.find(layer);
    if (it == vision_projections_.end()) {
        throw ParamError("encode_patch_layer: block " + std::to_string(layer) + " not configured");
    }
    return detail::project_patches(image, it->second, config_.patch_size);
}

VisualFeatures MockBackbone::encode_image(const Image& image) const {
    detail::check_image_shape(image, config_);
    return detail::fuse_visual_features(image, vision_projections_, layers_, config_.patch_size);
}

std::vector<std::string> MockBackbone::tokenize(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

Vec MockBackbone::word_base_embedding(const std::string& word) const {
    Rng rng(derive_seed(seed_ ^ fnv1a64(word), "word_embedding"));
    Vec row(static_cast<std::size_t>(config_.text_token_dim));
    for (double& v : row) v = rng.normal();
    return row;
}

Matrix MockBackbone::lookup_word_embedding(const std::string& word) const {
    auto words = tokenize(word);
    if (words.empty()) {
        // Every string has to tokenize; bare punctuation maps to one sentinel token.
        words.push_back("<unk>");
    }
    Matrix rows(words.size(), static_cast<std::size_t>(config_.text_token_dim));
    for (std::size_t i = 0; i < words.size(); ++i) {
        Vec base = word_base_embedding(words[i]);
        std::copy(base.begin(), base.end(),
                  rows.data.begin() + static_cast<std::ptrdiff_t>(i * rows.cols));
    }
    return rows;
}

TextEmbedding MockBackbone::encode_token_sequence(const TokenEmbeddingSequence& seq) const {
    detail::check_token_sequence(seq, config_, max_context_length());
    return detail::pool_project_normalize(seq.tokens, text_projection_);
}

Matrix MockBackbone::encode_token_sequence_backward(const TokenEmbeddingSequence& seq,
                                                    const Vec& grad_embedding) const {
    detail::check_token_sequence(seq, config_, max_context_length());
    if (grad_embedding.size() != static_cast<std::size_t>(config_.embed_dim)) {
        throw InputError("encode_token_sequence_backward: gradient width mismatch");
    }
    return detail::pool_project_normalize_backward(seq.tokens, text_projection_, grad_embedding);
}

TextEmbedding MockBackbone::encode_text(const std::string& prompt) const {
    auto words = tokenize(prompt);
    if (words.empty()) throw InputError("encode_text: empty prompt");

    TokenEmbeddingSequence seq;
    seq.tokens = Matrix(words.size(), static_cast<std::size_t>(config_.text_token_dim));
    seq.provenance.assign(words.size(), TokenProvenance::word_lookup);
    for (std::size_t i = 0; i < words.size(); ++i) {
        Vec base = word_base_embedding(words[i]);
        std::copy(base.begin(), base.end(),
                  seq.tokens.data.begin() + static_cast<std::ptrdiff_t>(i * seq.tokens.cols));
    }
    return encode_token_sequence(seq);
}

std::uint64_t MockBackbone::parameter_fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto fold = [&h](const Matrix& m) {
        h = fnv1a64(m.data.data(), m.data.size() * sizeof(double), h);
    };
    for (const auto& [layer, proj] : vision_projections_) {
        h = fnv1a64(&layer, sizeof(layer), h);
        fold(proj);
    }
    fold(text_projection_);
    return h;
}

} // namespace zsad
