#include "zsad/bundle_backbone.hpp"

#include <algorithm>

#include "encoder_core.hpp"
#include "zsad/container.hpp"
#include "zsad/errors.hpp"
#include "zsad/mock_backbone.hpp"

namespace zsad {

namespace {
constexpr char kBundleMagic[4] = {'Z', 'S', 'B', 'N'};
constexpr int kBundleVersion = 1;
} // namespace

BundleBackbone::BundleBackbone(BackboneConfig config) : config_(std::move(config)) {
    config_.validate();
    if (config_.weights_path.empty()) {
        throw AssetError("backbone '" + config_.name +
                         "': no weights_path configured (pretrained weights are not bundled "
                         "with the toolkit)");
    }
    if (!std::filesystem::exists(config_.weights_path)) {
        throw AssetError("backbone '" + config_.name + "': weights file not found: " +
                         config_.weights_path);
    }

    auto file = container::read_file(config_.weights_path, kBundleMagic);
    if (file.meta.value("version", -1) != kBundleVersion) {
        throw FormatError("weight bundle: unsupported version in " + config_.weights_path);
    }
    auto require_match = [&](const char* key, int expected) {
        const int got = file.meta.value(key, -1);
        if (got != expected) {
            throw FormatError(std::string("weight bundle: ") + key + "=" + std::to_string(got) +
                              " does not match configured " + std::to_string(expected));
        }
    };
    require_match("embed_dim", config_.embed_dim);
    require_match("text_token_dim", config_.text_token_dim);
    require_match("patch_size", config_.patch_size);
    require_match("channels", config_.channels());
    max_context_ = file.meta.value("max_context", 77);

    text_projection_ = container::to_matrix(file.tensor("text_projection"));
    token_table_ = container::to_matrix(file.tensor("token_table"));
    if (text_projection_.rows != static_cast<std::size_t>(config_.embed_dim) ||
        text_projection_.cols != static_cast<std::size_t>(config_.text_token_dim)) {
        throw FormatError("weight bundle: text_projection shape mismatch");
    }
    if (token_table_.rows == 0 ||
        token_table_.cols != static_cast<std::size_t>(config_.text_token_dim)) {
        throw FormatError("weight bundle: token_table shape mismatch");
    }

    if (!file.meta.contains("vocab") || !file.meta["vocab"].is_array() ||
        file.meta["vocab"].size() != token_table_.rows) {
        throw FormatError("weight bundle: vocab listing missing or inconsistent with token_table");
    }
    std::size_t row = 0;
    for (const auto& w : file.meta["vocab"]) {
        vocab_.emplace(w.get<std::string>(), row++);
    }

    const std::size_t patch_in = static_cast<std::size_t>(config_.channels()) *
                                 static_cast<std::size_t>(config_.patch_size) *
                                 static_cast<std::size_t>(config_.patch_size);
    const std::string prefix = "vision_projection_";
    for (const auto& t : file.tensors) {
        if (t.name.rfind(prefix, 0) != 0) continue;
        const int block = std::stoi(t.name.substr(prefix.size()));
        Matrix proj = container::to_matrix(t);
        if (proj.rows != static_cast<std::size_t>(config_.embed_dim) || proj.cols != patch_in) {
            throw FormatError("weight bundle: " + t.name + " shape mismatch");
        }
        vision_projections_[block] = std::move(proj);
        available_blocks_.push_back(block);
    }
    if (vision_projections_.empty()) {
        throw FormatError("weight bundle: no vision_projection_<block> tensors present");
    }
    std::sort(available_blocks_.begin(), available_blocks_.end());

    layers_ = config_.patch_layers;
    if (layers_.empty()) layers_ = {available_blocks_.back()};
    std::sort(layers_.begin(), layers_.end());
    layers_.erase(std::unique(layers_.begin(), layers_.end()), layers_.end());
    for (int l : layers_) {
        if (!vision_projections_.count(l)) {
            throw ParamError("backbone: patch layer " + std::to_string(l) +
                             " not exported in weight bundle " + config_.weights_path);
        }
    }
}

VisualFeatures BundleBackbone::encode_image(const Image& image) const {
    detail::check_image_shape(image, config_);
    return detail::fuse_visual_features(image, vision_projections_, layers_, config_.patch_size);
}

Matrix BundleBackbone::lookup_word_embedding(const std::string& word) const {
    auto words = MockBackbone::tokenize(word);
    if (words.empty()) words.push_back("<unk>");
    Matrix rows(words.size(), token_table_.cols);
    for (std::size_t i = 0; i < words.size(); ++i) {
        auto it = vocab_.find(words[i]);
        // Out-of-vocabulary words hash to a stable table row.
        const std::size_t idx =
            it != vocab_.end() ? it->second : fnv1a64(words[i]) % token_table_.rows;
        for (std::size_t c = 0; c < token_table_.cols; ++c) {
            rows.at(i, c) = token_table_.at(idx, c);
        }
    }
    return rows;
}

TextEmbedding BundleBackbone::encode_token_sequence(const TokenEmbeddingSequence& seq) const {
    detail::check_token_sequence(seq, config_, max_context_);
    return detail::pool_project_normalize(seq.tokens, text_projection_);
}

Matrix BundleBackbone::encode_token_sequence_backward(const TokenEmbeddingSequence& seq,
                                                      const Vec& grad_embedding) const {
    detail::check_token_sequence(seq, config_, max_context_);
    if (grad_embedding.size() != static_cast<std::size_t>(config_.embed_dim)) {
        throw InputError("encode_token_sequence_backward: gradient width mismatch");
    }
    return detail::pool_project_normalize_backward(seq.tokens, text_projection_, grad_embedding);
}

TextEmbedding BundleBackbone::encode_text(const std::string& prompt) const {
    auto words = MockBackbone::tokenize(prompt);
    if (words.empty()) throw InputError("encode_text: empty prompt");

    TokenEmbeddingSequence seq;
    seq.tokens = Matrix(words.size(), token_table_.cols);
    seq.provenance.assign(words.size(), TokenProvenance::word_lookup);
    for (std::size_t i = 0; i < words.size(); ++i) {
        Matrix row = lookup_word_embedding(words[i]);
        for (std::size_t c = 0; c < token_table_.cols; ++c) seq.tokens.at(i, c) = row.at(0, c);
    }
    return encode_token_sequence(seq);
}

std::uint64_t BundleBackbone::parameter_fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto fold = [&h](const Matrix& m) {
        h = fnv1a64(m.data.data(), m.data.size() * sizeof(double), h);
    };
    for (const auto& [layer, proj] : vision_projections_) {
        h = fnv1a64(&layer, sizeof(layer), h);
        fold(proj);
    }
    fold(text_projection_);
    fold(token_table_);
    return h;
}

void write_backbone_bundle(const std::filesystem::path& path, const BackboneConfig& config,
                           const std::map<int, Matrix>& vision_projections,
                           const Matrix& text_projection,
                           const std::vector<std::string>& vocab, const Matrix& token_table) {
    if (vocab.size() != token_table.rows) {
        throw FormatError("write_backbone_bundle: vocab size != token_table rows");
    }
    nlohmann::ordered_json meta;
    meta["version"] = kBundleVersion;
    meta["embed_dim"] = config.embed_dim;
    meta["text_token_dim"] = config.text_token_dim;
    meta["patch_size"] = config.patch_size;
    meta["channels"] = config.channels();
    meta["max_context"] = 77;
    meta["vocab"] = vocab;

    std::vector<container::Tensor> tensors;
    tensors.push_back(container::from_matrix("text_projection", text_projection));
    tensors.push_back(container::from_matrix("token_table", token_table));
    for (const auto& [block, proj] : vision_projections) {
        tensors.push_back(
            container::from_matrix("vision_projection_" + std::to_string(block), proj));
    }
    container::write_file(path, kBundleMagic, meta, tensors);
}

std::unique_ptr<Backbone> make_backbone(const BackboneConfig& config) {
    if (config.name == "mock") {
        return std::make_unique<MockBackbone>(config);
    }
    return std::make_unique<BundleBackbone>(config);
}

} // namespace zsad
