#include "zsad/prompts.hpp"

#include <algorithm>

#include "zsad/container.hpp"
#include "zsad/errors.hpp"

namespace zsad {

namespace {

constexpr char kCheckpointMagic[4] = {'Z', 'S', 'P', 'C'};
constexpr int kCheckpointVersion = 1;

// Returns the phrase with its "{}" slot filled; throws when the slot count
// is not exactly one.
std::string fill_slot(const std::string& phrase, const std::string& value, const char* what) {
    std::size_t first = phrase.find("{}");
    if (first == std::string::npos) {
        throw FormatError(std::string(what) + " '" + phrase + "' is missing its {} slot");
    }
    if (phrase.find("{}", first + 2) != std::string::npos) {
        throw FormatError(std::string(what) + " '" + phrase + "' has more than one {} slot");
    }
    std::string out = phrase;
    out.replace(first, 2, value);
    return out;
}

} // namespace

StateLexicon generic_lexicon() {
    StateLexicon lex;
    lex.domain_tag = "generic";
    lex.normal_states = {"flawless {}", "perfect {}", "{} without defect", "{} without damage"};
    lex.abnormal_states = {"damaged {}", "broken {}", "{} with defect", "{} with flaw"};
    return lex;
}

StateLexicon medical_lexicon() {
    StateLexicon lex;
    lex.domain_tag = "medical";
    lex.normal_states = {
        "normal {}",
        "intact {}",
        "{} with uniform structure",
        "{} showing clear tissue",
        "{} with normal anatomy",
        "{} showing no distortion",
        "{} with symmetric appearance",
        "{} looking normal",
        "{} with even texture",
        "{} with regular shape",
    };
    lex.abnormal_states = {
        "abnormal {}",
        "{} with spot",
        "{} with abnormality",
        "diseased {}",
        "{} showing distortion",
        "{} with irregular area",
        "{} with irregular shape",
        "{} with uneven texture",
    };
    return lex;
}

std::vector<std::string> generic_templates() {
    return {
        "a cropped photo of a {}",
        "a close-up photo of a {}",
        "a photo of a {} for visual inspection",
        "a photo of the {}",
        "a bright photo of a {}",
        "a dark photo of a {}",
        "a blurry photo of a {}",
    };
}

std::vector<std::string> medical_templates() {
    return {
        "a medical image of a {}",
        "a diagnostic scan of a {}",
    };
}

FixedPromptSet compose_fixed_prompts(const std::string& class_name,
                                     const std::vector<std::string>& templates,
                                     const StateLexicon& lexicon) {
    if (templates.empty()) throw FormatError("compose_fixed_prompts: empty template list");
    if (lexicon.normal_states.empty() || lexicon.abnormal_states.empty()) {
        throw FormatError("compose_fixed_prompts: lexicon must have normal and abnormal states");
    }

    FixedPromptSet out;
    out.class_name = class_name;
    for (const auto& tmpl : templates) {
        for (const auto& state : lexicon.normal_states) {
            out.normal_prompts.push_back(
                fill_slot(tmpl, fill_slot(state, class_name, "state"), "template"));
        }
    }
    for (const auto& tmpl : templates) {
        for (const auto& state : lexicon.abnormal_states) {
            out.abnormal_prompts.push_back(
                fill_slot(tmpl, fill_slot(state, class_name, "state"), "template"));
        }
    }

    for (const auto& p : out.normal_prompts) {
        if (std::find(out.abnormal_prompts.begin(), out.abnormal_prompts.end(), p) !=
            out.abnormal_prompts.end()) {
            throw FormatError("compose_fixed_prompts: prompt '" + p +
                              "' appears in both subsets");
        }
    }
    return out;
}

TextPrototypes build_detection_prototypes(const FixedPromptSet& prompts,
                                          const Backbone& encoder) {
    if (prompts.normal_prompts.empty() || prompts.abnormal_prompts.empty()) {
        throw InputError("build_detection_prototypes: empty prompt subset");
    }
    auto mean_embed = [&encoder](const std::vector<std::string>& list) {
        Vec acc;
        for (const auto& p : list) {
            TextEmbedding e = encoder.encode_text(p);
            if (acc.empty()) acc.assign(e.vector.size(), 0.0);
            for (std::size_t i = 0; i < e.vector.size(); ++i) acc[i] += e.vector[i];
        }
        for (double& v : acc) v /= static_cast<double>(list.size());
        return l2_normalize(acc);
    };

    TextPrototypes protos;
    protos.normal = mean_embed(prompts.normal_prompts);
    protos.abnormal = mean_embed(prompts.abnormal_prompts);
    protos.source = PrototypeSource::fixed;
    if (protos.normal == protos.abnormal) {
        throw InputError("build_detection_prototypes: normal and abnormal prototypes collapsed");
    }
    return protos;
}

void LearnablePromptState::validate() const {
    if (token_count < 1) throw ParamError("learnable prompts: token_count must be >= 1");
    if (tokens_normal.rows != static_cast<std::size_t>(token_count) ||
        tokens_abnormal.rows != static_cast<std::size_t>(token_count)) {
        throw FormatError("learnable prompts: token matrices do not match token_count");
    }
    if (tokens_normal.cols != tokens_abnormal.cols || tokens_normal.cols == 0) {
        throw FormatError("learnable prompts: token matrices disagree on width");
    }
    if (!all_finite(tokens_normal) || !all_finite(tokens_abnormal)) {
        throw NumericError("learnable prompts: non-finite token entries");
    }
}

LearnablePromptState init_learnable_prompts(int token_count, int token_dim, std::uint64_t seed) {
    if (token_count < 1) throw ParamError("init_learnable_prompts: token_count must be >= 1");
    if (token_dim < 1) throw ParamError("init_learnable_prompts: token_dim must be >= 1");

    LearnablePromptState state;
    state.token_count = token_count;
    state.seed = seed;
    state.tokens_normal = Matrix(static_cast<std::size_t>(token_count),
                                 static_cast<std::size_t>(token_dim));
    state.tokens_abnormal = Matrix(static_cast<std::size_t>(token_count),
                                   static_cast<std::size_t>(token_dim));
    Rng rng(derive_seed(seed, "learnable_prompt_init"));
    for (double& v : state.tokens_normal.data) v = rng.normal(0.0, 0.02);
    for (double& v : state.tokens_abnormal.data) v = rng.normal(0.0, 0.02);
    return state;
}

namespace {

TokenEmbeddingSequence compose_sequence(const Matrix& learned_rows,
                                        const std::vector<std::string>& words,
                                        const Backbone& encoder) {
    std::vector<Matrix> word_rows;
    std::size_t total = learned_rows.rows;
    for (const auto& w : words) {
        word_rows.push_back(encoder.lookup_word_embedding(w));
        total += word_rows.back().rows;
    }

    TokenEmbeddingSequence seq;
    seq.tokens = Matrix(total, learned_rows.cols);
    seq.provenance.reserve(total);
    std::size_t r = 0;
    for (std::size_t i = 0; i < learned_rows.rows; ++i, ++r) {
        for (std::size_t c = 0; c < learned_rows.cols; ++c) {
            seq.tokens.at(r, c) = learned_rows.at(i, c);
        }
        seq.provenance.push_back(TokenProvenance::learned);
    }
    for (const auto& rows : word_rows) {
        for (std::size_t i = 0; i < rows.rows; ++i, ++r) {
            for (std::size_t c = 0; c < rows.cols; ++c) seq.tokens.at(r, c) = rows.at(i, c);
            seq.provenance.push_back(TokenProvenance::word_lookup);
        }
    }
    return seq;
}

} // namespace

TokenEmbeddingSequence normal_prompt_sequence(const LearnablePromptState& state,
                                              const Backbone& encoder) {
    state.validate();
    return compose_sequence(state.tokens_normal, {"object"}, encoder);
}

TokenEmbeddingSequence abnormal_prompt_sequence(const LearnablePromptState& state,
                                                const Backbone& encoder) {
    state.validate();
    return compose_sequence(state.tokens_abnormal, {"damaged", "object"}, encoder);
}

TextPrototypes build_localization_prototypes(const LearnablePromptState& state,
                                             const Backbone& encoder) {
    TextPrototypes protos;
    protos.normal = encoder.encode_token_sequence(normal_prompt_sequence(state, encoder)).vector;
    protos.abnormal =
        encoder.encode_token_sequence(abnormal_prompt_sequence(state, encoder)).vector;
    protos.source = PrototypeSource::learnable;
    return protos;
}

void save_checkpoint(const LearnablePromptState& state, const std::filesystem::path& path) {
    state.validate();
    nlohmann::ordered_json meta;
    meta["version"] = state.version;
    meta["token_count"] = state.token_count;
    meta["text_token_dim"] = state.tokens_normal.cols;
    meta["seed"] = state.seed;
    if (!state.trained_on.empty()) meta["trained_on"] = state.trained_on;

    std::vector<container::Tensor> tensors;
    tensors.push_back(container::from_matrix("tokens_normal", state.tokens_normal));
    tensors.push_back(container::from_matrix("tokens_abnormal", state.tokens_abnormal));
    container::write_file(path, kCheckpointMagic, meta, tensors);
}

LearnablePromptState load_checkpoint(const std::filesystem::path& path) {
    auto file = container::read_file(path, kCheckpointMagic);

    LearnablePromptState state;
    state.version = file.meta.value("version", -1);
    if (state.version != kCheckpointVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(state.version) +
                          " in " + path.string());
    }
    state.token_count = file.meta.value("token_count", 0);
    state.seed = file.meta.value("seed", 0ULL);
    state.trained_on = file.meta.value("trained_on", "");

    const auto expected_dim = file.meta.value("text_token_dim", std::size_t{0});
    state.tokens_normal = container::to_matrix(file.tensor("tokens_normal"));
    state.tokens_abnormal = container::to_matrix(file.tensor("tokens_abnormal"));
    if (state.tokens_normal.rows != static_cast<std::size_t>(state.token_count) ||
        state.tokens_abnormal.rows != static_cast<std::size_t>(state.token_count) ||
        state.tokens_normal.cols != expected_dim || state.tokens_abnormal.cols != expected_dim) {
        throw FormatError("checkpoint: tensor shapes disagree with header in " + path.string());
    }
    state.validate();
    return state;
}

} // namespace zsad
