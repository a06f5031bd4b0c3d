#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "zsad/backbone.hpp"
#include "zsad/common.hpp"

namespace zsad {

// Normal/abnormal state phrases; every phrase carries exactly one "{}" slot
// for the class name.
struct StateLexicon {
    std::vector<std::string> normal_states;
    std::vector<std::string> abnormal_states;
    std::string domain_tag = "generic";  // {generic, medical}
};

StateLexicon generic_lexicon();
StateLexicon medical_lexicon();
std::vector<std::string> generic_templates();
std::vector<std::string> medical_templates();

// Full template x state product for one class, split into subsets.
struct FixedPromptSet {
    std::vector<std::string> normal_prompts;
    std::vector<std::string> abnormal_prompts;
    std::string class_name;
};

enum class PrototypeSource : std::uint8_t { fixed, learnable };

// A normal/abnormal pair of unit-norm text embeddings.
struct TextPrototypes {
    Vec normal;
    Vec abnormal;
    PrototypeSource source = PrototypeSource::fixed;
};

// Trainable token matrices for localization prompts. The composition rule is
// structural and fixed: [tokens_normal, "object"] and
// [tokens_abnormal, "damaged", "object"].
struct LearnablePromptState {
    Matrix tokens_normal;    // E x D_t
    Matrix tokens_abnormal;  // E x D_t
    int token_count = 8;     // E
    std::uint64_t seed = 111;
    int version = 1;
    std::string trained_on;  // training manifest name; empty before training

    void validate() const;
};

// Instantiates the template x state Cartesian product (templates outer,
// states inner). Throws FormatError naming any template or state without
// exactly one "{}" slot.
FixedPromptSet compose_fixed_prompts(const std::string& class_name,
                                     const std::vector<std::string>& templates,
                                     const StateLexicon& lexicon);

// Encodes every prompt, averages unit-norm embeddings within each subset and
// re-normalizes. source = fixed.
TextPrototypes build_detection_prototypes(const FixedPromptSet& prompts, const Backbone& encoder);

// Token matrices drawn i.i.d. Normal(0, 0.02^2) from `seed`; reproducible.
LearnablePromptState init_learnable_prompts(int token_count, int token_dim, std::uint64_t seed);

// Token sequences realized from the composition rule, word rows looked up
// through the encoder.
TokenEmbeddingSequence normal_prompt_sequence(const LearnablePromptState& state,
                                              const Backbone& encoder);
TokenEmbeddingSequence abnormal_prompt_sequence(const LearnablePromptState& state,
                                                const Backbone& encoder);

// Encodes both composed sequences. source = learnable.
TextPrototypes build_localization_prototypes(const LearnablePromptState& state,
                                             const Backbone& encoder);

// Checkpoint container ("ZSPC"): JSON header {version, token_count,
// text_token_dim, seed, trained_on} plus the two token matrices as
// little-endian float32. Load rejects version or shape mismatches.
void save_checkpoint(const LearnablePromptState& state, const std::filesystem::path& path);
LearnablePromptState load_checkpoint(const std::filesystem::path& path);

} // namespace zsad
