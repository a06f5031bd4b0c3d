#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "zsad/backbone.hpp"
#include "zsad/dataset.hpp"
#include "zsad/metrics.hpp"
#include "zsad/prompts.hpp"
#include "zsad/scoring.hpp"

namespace zsad {

struct EvalOptions {
    Strategy strategy = Strategy::S5;
    double sigma = 4.0;
    AuproOptions aupro;
    // "auto" picks the medical lexicon (and its templates) when the manifest
    // declares domain_tag=medical, the generic set otherwise.
    std::string lexicon = "auto";
    std::vector<std::string> templates;  // empty = default set for the lexicon
    // Zero-shot discipline: refuse to evaluate the manifest the checkpoint was
    // trained on unless explicitly overridden.
    bool override_same_domain = false;
    // When set, per-sample heatmap PNGs and raw maps are written here.
    std::optional<std::filesystem::path> heatmap_dir;
};

struct ResolvedPrompts {
    std::vector<std::string> templates;
    StateLexicon lexicon;
};

ResolvedPrompts resolve_prompts(const EvalOptions& options, const DatasetManifest& manifest);

// Runs the full per-sample pipeline over the manifest and aggregates the
// evaluation protocol per category. Image metrics are skipped for pixel_only
// manifests and pixel metrics for image_only ones.
EvalReport run_evaluation(const DatasetManifest& manifest, const Backbone& encoder,
                          const LearnablePromptState& checkpoint, const EvalOptions& options);

} // namespace zsad
