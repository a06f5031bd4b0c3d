#include "zsad/evaluate.hpp"

#include <algorithm>
#include <map>

#include "zsad/errors.hpp"
#include "zsad/heatmap.hpp"

namespace zsad {

ResolvedPrompts resolve_prompts(const EvalOptions& options, const DatasetManifest& manifest) {
    std::string which = options.lexicon;
    if (which == "auto") {
        which = manifest.domain_tag == "medical" ? "medical" : "generic";
    }
    ResolvedPrompts out;
    if (which == "medical") {
        out.lexicon = medical_lexicon();
        out.templates = medical_templates();
    } else if (which == "generic") {
        out.lexicon = generic_lexicon();
        out.templates = generic_templates();
    } else {
        throw ParamError("unknown lexicon '" + options.lexicon +
                         "' (expected auto, generic or medical)");
    }
    if (!options.templates.empty()) out.templates = options.templates;
    return out;
}

EvalReport run_evaluation(const DatasetManifest& manifest, const Backbone& encoder,
                          const LearnablePromptState& checkpoint, const EvalOptions& options) {
    if (!checkpoint.trained_on.empty() && checkpoint.trained_on == manifest.name &&
        !options.override_same_domain) {
        throw DataError("evaluation refused: manifest '" + manifest.name +
                        "' matches the checkpoint's training manifest (zero-shot protocol); "
                        "pass the same-domain override to proceed");
    }

    const ResolvedPrompts prompts = resolve_prompts(options, manifest);
    const Preprocessor pre(encoder.config());
    const TextPrototypes learnable = build_localization_prototypes(checkpoint, encoder);

    const bool evaluate_image = manifest.annotation_level != AnnotationLevel::pixel_only;
    const bool evaluate_pixel = manifest.annotation_level != AnnotationLevel::image_only;

    // Fixed detection prototypes once per category, in manifest order.
    std::map<std::string, TextPrototypes> fixed;
    std::map<std::string, CategoryInputs> inputs;
    for (const auto& category : manifest.categories) {
        fixed.emplace(category,
                      build_detection_prototypes(
                          compose_fixed_prompts(category, prompts.templates, prompts.lexicon),
                          encoder));
        CategoryInputs in;
        in.category = category;
        in.evaluate_image = evaluate_image;
        in.evaluate_pixel = evaluate_pixel;
        inputs.emplace(category, std::move(in));
    }

    if (options.heatmap_dir.has_value()) {
        std::filesystem::create_directories(*options.heatmap_dir);
    }

    for (const auto& entry : manifest.samples) {
        const Sample sample = pre.load(entry, manifest);
        const InferenceResult r = run_inference(sample.image, encoder, fixed.at(sample.category),
                                                learnable, options.sigma, options.strategy);
        auto& in = inputs.at(sample.category);
        in.image_scores.scores.push_back(r.score.value);
        in.image_scores.labels.push_back(sample.label);
        if (evaluate_pixel) {
            if (!sample.mask.has_value()) {
                throw DataError("sample '" + sample.id +
                                "' lacks a mask but pixel metrics were requested");
            }
            in.pixel_maps.push_back(r.map.values);
            in.pixel_masks.push_back(*sample.mask);
        }
        if (options.heatmap_dir.has_value()) {
            const std::string stem = sanitize_sample_id(sample.id);
            export_heatmap_png(r.map, *options.heatmap_dir / (stem + ".png"), &sample.image);
            export_heatmap_raw(r.map, *options.heatmap_dir / (stem + ".zsmp"));
        }
    }

    std::vector<CategoryInputs> ordered;
    for (const auto& category : manifest.categories) {
        auto& in = inputs.at(category);
        if (!in.image_scores.scores.empty()) ordered.push_back(std::move(in));
    }
    return aggregate_report(manifest.name, ordered, options.aupro);
}

} // namespace zsad
