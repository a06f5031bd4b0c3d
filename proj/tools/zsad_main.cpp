// zsad — zero-shot anomaly detection toolkit CLI.
//
// Verbs: synth-dataset, convert-dataset, train, evaluate, infer,
// export-heatmaps. One JSON config file drives every verb; flags override
// individual fields and each run writes a resolved-config snapshot.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "zsad/errors.hpp"
#include "zsad/evaluate.hpp"
#include "zsad/heatmap.hpp"
#include "zsad/run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string backbone_name;
    std::string strategy;
    std::string lexicon;
    double sigma = -1.0;
    double fpr_limit = -1.0;
    long long seed = -1;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON run config (defaults apply when absent)");
        cmd->add_option("--backbone", backbone_name, "override backbone name (e.g. mock)");
        cmd->add_option("--strategy", strategy, "image-level strategy S1..S5");
        cmd->add_option("--sigma", sigma, "Gaussian smoothing sigma");
        cmd->add_option("--fpr-limit", fpr_limit, "AUPRO false-positive-rate limit");
        cmd->add_option("--seed", seed, "override prompt-init and training seed");
        cmd->add_option("--lexicon", lexicon, "state lexicon: auto, generic or medical");
    }

    zsad::RunConfig resolve() const {
        zsad::RunConfig cfg = config_path.empty() ? zsad::RunConfig()
                                                  : zsad::RunConfig::from_file(config_path);
        if (!backbone_name.empty()) cfg.backbone.name = backbone_name;
        if (!strategy.empty()) cfg.strategy = zsad::parse_strategy(strategy);
        if (!lexicon.empty()) cfg.lexicon = lexicon;
        if (sigma > 0.0) cfg.sigma = sigma;
        if (fpr_limit > 0.0) cfg.aupro.fpr_limit = fpr_limit;
        if (seed >= 0) {
            cfg.train.seed = static_cast<std::uint64_t>(seed);
            cfg.prompt_seed = static_cast<std::uint64_t>(seed);
        }
        return cfg;
    }
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw zsad::DataError("cannot write " + path.string());
    out << text;
}

int run(int argc, char** argv) {
    CLI::App app{"zsad — zero-shot anomaly detection toolkit"};
    app.require_subcommand(1);

    // --- synth-dataset -------------------------------------------------------
    auto* synth = app.add_subcommand("synth-dataset", "generate a deterministic synthetic dataset");
    std::string synth_out;
    zsad::SynthConfig synth_cfg;
    long long synth_seed = 111;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--n-normal", synth_cfg.n_normal, "number of normal images");
    synth->add_option("--n-anomalous", synth_cfg.n_anomalous, "number of anomalous images");
    synth->add_option("--size", synth_cfg.image_size, "square image size in pixels");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--name", synth_cfg.name, "manifest name");
    synth->add_option("--category", synth_cfg.category, "category/class name");

    // --- convert-dataset -----------------------------------------------------
    auto* convert = app.add_subcommand("convert-dataset", "emit a manifest for an existing layout");
    std::string conv_layout = "mvtec";
    std::string conv_root, conv_images, conv_masks, conv_out;
    std::string conv_name = "dataset";
    std::string conv_category = "object";
    std::string conv_domain = "industrial";
    std::string conv_split = "test";
    convert->add_option("--layout", conv_layout, "mvtec or flat")->required();
    convert->add_option("--root", conv_root, "dataset root (mvtec layout)");
    convert->add_option("--images", conv_images, "image directory (flat layout)");
    convert->add_option("--masks", conv_masks, "mask directory (flat layout, optional)");
    convert->add_option("--out", conv_out, "output manifest path")->required();
    convert->add_option("--name", conv_name, "manifest name");
    convert->add_option("--category", conv_category, "category name (flat layout)");
    convert->add_option("--domain", conv_domain, "industrial or medical");
    convert->add_option("--split", conv_split, "mvtec split: test, train or all");

    // --- train ---------------------------------------------------------------
    auto* train = app.add_subcommand("train", "train the learnable localization prompts");
    CommonFlags train_flags;
    train_flags.attach(train);
    std::string train_manifest, train_out;
    std::string train_loss_mode;
    int train_epochs = -1;
    train->add_option("--manifest", train_manifest, "training dataset manifest")->required();
    train->add_option("--out", train_out, "output directory")->required();
    train->add_option("--loss-mode", train_loss_mode, "local, global or both");
    train->add_option("--epochs", train_epochs, "override epoch count");

    // --- evaluate --------------------------------------------------------------
    auto* evaluate = app.add_subcommand("evaluate", "run the evaluation protocol over a manifest");
    CommonFlags eval_flags;
    eval_flags.attach(evaluate);
    std::string eval_manifest, eval_checkpoint, eval_out;
    bool eval_override_same_domain = false;
    bool eval_heatmaps = false;
    evaluate->add_option("--manifest", eval_manifest, "evaluation dataset manifest")->required();
    evaluate->add_option("--checkpoint", eval_checkpoint, "prompt checkpoint")->required();
    evaluate->add_option("--out", eval_out, "output directory")->required();
    evaluate->add_flag("--override-same-domain", eval_override_same_domain,
                       "evaluate even when the manifest matches the training manifest");
    evaluate->add_flag("--heatmaps", eval_heatmaps, "also export per-sample heatmaps");

    // --- infer -----------------------------------------------------------------
    auto* infer = app.add_subcommand("infer", "score a single image and export its anomaly map");
    CommonFlags infer_flags;
    infer_flags.attach(infer);
    std::string infer_image, infer_checkpoint, infer_out;
    std::string infer_class = "object";
    infer->add_option("--image", infer_image, "input image (ppm/pgm/png)")->required();
    infer->add_option("--checkpoint", infer_checkpoint, "prompt checkpoint")->required();
    infer->add_option("--out", infer_out, "output directory")->required();
    infer->add_option("--class-name", infer_class, "class name for the fixed prompts");

    // --- export-heatmaps ---------------------------------------------------------
    auto* heatmaps = app.add_subcommand("export-heatmaps", "write heatmaps for every sample");
    CommonFlags heat_flags;
    heat_flags.attach(heatmaps);
    std::string heat_manifest, heat_checkpoint, heat_out;
    heatmaps->add_option("--manifest", heat_manifest, "dataset manifest")->required();
    heatmaps->add_option("--checkpoint", heat_checkpoint, "prompt checkpoint")->required();
    heatmaps->add_option("--out", heat_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // CLI misuse is a validation error
    }

    if (synth->parsed()) {
        synth_cfg.seed = static_cast<std::uint64_t>(synth_seed);
        const auto manifest = zsad::generate_synthetic_dataset(synth_cfg, synth_out);
        std::printf("wrote %zu samples (%d normal, %d anomalous) under %s\n",
                    manifest.samples.size(), synth_cfg.n_normal, synth_cfg.n_anomalous,
                    synth_out.c_str());
        return 0;
    }

    if (convert->parsed()) {
        zsad::DatasetManifest manifest;
        if (conv_layout == "mvtec") {
            if (conv_root.empty()) throw zsad::ParamError("convert-dataset: --root required");
            manifest = zsad::convert_mvtec_layout(conv_root, conv_name, conv_split);
        } else if (conv_layout == "flat") {
            if (conv_images.empty()) throw zsad::ParamError("convert-dataset: --images required");
            std::optional<fs::path> masks;
            if (!conv_masks.empty()) masks = conv_masks;
            manifest = zsad::convert_flat_layout(conv_images, masks, conv_name, conv_category,
                                                 conv_domain);
        } else {
            throw zsad::ParamError("convert-dataset: unknown layout '" + conv_layout + "'");
        }
        // Paths in the manifest are relative to its own directory; emit it at
        // the layout root so they resolve.
        const fs::path out_path(conv_out);
        const fs::path expected_dir = manifest.base_dir;
        if (out_path.has_parent_path() &&
            fs::weakly_canonical(out_path.parent_path()) != fs::weakly_canonical(expected_dir)) {
            std::fprintf(stderr,
                         "note: manifest paths are relative to %s; writing there is usual\n",
                         expected_dir.string().c_str());
        }
        zsad::save_manifest(manifest, out_path);
        std::printf("wrote manifest with %zu categories, %zu samples to %s\n",
                    manifest.categories.size(), manifest.samples.size(), conv_out.c_str());
        return 0;
    }

    if (train->parsed()) {
        zsad::RunConfig cfg = train_flags.resolve();
        if (!train_loss_mode.empty()) cfg.train.loss_mode = zsad::parse_loss_mode(train_loss_mode);
        if (train_epochs > 0) cfg.train.epochs = train_epochs;

        fs::create_directories(train_out);
        const auto manifest = zsad::load_manifest(train_manifest);
        const auto encoder = zsad::make_backbone(cfg.backbone);
        const zsad::Preprocessor pre(cfg.backbone);
        const auto samples = zsad::load_samples(manifest, pre);

        auto state = zsad::init_learnable_prompts(cfg.prompt_tokens, cfg.backbone.text_token_dim,
                                                  cfg.prompt_seed);
        auto result = zsad::train_localization_prompts(samples, *encoder, std::move(state),
                                                       cfg.train);
        result.state.trained_on = manifest.name;
        zsad::save_checkpoint(result.state, fs::path(train_out) / "checkpoint.zspc");

        std::string log_lines;
        for (const auto& e : result.log) {
            ordered_json line = {{"epoch", e.epoch}, {"step", e.step},     {"focal", e.focal},
                                 {"dice", e.dice},   {"total", e.total},   {"wall_time_s", e.wall_time_s}};
            if (e.global_ce.has_value()) line["global_ce"] = *e.global_ce;
            log_lines += line.dump() + "\n";
        }
        write_text(fs::path(train_out) / "train_log.jsonl", log_lines);
        cfg.write_snapshot(fs::path(train_out) / "resolved_config.json");
        std::printf("trained %d epochs (%zu steps), final loss %.6f; checkpoint at %s\n",
                    cfg.train.epochs, result.log.size(),
                    result.log.empty() ? 0.0 : result.log.back().total,
                    (fs::path(train_out) / "checkpoint.zspc").string().c_str());
        return 0;
    }

    if (evaluate->parsed()) {
        zsad::RunConfig cfg = eval_flags.resolve();
        fs::create_directories(eval_out);
        const auto manifest = zsad::load_manifest(eval_manifest);
        const auto encoder = zsad::make_backbone(cfg.backbone);
        const auto checkpoint = zsad::load_checkpoint(eval_checkpoint);

        zsad::EvalOptions opts = cfg.eval_options();
        opts.override_same_domain = eval_override_same_domain;
        if (eval_heatmaps) opts.heatmap_dir = fs::path(eval_out) / "heatmaps";

        const auto report = zsad::run_evaluation(manifest, *encoder, checkpoint, opts);
        write_text(fs::path(eval_out) / "report.json", report.to_json().dump(2) + "\n");
        write_text(fs::path(eval_out) / "report.txt", report.to_table());
        cfg.write_snapshot(fs::path(eval_out) / "resolved_config.json");
        std::fputs(report.to_table().c_str(), stdout);
        return 0;
    }

    if (infer->parsed()) {
        zsad::RunConfig cfg = infer_flags.resolve();
        fs::create_directories(infer_out);
        const auto encoder = zsad::make_backbone(cfg.backbone);
        const auto checkpoint = zsad::load_checkpoint(infer_checkpoint);

        // Single image goes through the same preprocessing pipeline.
        zsad::DatasetManifest pseudo;
        pseudo.name = "infer";
        pseudo.annotation_level = zsad::AnnotationLevel::image_only;
        pseudo.categories = {infer_class};
        pseudo.base_dir = fs::path(infer_image).parent_path();
        zsad::ManifestSample entry;
        entry.id = fs::path(infer_image).stem().string();
        entry.category = infer_class;
        entry.image_path = fs::path(infer_image).filename().string();
        const zsad::Preprocessor pre(cfg.backbone);
        const zsad::Sample sample = pre.load(entry, pseudo);

        const auto prompts = zsad::resolve_prompts(cfg.eval_options(), pseudo);
        const auto fixed = zsad::build_detection_prototypes(
            zsad::compose_fixed_prompts(infer_class, prompts.templates, prompts.lexicon),
            *encoder);
        const auto learnable = zsad::build_localization_prototypes(checkpoint, *encoder);
        const auto r = zsad::run_inference(sample.image, *encoder, fixed, learnable, cfg.sigma,
                                           cfg.strategy);

        const std::string stem = zsad::sanitize_sample_id(entry.id);
        zsad::export_heatmap_png(r.map, fs::path(infer_out) / (stem + "_heatmap.png"),
                                 &sample.image);
        zsad::export_heatmap_raw(r.map, fs::path(infer_out) / (stem + "_heatmap.zsmp"));
        ordered_json score = {{"id", entry.id},
                              {"strategy", zsad::strategy_name(r.score.strategy)},
                              {"score", r.score.value},
                              {"global_term", r.score.global_term},
                              {"local_term", r.score.local_term}};
        write_text(fs::path(infer_out) / (stem + "_score.json"), score.dump(2) + "\n");
        cfg.write_snapshot(fs::path(infer_out) / "resolved_config.json");
        std::printf("%s\n", score.dump().c_str());
        return 0;
    }

    if (heatmaps->parsed()) {
        zsad::RunConfig cfg = heat_flags.resolve();
        fs::create_directories(heat_out);
        const auto manifest = zsad::load_manifest(heat_manifest);
        const auto encoder = zsad::make_backbone(cfg.backbone);
        const auto checkpoint = zsad::load_checkpoint(heat_checkpoint);
        const zsad::Preprocessor pre(cfg.backbone);

        const auto prompts = zsad::resolve_prompts(cfg.eval_options(), manifest);
        const auto learnable = zsad::build_localization_prototypes(checkpoint, *encoder);
        std::map<std::string, zsad::TextPrototypes> fixed_by_category;
        for (const auto& category : manifest.categories) {
            fixed_by_category.emplace(
                category, zsad::build_detection_prototypes(
                              zsad::compose_fixed_prompts(category, prompts.templates,
                                                          prompts.lexicon),
                              *encoder));
        }
        std::size_t written = 0;
        for (const auto& entry : manifest.samples) {
            const zsad::Sample sample = pre.load(entry, manifest);
            const auto r = zsad::run_inference(sample.image, *encoder,
                                               fixed_by_category.at(sample.category), learnable,
                                               cfg.sigma, cfg.strategy);
            const std::string stem = zsad::sanitize_sample_id(sample.id);
            zsad::export_heatmap_png(r.map, fs::path(heat_out) / (stem + ".png"), &sample.image);
            zsad::export_heatmap_raw(r.map, fs::path(heat_out) / (stem + ".zsmp"));
            ++written;
        }
        cfg.write_snapshot(fs::path(heat_out) / "resolved_config.json");
        std::printf("wrote %zu heatmaps to %s\n", written, heat_out.c_str());
        return 0;
    }

    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const zsad::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 1;
    }
}
