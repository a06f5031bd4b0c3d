#include "zsad/run_config.hpp"

#include <fstream>

#include "zsad/errors.hpp"

namespace zsad {

RunConfig::RunConfig() : backbone(mock_config()) {}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig cfg;
    if (j.contains("backbone")) {
        const auto& b = j["backbone"];
        cfg.backbone.name = b.value("name", cfg.backbone.name);
        // A recognized variant name prefills its published dimensions; any
        // explicit field below still wins.
        if (const auto* profile = find_backbone_profile(cfg.backbone.name)) {
            cfg.backbone.embed_dim = profile->embed_dim;
            cfg.backbone.text_token_dim = profile->embed_dim;
            cfg.backbone.patch_size = profile->patch_size;
            cfg.backbone.input_resolution = profile->input_resolution;
            cfg.backbone.patch_layers.clear();  // last exported block
            cfg.backbone.normalization_mean = {0.485, 0.456, 0.406};
            cfg.backbone.normalization_std = {0.229, 0.224, 0.225};
        }
        cfg.backbone.weights_path = b.value("weights_path", cfg.backbone.weights_path);
        cfg.backbone.patch_size = b.value("patch_size", cfg.backbone.patch_size);
        cfg.backbone.input_resolution = b.value("input_resolution", cfg.backbone.input_resolution);
        cfg.backbone.embed_dim = b.value("embed_dim", cfg.backbone.embed_dim);
        cfg.backbone.text_token_dim = b.value("text_token_dim", cfg.backbone.text_token_dim);
        cfg.backbone.temperature = b.value("temperature", cfg.backbone.temperature);
        if (b.contains("patch_layers")) {
            cfg.backbone.patch_layers.clear();
            for (const auto& l : b["patch_layers"]) cfg.backbone.patch_layers.push_back(l.get<int>());
        }
        if (b.contains("normalization_mean")) {
            cfg.backbone.normalization_mean.clear();
            for (const auto& v : b["normalization_mean"]) {
                cfg.backbone.normalization_mean.push_back(v.get<double>());
            }
        }
        if (b.contains("normalization_std")) {
            cfg.backbone.normalization_std.clear();
            for (const auto& v : b["normalization_std"]) {
                cfg.backbone.normalization_std.push_back(v.get<double>());
            }
        }
    }
    if (j.contains("prompts")) {
        const auto& p = j["prompts"];
        cfg.prompt_tokens = p.value("tokens", cfg.prompt_tokens);
        cfg.prompt_seed = p.value("seed", cfg.prompt_seed);
        cfg.lexicon = p.value("lexicon", cfg.lexicon);
        if (p.contains("templates")) {
            for (const auto& t : p["templates"]) cfg.templates.push_back(t.get<std::string>());
        }
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
        cfg.train.beta1 = t.value("beta1", cfg.train.beta1);
        cfg.train.beta2 = t.value("beta2", cfg.train.beta2);
        cfg.train.epochs = t.value("epochs", cfg.train.epochs);
        cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
        cfg.train.seed = t.value("seed", cfg.train.seed);
        if (t.contains("loss_mode")) {
            cfg.train.loss_mode = parse_loss_mode(t["loss_mode"].get<std::string>());
        }
        cfg.train.focal_gamma = t.value("focal_gamma", cfg.train.focal_gamma);
        cfg.train.focal_alpha = t.value("focal_alpha", cfg.train.focal_alpha);
        cfg.train.dice_epsilon = t.value("dice_epsilon", cfg.train.dice_epsilon);
        cfg.train.focal_weight = t.value("focal_weight", cfg.train.focal_weight);
        cfg.train.dice_weight = t.value("dice_weight", cfg.train.dice_weight);
        cfg.train.global_weight = t.value("global_weight", cfg.train.global_weight);
        cfg.train.shuffle = t.value("shuffle", cfg.train.shuffle);
    }
    if (j.contains("scoring")) {
        const auto& s = j["scoring"];
        if (s.contains("strategy")) cfg.strategy = parse_strategy(s["strategy"].get<std::string>());
        cfg.sigma = s.value("sigma", cfg.sigma);
    }
    if (j.contains("metrics")) {
        const auto& m = j["metrics"];
        cfg.aupro.fpr_limit = m.value("fpr_limit", cfg.aupro.fpr_limit);
        cfg.aupro.connectivity = m.value("connectivity", cfg.aupro.connectivity);
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw AssetError("config file not found: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("config is not valid JSON: " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::ordered_json RunConfig::to_json() const {
    nlohmann::ordered_json j;
    j["backbone"] = {{"name", backbone.name},
                     {"weights_path", backbone.weights_path},
                     {"patch_size", backbone.patch_size},
                     {"input_resolution", backbone.input_resolution},
                     {"embed_dim", backbone.embed_dim},
                     {"text_token_dim", backbone.text_token_dim},
                     {"temperature", backbone.temperature},
                     {"patch_layers", backbone.patch_layers},
                     {"normalization_mean", backbone.normalization_mean},
                     {"normalization_std", backbone.normalization_std}};
    j["prompts"] = {{"tokens", prompt_tokens},
                    {"seed", prompt_seed},
                    {"lexicon", lexicon},
                    {"templates", templates}};
    j["train"] = {{"learning_rate", train.learning_rate},
                  {"beta1", train.beta1},
                  {"beta2", train.beta2},
                  {"epochs", train.epochs},
                  {"batch_size", train.batch_size},
                  {"seed", train.seed},
                  {"loss_mode", loss_mode_name(train.loss_mode)},
                  {"focal_gamma", train.focal_gamma},
                  {"focal_alpha", train.focal_alpha},
                  {"dice_epsilon", train.dice_epsilon},
                  {"focal_weight", train.focal_weight},
                  {"dice_weight", train.dice_weight},
                  {"global_weight", train.global_weight},
                  {"shuffle", train.shuffle}};
    j["scoring"] = {{"strategy", strategy_name(strategy)}, {"sigma", sigma}};
    j["metrics"] = {{"fpr_limit", aupro.fpr_limit}, {"connectivity", aupro.connectivity}};
    return j;
}

void RunConfig::write_snapshot(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write resolved config snapshot: " + path.string());
    out << to_json().dump(2) << "\n";
}

EvalOptions RunConfig::eval_options() const {
    EvalOptions opts;
    opts.strategy = strategy;
    opts.sigma = sigma;
    opts.aupro = aupro;
    opts.lexicon = lexicon;
    opts.templates = templates;
    return opts;
}

} // namespace zsad
