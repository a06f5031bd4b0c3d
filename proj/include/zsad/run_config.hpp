#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "zsad/backbone.hpp"
#include "zsad/evaluate.hpp"
#include "zsad/training.hpp"

namespace zsad {

// One structured config drives every CLI verb; command-line flags override
// individual fields and each run writes the fully-resolved snapshot next to
// its outputs.
struct RunConfig {
    BackboneConfig backbone;   // defaults to the desk-scale mock profile
    int prompt_tokens = 8;     // learnable tokens per prompt set
    std::uint64_t prompt_seed = 111;
    std::string lexicon = "auto";          // auto | generic | medical
    std::vector<std::string> templates;    // empty = lexicon default
    TrainConfig train;
    Strategy strategy = Strategy::S5;
    double sigma = 4.0;
    AuproOptions aupro;

    RunConfig();

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::filesystem::path& path);

    nlohmann::ordered_json to_json() const;
    void write_snapshot(const std::filesystem::path& path) const;

    EvalOptions eval_options() const;
};

} // namespace zsad
