#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "zsad/backbone.hpp"
#include "zsad/dataset.hpp"
#include "zsad/losses.hpp"
#include "zsad/prompts.hpp"

namespace zsad {

enum class LossMode : std::uint8_t { local, global, both };

LossMode parse_loss_mode(const std::string& name);
std::string loss_mode_name(LossMode mode);

struct TrainConfig {
    double learning_rate = 0.001;
    double beta1 = 0.5;
    double beta2 = 0.999;
    int epochs = 2;
    int batch_size = 8;
    std::uint64_t seed = 111;
    LossMode loss_mode = LossMode::local;
    double focal_gamma = 2.0;
    double focal_alpha = 0.25;
    double dice_epsilon = 1.0;
    // Term weights default to the unweighted sum.
    double focal_weight = 1.0;
    double dice_weight = 1.0;
    double global_weight = 1.0;
    bool shuffle = true;

    void validate() const;
};

struct TrainLogEntry {
    int epoch = 0;
    int step = 0;
    double focal = 0.0;
    double dice = 0.0;
    std::optional<double> global_ce;
    double total = 0.0;
    double wall_time_s = 0.0;
};

struct TrainResult {
    LearnablePromptState state;
    std::vector<TrainLogEntry> log;
};

// Local objective (and its prototype gradients) for one sample: patch maps
// from the prototypes, bilinear upsample to the mask resolution, focal over
// both channels plus dice over the anomaly channel. Exposed separately so the
// gradient can be checked against finite differences.
struct LocalLossResult {
    double focal = 0.0;
    double dice = 0.0;
    Vec grad_normal_proto;    // d(focal_weight*focal + dice_weight*dice)/d g_n
    Vec grad_abnormal_proto;
};

LocalLossResult local_loss_with_prototype_grad(const VisualFeatures& features,
                                               const TextPrototypes& prototypes, double tau,
                                               const Mask& target, const TrainConfig& config,
                                               bool want_grad = true);

// Streamed per-step logging; also receives the diagnostic entry emitted
// before a non-finite-loss abort.
using StepObserver = std::function<void(const TrainLogEntry&)>;

// Trains the learnable localization tokens with Adam while both encoders stay
// frozen. All randomness (shuffling) derives from config.seed. Local mode
// never reads image-level labels; global mode never reads masks. Returns the
// final state and one log entry per optimizer step.
TrainResult train_localization_prompts(const std::vector<Sample>& dataset,
                                       const Backbone& encoder, LearnablePromptState state,
                                       const TrainConfig& config,
                                       const StepObserver& on_step = {});

} // namespace zsad
