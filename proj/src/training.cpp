#include "zsad/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "zsad/errors.hpp"
#include "zsad/scoring.hpp"

namespace zsad {

LossMode parse_loss_mode(const std::string& name) {
    if (name == "local") return LossMode::local;
    if (name == "global") return LossMode::global;
    if (name == "both") return LossMode::both;
    throw ParamError("unknown loss_mode '" + name + "' (expected local, global or both)");
}

std::string loss_mode_name(LossMode mode) {
    switch (mode) {
        case LossMode::local: return "local";
        case LossMode::global: return "global";
        case LossMode::both: return "both";
    }
    return "local";
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ParamError("train: learning_rate must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ParamError("train: beta1 must lie in (0,1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ParamError("train: beta2 must lie in (0,1)");
    if (epochs < 1) throw ParamError("train: epochs must be >= 1");
    if (batch_size < 1) throw ParamError("train: batch_size must be >= 1");
    if (focal_gamma < 0.0) throw ParamError("train: focal_gamma must be >= 0");
    if (!(focal_alpha >= 0.0 && focal_alpha <= 1.0)) {
        throw ParamError("train: focal_alpha must lie in [0,1]");
    }
}

LocalLossResult local_loss_with_prototype_grad(const VisualFeatures& features,
                                               const TextPrototypes& prototypes, double tau,
                                               const Mask& target, const TrainConfig& config,
                                               bool want_grad) {
    auto [map_n, map_a] = patch_anomaly_maps(features, prototypes, tau);

    const Matrix up_a = upsample_bilinear(map_a.values, target.height, target.width);
    // Bilinear interpolation is affine, so Up(1 - p) = 1 - Up(p); the normal
    // channel can be derived instead of re-interpolated.
    Matrix up_n(up_a.rows, up_a.cols);
    for (std::size_t i = 0; i < up_a.data.size(); ++i) up_n.data[i] = 1.0 - up_a.data[i];

    LocalLossResult result;
    Matrix gfn, gfa, gda;
    result.focal = focal_loss_grad(up_n, up_a, target, config.focal_gamma, config.focal_alpha,
                                   want_grad ? &gfn : nullptr, want_grad ? &gfa : nullptr);
    result.dice = dice_loss_grad(up_a, target, config.dice_epsilon, want_grad ? &gda : nullptr);
    if (!want_grad) return result;

    // Total gradient in the upsampled anomaly channel: the focal normal
    // channel contributes through p_n = 1 - p_a.
    Matrix grad_up(up_a.rows, up_a.cols);
    for (std::size_t i = 0; i < grad_up.data.size(); ++i) {
        grad_up.data[i] = config.focal_weight * (gfa.data[i] - gfn.data[i]) +
                          config.dice_weight * gda.data[i];
    }

    const Matrix grad_patch =
        upsample_bilinear_adjoint(grad_up, map_a.values.rows, map_a.values.cols);

    // Through the softmax pair: dp_a/ds_a = p_a p_n / tau (and the negative
    // for s_n), then s = <g, e_hat>.
    const std::size_t d = prototypes.normal.size();
    result.grad_normal_proto.assign(d, 0.0);
    result.grad_abnormal_proto.assign(d, 0.0);
    for (std::size_t r = 0; r < features.patch_features.rows; ++r) {
        const double pa = map_a.values.data[r];
        const double pn = map_n.values.data[r];
        const double dl = grad_patch.data[r] * pa * pn / tau;
        if (dl == 0.0) continue;
        const Vec unit = l2_normalize(features.patch_features.row(r));
        for (std::size_t c = 0; c < d; ++c) {
            result.grad_abnormal_proto[c] += dl * unit[c];
            result.grad_normal_proto[c] -= dl * unit[c];
        }
    }
    return result;
}

namespace {

struct AdamState {
    Matrix m;
    Matrix v;

    explicit AdamState(const Matrix& shape_like)
        : m(shape_like.rows, shape_like.cols, 0.0), v(shape_like.rows, shape_like.cols, 0.0) {}

    void update(Matrix& params, const Matrix& grad, const TrainConfig& cfg, int t) {
        constexpr double eps = 1e-8;
        const double bc1 = 1.0 - std::pow(cfg.beta1, t);
        const double bc2 = 1.0 - std::pow(cfg.beta2, t);
        for (std::size_t i = 0; i < params.data.size(); ++i) {
            const double g = grad.data[i];
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g;
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            params.data[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + eps);
        }
    }
};

} // namespace

TrainResult train_localization_prompts(const std::vector<Sample>& dataset,
                                       const Backbone& encoder, LearnablePromptState state,
                                       const TrainConfig& config, const StepObserver& on_step) {
    config.validate();
    state.validate();
    if (dataset.empty()) throw DataError("train: empty dataset");

    const bool use_local = config.loss_mode != LossMode::global;
    const bool use_global = config.loss_mode != LossMode::local;
    if (use_local) {
        for (const auto& s : dataset) {
            if (!s.mask.has_value()) {
                throw DataError("train: sample '" + s.id +
                                "' has no mask but the local loss requires one");
            }
        }
    }

    const double tau = encoder.config().temperature;
    const auto t_start = std::chrono::steady_clock::now();

    // Encoding dominates cost; every image is encoded exactly once and the
    // features are reused across epochs and loss terms.
    std::vector<VisualFeatures> features;
    features.reserve(dataset.size());
    for (const auto& s : dataset) features.push_back(encoder.encode_image(s.image));

    AdamState adam_n(state.tokens_normal);
    AdamState adam_a(state.tokens_abnormal);

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    int step = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        if (config.shuffle) {
            Rng rng(derive_seed(config.seed, "epoch_shuffle", static_cast<std::uint64_t>(epoch)));
            rng.shuffle(order);
        }
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
            const double inv_batch = 1.0 / static_cast<double>(end - begin);

            // Rebuild the localization prototypes from the current tokens.
            const TokenEmbeddingSequence seq_n = normal_prompt_sequence(state, encoder);
            const TokenEmbeddingSequence seq_a = abnormal_prompt_sequence(state, encoder);
            TextPrototypes protos;
            protos.normal = encoder.encode_token_sequence(seq_n).vector;
            protos.abnormal = encoder.encode_token_sequence(seq_a).vector;
            protos.source = PrototypeSource::learnable;

            double focal_sum = 0.0;
            double dice_sum = 0.0;
            double global_sum = 0.0;
            Vec grad_gn(protos.normal.size(), 0.0);
            Vec grad_ga(protos.abnormal.size(), 0.0);

            for (std::size_t k = begin; k < end; ++k) {
                const std::size_t idx = order[k];
                const Sample& sample = dataset[idx];
                if (use_local) {
                    LocalLossResult local = local_loss_with_prototype_grad(
                        features[idx], protos, tau, *sample.mask, config, true);
                    focal_sum += local.focal;
                    dice_sum += local.dice;
                    for (std::size_t c = 0; c < grad_gn.size(); ++c) {
                        grad_gn[c] += local.grad_normal_proto[c] * inv_batch;
                        grad_ga[c] += local.grad_abnormal_proto[c] * inv_batch;
                    }
                }
                if (use_global) {
                    Vec ggn, gga;
                    global_sum += global_ce_loss_grad(features[idx].spatial_token, protos, tau,
                                                      sample.label, &ggn, &gga);
                    for (std::size_t c = 0; c < grad_gn.size(); ++c) {
                        grad_gn[c] += config.global_weight * ggn[c] * inv_batch;
                        grad_ga[c] += config.global_weight * gga[c] * inv_batch;
                    }
                }
            }

            TrainLogEntry entry;
            entry.epoch = epoch;
            entry.step = ++step;
            entry.focal = use_local ? focal_sum * inv_batch : 0.0;
            entry.dice = use_local ? dice_sum * inv_batch : 0.0;
            if (use_global) entry.global_ce = global_sum * inv_batch;
            entry.total = config.focal_weight * entry.focal + config.dice_weight * entry.dice +
                          (use_global ? config.global_weight * *entry.global_ce : 0.0);
            entry.wall_time_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

            if (on_step) on_step(entry);
            if (!std::isfinite(entry.total)) {
                result.log.push_back(entry);
                throw NumericError(
                    "train: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                    std::to_string(step) + " (focal=" + std::to_string(entry.focal) +
                    ", dice=" + std::to_string(entry.dice) +
                    (entry.global_ce ? ", global_ce=" + std::to_string(*entry.global_ce) : "") +
                    ")");
            }

            // Prototype gradients flow through the frozen text path onto the
            // learned rows only.
            const Matrix rows_n = encoder.encode_token_sequence_backward(seq_n, grad_gn);
            const Matrix rows_a = encoder.encode_token_sequence_backward(seq_a, grad_ga);
            const auto e = static_cast<std::size_t>(state.token_count);
            Matrix grad_tn(e, state.tokens_normal.cols);
            Matrix grad_ta(e, state.tokens_abnormal.cols);
            for (std::size_t r = 0; r < e; ++r) {
                for (std::size_t c = 0; c < grad_tn.cols; ++c) {
                    grad_tn.at(r, c) = rows_n.at(r, c);
                    grad_ta.at(r, c) = rows_a.at(r, c);
                }
            }
            adam_n.update(state.tokens_normal, grad_tn, config, step);
            adam_a.update(state.tokens_abnormal, grad_ta, config, step);

            result.log.push_back(entry);
        }
    }

    result.state = std::move(state);
    return result;
}

} // namespace zsad
