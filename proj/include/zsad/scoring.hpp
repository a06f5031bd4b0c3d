#pragma once

#include <cstdint>
#include <utility>

#include "zsad/backbone.hpp"
#include "zsad/common.hpp"
#include "zsad/prompts.hpp"

namespace zsad {

enum class MapStage : std::uint8_t { patch_grid, upsampled, smoothed };

// Per-pixel (or per-patch) anomaly likelihood map, values in [0,1].
struct AnomalyMap {
    Matrix values;
    MapStage stage = MapStage::patch_grid;

    double max_value() const;
};

enum class Strategy : std::uint8_t { S1, S2, S3, S4, S5 };

Strategy parse_strategy(const std::string& name);  // "S1".."S5"
std::string strategy_name(Strategy s);

// Image-level anomaly score. S1..S4 live in [0,1]; S5 adds the strongest
// local evidence and lives in [0,2]. Both terms are recorded so downstream
// consumers can re-weight without re-encoding.
struct ImageScore {
    double value = 0.0;
    Strategy strategy = Strategy::S5;
    double global_term = 0.0;
    double local_term = 0.0;
};

struct ClassLikelihood {
    double normal = 0.0;    // p_n
    double abnormal = 0.0;  // p_a; p_n + p_a = 1
};

// Numerically stable two-way softmax with max subtraction; exposed because
// several property tests exercise logit-shift invariance directly.
ClassLikelihood softmax_pair(double logit_normal, double logit_abnormal);

// Temperature-softmax likelihood of an embedding against the prototype pair.
// `e` is L2-normalized internally; prototypes are used as given.
ClassLikelihood class_likelihood(const Vec& e, const TextPrototypes& prototypes, double tau);

// Patch-grid likelihood maps (S_n, S_a) over the dense features.
std::pair<AnomalyMap, AnomalyMap> patch_anomaly_maps(const VisualFeatures& features,
                                                     const TextPrototypes& prototypes,
                                                     double tau);

// align_corners=false bilinear interpolation; target must not be smaller than
// the source in either dimension.
Matrix upsample_bilinear(const Matrix& src, std::size_t out_h, std::size_t out_w);
AnomalyMap upsample_bilinear(const AnomalyMap& map, std::size_t out_h, std::size_t out_w);

// Adjoint of upsample_bilinear: routes output-space gradients back onto the
// source grid. Needed by prompt training.
Matrix upsample_bilinear_adjoint(const Matrix& grad_out, std::size_t src_h, std::size_t src_w);

// Separable Gaussian blur, kernel radius ceil(4*sigma), reflect padding,
// kernel normalized to sum 1.
Matrix gaussian_smooth(const Matrix& src, double sigma);
AnomalyMap gaussian_smooth(const AnomalyMap& map, double sigma);

// Image-level strategies:
//   S1 = p_a(object token, fixed prototypes)
//   S2 = p_a(spatial token, fixed prototypes)
//   S3 = max(S1, S2)     S4 = mean(S1, S2)
//   S5 = S2 + max(patch-grid anomaly map)
// `patch_anomaly` is required only for S5 and must be the patch_grid-stage map.
ImageScore image_score(const VisualFeatures& features, const TextPrototypes& fixed_prototypes,
                       double tau, Strategy strategy,
                       const AnomalyMap* patch_anomaly = nullptr);

struct InferenceResult {
    ImageScore score;
    AnomalyMap map;               // smoothed, image resolution
    AnomalyMap patch_anomaly;     // patch-grid stage, kept for diagnostics
};

// Full per-image pipeline: encode, patch maps from learnable prototypes,
// upsample to the preprocessed image resolution, Gaussian smoothing, and the
// image score (default S5) from the fixed prototypes plus the strongest
// pre-upsampling local evidence.
InferenceResult run_inference(const Image& image, const Backbone& encoder,
                              const TextPrototypes& fixed_prototypes,
                              const TextPrototypes& learnable_prototypes, double sigma,
                              Strategy strategy = Strategy::S5);

} // namespace zsad
