#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "zsad/common.hpp"

namespace zsad {

enum class ScoreKind : std::uint8_t { image, pixel };

struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels;  // {0,1}
    ScoreKind kind = ScoreKind::image;
};

// Metric result; `defined` is false when the input cannot support the metric
// (single-class AUROC, zero positives, ...). Undefined metrics are flagged,
// never thrown.
struct MetricValue {
    double value = 0.0;
    bool defined = false;

    static MetricValue undefined() { return {}; }
    static MetricValue of(double v) { return {v, true}; }
};

struct F1MaxResult {
    double f1 = 0.0;
    double threshold = 0.0;
    bool defined = false;
};

// Mann-Whitney AUROC with the 0.5 tie convention, via an O(n log n) rank sort.
MetricValue auroc(const ScoredSet& set);

// Step-interpolated average precision over descending-score prefixes, ties
// grouped.
MetricValue average_precision(const ScoredSet& set);

// Maximum F1 over the threshold family {unique scores}, predictions are
// (score >= t); F1 ties break toward the larger threshold.
F1MaxResult f1_max(const ScoredSet& set);

// Connected components of the positive mask pixels; each component is a list
// of flat pixel indices. connectivity is 4 or 8.
std::vector<std::vector<std::size_t>> connected_components(const Mask& mask,
                                                           int connectivity = 4);

struct AuproOptions {
    double fpr_limit = 0.3;
    int connectivity = 4;
    // All unique thresholds when the pooled pixel count is at most
    // exact_sweep_limit, otherwise quantile_thresholds quantile-spaced ones.
    std::size_t exact_sweep_limit = 100000;
    std::size_t quantile_thresholds = 200;
};

// Area under the per-region-overlap vs false-positive-rate curve, integrated
// by trapezoid up to fpr_limit and normalized by it. Regions and normal
// pixels are pooled across all images of the set.
MetricValue aupro(const std::vector<Matrix>& maps, const std::vector<Mask>& masks,
                  const AuproOptions& options = {});

struct ImageMetrics {
    MetricValue auroc;
    MetricValue ap;
    F1MaxResult f1;
};

struct PixelMetrics {
    MetricValue auroc;
    MetricValue aupro;
    F1MaxResult f1;
};

struct CategoryMetrics {
    std::string category;
    std::size_t sample_count = 0;
    std::size_t anomalous_count = 0;
    bool has_image_metrics = false;
    bool has_pixel_metrics = false;
    ImageMetrics image;
    PixelMetrics pixel;
};

// Raw per-category inputs handed to the aggregation step.
struct CategoryInputs {
    std::string category;
    ScoredSet image_scores;                 // one entry per sample
    std::vector<Matrix> pixel_maps;         // image-resolution anomaly maps
    std::vector<Mask> pixel_masks;          // matching ground-truth masks
    bool evaluate_image = true;
    bool evaluate_pixel = true;
};

struct EvalReport {
    std::string dataset_name;
    std::vector<CategoryMetrics> per_category;
    // Unweighted mean over categories with the metric defined.
    ImageMetrics mean_image;
    PixelMetrics mean_pixel;
    std::vector<std::string> undefined_flags;  // "<category>/<metric>" entries
    double fpr_limit = 0.3;
    std::string pixel_f1_pooling = "per_category_pooled";

    nlohmann::ordered_json to_json() const;
    // Aligned-column table with (AUROC, AP, F1-max) / (AUROC, AUPRO, F1-max)
    // tuples per category.
    std::string to_table() const;
};

EvalReport aggregate_report(const std::string& dataset_name,
                            const std::vector<CategoryInputs>& inputs,
                            const AuproOptions& aupro_options = {});

} // namespace zsad
