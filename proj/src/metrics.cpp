#include "zsad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "zsad/errors.hpp"

namespace zsad {

namespace {

void check_set(const ScoredSet& set, const char* op) {
    if (set.scores.size() != set.labels.size()) {
        throw InputError(std::string(op) + ": scores/labels length mismatch");
    }
    for (int l : set.labels) {
        if (l != 0 && l != 1) throw InputError(std::string(op) + ": labels must be 0 or 1");
    }
    for (double s : set.scores) {
        if (!std::isfinite(s)) throw InputError(std::string(op) + ": non-finite score");
    }
}

std::vector<std::size_t> order_descending(const std::vector<double>& scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

} // namespace

MetricValue auroc(const ScoredSet& set) {
    check_set(set, "auroc");
    std::size_t positives = 0;
    for (int l : set.labels) positives += static_cast<std::size_t>(l);
    const std::size_t negatives = set.labels.size() - positives;
    if (positives == 0 || negatives == 0) return MetricValue::undefined();

    // Average ranks over tied groups, ranks ascending in score.
    std::vector<std::size_t> order(set.scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return set.scores[a] < set.scores[b];
    });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && set.scores[order[j + 1]] == set.scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) {
            if (set.labels[order[k]] == 1) rank_sum_pos += avg_rank;
        }
        i = j + 1;
    }
    const double p = static_cast<double>(positives);
    const double n = static_cast<double>(negatives);
    const double u = rank_sum_pos - p * (p + 1.0) / 2.0;
    return MetricValue::of(u / (p * n));
}

MetricValue average_precision(const ScoredSet& set) {
    check_set(set, "average_precision");
    std::size_t positives = 0;
    for (int l : set.labels) positives += static_cast<std::size_t>(l);
    if (positives == 0) return MetricValue::undefined();

    const auto order = order_descending(set.scores);
    double ap = 0.0;
    double recall_prev = 0.0;
    std::size_t tp = 0;
    std::size_t seen = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        // Process one tied-score group as a block.
        std::size_t j = i;
        while (j + 1 < order.size() && set.scores[order[j + 1]] == set.scores[order[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) {
            tp += static_cast<std::size_t>(set.labels[order[k]]);
            ++seen;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(positives);
        const double precision = static_cast<double>(tp) / static_cast<double>(seen);
        ap += (recall - recall_prev) * precision;
        recall_prev = recall;
        i = j + 1;
    }
    return MetricValue::of(ap);
}

F1MaxResult f1_max(const ScoredSet& set) {
    check_set(set, "f1_max");
    std::size_t positives = 0;
    for (int l : set.labels) positives += static_cast<std::size_t>(l);
    if (positives == 0) return F1MaxResult{};

    const auto order = order_descending(set.scores);
    F1MaxResult best;
    best.defined = true;
    best.f1 = -1.0;
    std::size_t tp = 0;
    std::size_t seen = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && set.scores[order[j + 1]] == set.scores[order[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) {
            tp += static_cast<std::size_t>(set.labels[order[k]]);
            ++seen;
        }
        // Threshold = this group's score; prediction is (score >= t).
        const double fp = static_cast<double>(seen - tp);
        const double fn = static_cast<double>(positives - tp);
        const double f1 = 2.0 * static_cast<double>(tp) /
                          (2.0 * static_cast<double>(tp) + fp + fn);
        // Strict > keeps the largest threshold on ties (descending sweep).
        if (f1 > best.f1) {
            best.f1 = f1;
            best.threshold = set.scores[order[i]];
        }
        i = j + 1;
    }
    return best;
}

std::vector<std::vector<std::size_t>> connected_components(const Mask& mask, int connectivity) {
    if (connectivity != 4 && connectivity != 8) {
        throw ParamError("connected_components: connectivity must be 4 or 8");
    }
    const std::size_t h = mask.height;
    const std::size_t w = mask.width;
    std::vector<std::vector<std::size_t>> regions;
    std::vector<std::uint8_t> visited(h * w, 0);
    std::vector<std::size_t> stack;

    for (std::size_t start = 0; start < h * w; ++start) {
        if (mask.data[start] == 0 || visited[start]) continue;
        regions.emplace_back();
        auto& region = regions.back();
        stack.clear();
        stack.push_back(start);
        visited[start] = 1;
        while (!stack.empty()) {
            const std::size_t idx = stack.back();
            stack.pop_back();
            region.push_back(idx);
            const std::size_t y = idx / w;
            const std::size_t x = idx % w;
            auto visit = [&](std::size_t ny, std::size_t nx) {
                const std::size_t nidx = ny * w + nx;
                if (mask.data[nidx] != 0 && !visited[nidx]) {
                    visited[nidx] = 1;
                    stack.push_back(nidx);
                }
            };
            if (y > 0) visit(y - 1, x);
            if (y + 1 < h) visit(y + 1, x);
            if (x > 0) visit(y, x - 1);
            if (x + 1 < w) visit(y, x + 1);
            if (connectivity == 8) {
                if (y > 0 && x > 0) visit(y - 1, x - 1);
                if (y > 0 && x + 1 < w) visit(y - 1, x + 1);
                if (y + 1 < h && x > 0) visit(y + 1, x - 1);
                if (y + 1 < h && x + 1 < w) visit(y + 1, x + 1);
            }
        }
        std::sort(region.begin(), region.end());
    }
    return regions;
}

MetricValue aupro(const std::vector<Matrix>& maps, const std::vector<Mask>& masks,
                  const AuproOptions& options) {
    if (!(options.fpr_limit > 0.0 && options.fpr_limit <= 1.0)) {
        throw ParamError("aupro: fpr_limit must lie in (0, 1]");
    }
    if (maps.size() != masks.size()) throw InputError("aupro: maps/masks count mismatch");

    // Pool pixels across images; each pixel knows its region (or none) so a
    // single descending sweep maintains every per-region overlap counter.
    struct PixelRef {
        double score;
        std::int32_t region;  // -1 for normal pixels
    };
    std::vector<PixelRef> pixels;
    std::vector<double> region_inv_size;
    std::size_t normal_total = 0;

    for (std::size_t i = 0; i < maps.size(); ++i) {
        const Matrix& map = maps[i];
        const Mask& mask = masks[i];
        if (map.rows != mask.height || map.cols != mask.width) {
            throw InputError("aupro: map/mask shape mismatch at image " + std::to_string(i));
        }
        std::vector<std::int32_t> region_of(mask.data.size(), -1);
        for (const auto& region : connected_components(mask, options.connectivity)) {
            const auto id = static_cast<std::int32_t>(region_inv_size.size());
            region_inv_size.push_back(1.0 / static_cast<double>(region.size()));
            for (std::size_t idx : region) region_of[idx] = id;
        }
        for (std::size_t idx = 0; idx < map.data.size(); ++idx) {
            if (!std::isfinite(map.data[idx])) {
                throw InputError("aupro: non-finite score at image " + std::to_string(i));
            }
            pixels.push_back({map.data[idx], region_of[idx]});
            if (region_of[idx] < 0) ++normal_total;
        }
    }
    if (region_inv_size.empty()) return MetricValue::undefined();

    std::stable_sort(pixels.begin(), pixels.end(),
                     [](const PixelRef& a, const PixelRef& b) { return a.score > b.score; });

    // Thresholds descending: every unique score at desk scale, quantiles of
    // the pooled distribution otherwise.
    std::vector<double> thresholds;
    if (pixels.size() <= options.exact_sweep_limit) {
        thresholds.reserve(pixels.size());
        for (const auto& p : pixels) {
            if (thresholds.empty() || thresholds.back() != p.score) thresholds.push_back(p.score);
        }
    } else {
        const std::size_t k = options.quantile_thresholds;
        thresholds.reserve(k);
        for (std::size_t q = 0; q < k; ++q) {
            const std::size_t idx = (q * (pixels.size() - 1)) / (k - 1);
            const double t = pixels[idx].score;
            if (thresholds.empty() || thresholds.back() != t) thresholds.push_back(t);
        }
    }

    const double inv_regions = 1.0 / static_cast<double>(region_inv_size.size());
    const double inv_normals =
        normal_total > 0 ? 1.0 / static_cast<double>(normal_total) : 0.0;

    // Sweep: points (fpr, mean per-region overlap), starting from the empty
    // prediction at (0, 0).
    std::vector<std::pair<double, double>> curve;
    curve.reserve(thresholds.size() + 1);
    curve.emplace_back(0.0, 0.0);
    double overlap_sum = 0.0;  // sum over regions of covered fraction
    std::size_t fp = 0;
    std::size_t cursor = 0;
    for (double t : thresholds) {
        while (cursor < pixels.size() && pixels[cursor].score >= t) {
            if (pixels[cursor].region >= 0) {
                overlap_sum += region_inv_size[static_cast<std::size_t>(pixels[cursor].region)];
            } else {
                ++fp;
            }
            ++cursor;
        }
        curve.emplace_back(static_cast<double>(fp) * inv_normals, overlap_sum * inv_regions);
    }

    // Trapezoid up to the limit; horizontal extension when the curve stops
    // short (no normal pixels).
    const double limit = options.fpr_limit;
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        double x0 = curve[i - 1].first;
        double y0 = curve[i - 1].second;
        double x1 = curve[i].first;
        double y1 = curve[i].second;
        if (x0 >= limit) break;
        if (x1 > limit) {
            const double w = x1 - x0;
            y1 = w > 0.0 ? y0 + (y1 - y0) * (limit - x0) / w : y1;
            x1 = limit;
        }
        area += 0.5 * (y0 + y1) * (x1 - x0);
    }
    const double reached = std::min(curve.back().first, limit);
    if (reached < limit) {
        area += curve.back().second * (limit - reached);
    }
    return MetricValue::of(area / limit);
}

namespace {

ImageMetrics compute_image_metrics(const ScoredSet& set) {
    ImageMetrics m;
    m.auroc = auroc(set);
    m.ap = average_precision(set);
    m.f1 = f1_max(set);
    return m;
}

nlohmann::ordered_json metric_json(const MetricValue& v) {
    if (!v.defined) return nullptr;
    return v.value;
}

std::string fmt_metric(const MetricValue& v) {
    if (!v.defined) return "   -  ";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%6.4f", v.value);
    return buf;
}

} // namespace

EvalReport aggregate_report(const std::string& dataset_name,
                            const std::vector<CategoryInputs>& inputs,
                            const AuproOptions& aupro_options) {
    if (inputs.empty()) throw InputError("aggregate_report: no categories");

    EvalReport report;
    report.dataset_name = dataset_name;
    report.fpr_limit = aupro_options.fpr_limit;

    double sum_i_auroc = 0.0, sum_i_ap = 0.0, sum_i_f1 = 0.0;
    std::size_t n_i_auroc = 0, n_i_ap = 0, n_i_f1 = 0;
    double sum_p_auroc = 0.0, sum_p_aupro = 0.0, sum_p_f1 = 0.0;
    std::size_t n_p_auroc = 0, n_p_aupro = 0, n_p_f1 = 0;

    for (const auto& in : inputs) {
        CategoryMetrics cat;
        cat.category = in.category;
        cat.sample_count = in.image_scores.labels.size();
        for (int l : in.image_scores.labels) cat.anomalous_count += static_cast<std::size_t>(l);

        if (in.evaluate_image) {
            cat.has_image_metrics = true;
            cat.image = compute_image_metrics(in.image_scores);
            if (cat.image.auroc.defined) {
                sum_i_auroc += cat.image.auroc.value;
                ++n_i_auroc;
            } else {
                report.undefined_flags.push_back(in.category + "/image_auroc");
            }
            if (cat.image.ap.defined) {
                sum_i_ap += cat.image.ap.value;
                ++n_i_ap;
            } else {
                report.undefined_flags.push_back(in.category + "/image_ap");
            }
            if (cat.image.f1.defined) {
                sum_i_f1 += cat.image.f1.f1;
                ++n_i_f1;
            } else {
                report.undefined_flags.push_back(in.category + "/image_f1max");
            }
        }

        if (in.evaluate_pixel) {
            cat.has_pixel_metrics = true;
            // Pixel AUROC / F1-max pool every pixel of the category.
            ScoredSet pooled;
            pooled.kind = ScoreKind::pixel;
            for (std::size_t i = 0; i < in.pixel_maps.size(); ++i) {
                const Matrix& map = in.pixel_maps[i];
                const Mask& mask = in.pixel_masks[i];
                if (map.rows != mask.height || map.cols != mask.width) {
                    throw InputError("aggregate_report: map/mask shape mismatch in category " +
                                     in.category);
                }
                for (std::size_t k = 0; k < map.data.size(); ++k) {
                    pooled.scores.push_back(map.data[k]);
                    pooled.labels.push_back(mask.data[k] != 0 ? 1 : 0);
                }
            }
            cat.pixel.auroc = auroc(pooled);
            cat.pixel.f1 = f1_max(pooled);
            cat.pixel.aupro = aupro(in.pixel_maps, in.pixel_masks, aupro_options);
            if (cat.pixel.auroc.defined) {
                sum_p_auroc += cat.pixel.auroc.value;
                ++n_p_auroc;
            } else {
                report.undefined_flags.push_back(in.category + "/pixel_auroc");
            }
            if (cat.pixel.aupro.defined) {
                sum_p_aupro += cat.pixel.aupro.value;
                ++n_p_aupro;
            } else {
                report.undefined_flags.push_back(in.category + "/pixel_aupro");
            }
            if (cat.pixel.f1.defined) {
                sum_p_f1 += cat.pixel.f1.f1;
                ++n_p_f1;
            } else {
                report.undefined_flags.push_back(in.category + "/pixel_f1max");
            }
        }
        report.per_category.push_back(std::move(cat));
    }

    if (n_i_auroc > 0) report.mean_image.auroc = MetricValue::of(sum_i_auroc / n_i_auroc);
    if (n_i_ap > 0) report.mean_image.ap = MetricValue::of(sum_i_ap / n_i_ap);
    if (n_i_f1 > 0) {
        report.mean_image.f1.defined = true;
        report.mean_image.f1.f1 = sum_i_f1 / static_cast<double>(n_i_f1);
    }
    if (n_p_auroc > 0) report.mean_pixel.auroc = MetricValue::of(sum_p_auroc / n_p_auroc);
    if (n_p_aupro > 0) report.mean_pixel.aupro = MetricValue::of(sum_p_aupro / n_p_aupro);
    if (n_p_f1 > 0) {
        report.mean_pixel.f1.defined = true;
        report.mean_pixel.f1.f1 = sum_p_f1 / static_cast<double>(n_p_f1);
    }
    return report;
}

nlohmann::ordered_json EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["dataset"] = dataset_name;
    j["fpr_limit"] = fpr_limit;
    j["pixel_f1_pooling"] = pixel_f1_pooling;

    nlohmann::ordered_json cats = nlohmann::ordered_json::object();
    for (const auto& cat : per_category) {
        nlohmann::ordered_json c;
        c["samples"] = cat.sample_count;
        c["anomalous"] = cat.anomalous_count;
        if (cat.has_image_metrics) {
            c["image"] = {{"auroc", metric_json(cat.image.auroc)},
                          {"ap", metric_json(cat.image.ap)},
                          {"f1max", cat.image.f1.defined ? nlohmann::ordered_json(cat.image.f1.f1)
                                                         : nlohmann::ordered_json(nullptr)}};
        }
        if (cat.has_pixel_metrics) {
            c["pixel"] = {{"auroc", metric_json(cat.pixel.auroc)},
                          {"aupro", metric_json(cat.pixel.aupro)},
                          {"f1max", cat.pixel.f1.defined ? nlohmann::ordered_json(cat.pixel.f1.f1)
                                                         : nlohmann::ordered_json(nullptr)}};
        }
        cats[cat.category] = c;
    }
    j["per_category"] = cats;

    nlohmann::ordered_json mean;
    const bool any_image =
        mean_image.auroc.defined || mean_image.ap.defined || mean_image.f1.defined;
    const bool any_pixel =
        mean_pixel.auroc.defined || mean_pixel.aupro.defined || mean_pixel.f1.defined;
    if (any_image) {
        mean["image"] = {{"auroc", metric_json(mean_image.auroc)},
                         {"ap", metric_json(mean_image.ap)},
                         {"f1max", mean_image.f1.defined ? nlohmann::ordered_json(mean_image.f1.f1)
                                                         : nlohmann::ordered_json(nullptr)}};
    }
    if (any_pixel) {
        mean["pixel"] = {{"auroc", metric_json(mean_pixel.auroc)},
                         {"aupro", metric_json(mean_pixel.aupro)},
                         {"f1max", mean_pixel.f1.defined ? nlohmann::ordered_json(mean_pixel.f1.f1)
                                                         : nlohmann::ordered_json(nullptr)}};
    }
    j["dataset_mean"] = mean;
    j["undefined_metrics"] = undefined_flags;
    return j;
}

std::string EvalReport::to_table() const {
    std::ostringstream out;
    std::size_t name_w = 8;
    for (const auto& cat : per_category) name_w = std::max(name_w, cat.category.size());
    name_w = std::max(name_w, dataset_name.size() + 5);

    out << "dataset: " << dataset_name << "\n";
    out << std::string(name_w, ' ')
        << "  image (AUROC, AP, F1-max)      pixel (AUROC, AUPRO, F1-max)\n";
    auto row = [&](const std::string& name, bool has_image, const ImageMetrics& im,
                   bool has_pixel, const PixelMetrics& px) {
        out << name << std::string(name_w - name.size(), ' ') << "  ";
        if (has_image) {
            out << "(" << fmt_metric(im.auroc) << ", " << fmt_metric(im.ap) << ", "
                << fmt_metric(MetricValue{im.f1.f1, im.f1.defined}) << ")";
        } else {
            out << std::string(26, ' ') << "    ";
        }
        out << "   ";
        if (has_pixel) {
            out << "(" << fmt_metric(px.auroc) << ", " << fmt_metric(px.aupro) << ", "
                << fmt_metric(MetricValue{px.f1.f1, px.f1.defined}) << ")";
        }
        out << "\n";
    };
    for (const auto& cat : per_category) {
        row(cat.category, cat.has_image_metrics, cat.image, cat.has_pixel_metrics, cat.pixel);
    }
    const bool any_image =
        mean_image.auroc.defined || mean_image.ap.defined || mean_image.f1.defined;
    const bool any_pixel =
        mean_pixel.auroc.defined || mean_pixel.aupro.defined || mean_pixel.f1.defined;
    row("mean", any_image, mean_image, any_pixel, mean_pixel);
    return out.str();
}

} // namespace zsad
