#include "zsad/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "zsad/errors.hpp"

namespace zsad {

double AnomalyMap::max_value() const {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : values.data) m = std::max(m, v);
    return m;
}

Strategy parse_strategy(const std::string& name) {
    if (name == "S1" || name == "s1") return Strategy::S1;
    if (name == "S2" || name == "s2") return Strategy::S2;
    if (name == "S3" || name == "s3") return Strategy::S3;
    if (name == "S4" || name == "s4") return Strategy::S4;
    if (name == "S5" || name == "s5") return Strategy::S5;
    throw ParamError("unknown image-level strategy '" + name + "' (expected S1..S5)");
}

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::S1: return "S1";
        case Strategy::S2: return "S2";
        case Strategy::S3: return "S3";
        case Strategy::S4: return "S4";
        case Strategy::S5: return "S5";
    }
    return "S5";
}

ClassLikelihood softmax_pair(double logit_normal, double logit_abnormal) {
    const double m = std::max(logit_normal, logit_abnormal);
    const double en = std::exp(logit_normal - m);
    const double ea = std::exp(logit_abnormal - m);
    const double z = en + ea;
    return ClassLikelihood{en / z, ea / z};
}

ClassLikelihood class_likelihood(const Vec& e, const TextPrototypes& prototypes, double tau) {
    if (!(tau > 0.0)) throw ParamError("class_likelihood: temperature must be > 0");
    if (!all_finite(e)) throw InputError("class_likelihood: non-finite embedding");
    if (e.size() != prototypes.normal.size() || e.size() != prototypes.abnormal.size()) {
        throw InputError("class_likelihood: embedding/prototype dimension mismatch");
    }
    const Vec unit = l2_normalize(e);
    return softmax_pair(dot(prototypes.normal, unit) / tau, dot(prototypes.abnormal, unit) / tau);
}

std::pair<AnomalyMap, AnomalyMap> patch_anomaly_maps(const VisualFeatures& features,
                                                     const TextPrototypes& prototypes,
                                                     double tau) {
    const std::size_t h = features.grid_h;
    const std::size_t w = features.grid_w;
    if (h * w != features.patch_features.rows) {
        throw InputError("patch_anomaly_maps: grid shape does not match patch count");
    }

    AnomalyMap normal{Matrix(h, w), MapStage::patch_grid};
    AnomalyMap abnormal{Matrix(h, w), MapStage::patch_grid};
    for (std::size_t r = 0; r < features.patch_features.rows; ++r) {
        ClassLikelihood p = class_likelihood(features.patch_features.row(r), prototypes, tau);
        normal.values.data[r] = p.normal;
        abnormal.values.data[r] = p.abnormal;
    }
    return {std::move(normal), std::move(abnormal)};
}

Matrix upsample_bilinear(const Matrix& src, std::size_t out_h, std::size_t out_w) {
    if (src.rows == 0 || src.cols == 0) throw InputError("upsample_bilinear: empty source");
    if (out_h < src.rows || out_w < src.cols) {
        throw ParamError("upsample_bilinear: target smaller than source (downsampling is out "
                         "of contract)");
    }

    Matrix out(out_h, out_w);
    const double sy = static_cast<double>(src.rows) / static_cast<double>(out_h);
    const double sx = static_cast<double>(src.cols) / static_cast<double>(out_w);
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(src.rows - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, src.rows - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(src.cols - 1));
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, src.cols - 1);
            const double wx = fx - static_cast<double>(x0);
            out.at(oy, ox) = (1.0 - wy) * ((1.0 - wx) * src.at(y0, x0) + wx * src.at(y0, x1)) +
                             wy * ((1.0 - wx) * src.at(y1, x0) + wx * src.at(y1, x1));
        }
    }
    return out;
}

AnomalyMap upsample_bilinear(const AnomalyMap& map, std::size_t out_h, std::size_t out_w) {
    return AnomalyMap{upsample_bilinear(map.values, out_h, out_w), MapStage::upsampled};
}

Matrix upsample_bilinear_adjoint(const Matrix& grad_out, std::size_t src_h, std::size_t src_w) {
    if (grad_out.rows < src_h || grad_out.cols < src_w) {
        throw ParamError("upsample_bilinear_adjoint: gradient smaller than source grid");
    }
    Matrix grad_src(src_h, src_w, 0.0);
    const double sy = static_cast<double>(src_h) / static_cast<double>(grad_out.rows);
    const double sx = static_cast<double>(src_w) / static_cast<double>(grad_out.cols);
    for (std::size_t oy = 0; oy < grad_out.rows; ++oy) {
        double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(src_h - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, src_h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t ox = 0; ox < grad_out.cols; ++ox) {
            double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(src_w - 1));
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, src_w - 1);
            const double wx = fx - static_cast<double>(x0);
            const double g = grad_out.at(oy, ox);
            grad_src.at(y0, x0) += (1.0 - wy) * (1.0 - wx) * g;
            grad_src.at(y0, x1) += (1.0 - wy) * wx * g;
            grad_src.at(y1, x0) += wy * (1.0 - wx) * g;
            grad_src.at(y1, x1) += wy * wx * g;
        }
    }
    return grad_src;
}

namespace {

// Symmetric reflection (edge repeated): -1 -> 0, -2 -> 1, n -> n-1, ...
std::size_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return static_cast<std::size_t>(i);
}

} // namespace

Matrix gaussian_smooth(const Matrix& src, double sigma) {
    if (!(sigma > 0.0)) throw ParamError("gaussian_smooth: sigma must be > 0");
    if (src.rows == 0 || src.cols == 0) throw InputError("gaussian_smooth: empty map");

    const int radius = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int t = -radius; t <= radius; ++t) {
        const double v = std::exp(-(static_cast<double>(t) * t) / (2.0 * sigma * sigma));
        kernel[static_cast<std::size_t>(t + radius)] = v;
        sum += v;
    }
    for (double& v : kernel) v /= sum;

    // Horizontal pass then vertical pass.
    Matrix tmp(src.rows, src.cols);
    for (std::size_t y = 0; y < src.rows; ++y) {
        for (std::size_t x = 0; x < src.cols; ++x) {
            double acc = 0.0;
            for (int t = -radius; t <= radius; ++t) {
                const std::size_t xi = reflect_index(static_cast<std::ptrdiff_t>(x) + t,
                                                     static_cast<std::ptrdiff_t>(src.cols));
                acc += kernel[static_cast<std::size_t>(t + radius)] * src.at(y, xi);
            }
            tmp.at(y, x) = acc;
        }
    }
    Matrix out(src.rows, src.cols);
    for (std::size_t y = 0; y < src.rows; ++y) {
        for (std::size_t x = 0; x < src.cols; ++x) {
            double acc = 0.0;
            for (int t = -radius; t <= radius; ++t) {
                const std::size_t yi = reflect_index(static_cast<std::ptrdiff_t>(y) + t,
                                                     static_cast<std::ptrdiff_t>(src.rows));
                acc += kernel[static_cast<std::size_t>(t + radius)] * tmp.at(yi, x);
            }
            out.at(y, x) = acc;
        }
    }
    return out;
}

AnomalyMap gaussian_smooth(const AnomalyMap& map, double sigma) {
    return AnomalyMap{gaussian_smooth(map.values, sigma), MapStage::smoothed};
}

ImageScore image_score(const VisualFeatures& features, const TextPrototypes& fixed_prototypes,
                       double tau, Strategy strategy, const AnomalyMap* patch_anomaly) {
    const double s1 = class_likelihood(features.object_token, fixed_prototypes, tau).abnormal;
    const double s2 = class_likelihood(features.spatial_token, fixed_prototypes, tau).abnormal;

    ImageScore out;
    out.strategy = strategy;
    switch (strategy) {
        case Strategy::S1:
            out.value = out.global_term = s1;
            break;
        case Strategy::S2:
            out.value = out.global_term = s2;
            break;
        case Strategy::S3:
            out.value = out.global_term = std::max(s1, s2);
            break;
        case Strategy::S4:
            out.value = out.global_term = 0.5 * (s1 + s2);
            break;
        case Strategy::S5: {
            if (patch_anomaly == nullptr) {
                throw ParamError("image_score: strategy S5 needs the patch-grid anomaly map");
            }
            if (patch_anomaly->stage != MapStage::patch_grid) {
                throw ParamError("image_score: S5 takes the map before upsampling/smoothing");
            }
            out.global_term = s2;
            out.local_term = patch_anomaly->max_value();
            out.value = out.global_term + out.local_term;
            break;
        }
    }
    return out;
}

InferenceResult run_inference(const Image& image, const Backbone& encoder,
                              const TextPrototypes& fixed_prototypes,
                              const TextPrototypes& learnable_prototypes, double sigma,
                              Strategy strategy) {
    const double tau = encoder.config().temperature;
    const VisualFeatures features = encoder.encode_image(image);

    auto [map_n, map_a] = patch_anomaly_maps(features, learnable_prototypes, tau);
    (void)map_n;

    InferenceResult result;
    result.score = image_score(features, fixed_prototypes, tau, strategy, &map_a);
    AnomalyMap up = upsample_bilinear(map_a, image.height, image.width);
    result.map = gaussian_smooth(up, sigma);
    result.patch_anomaly = std::move(map_a);
    return result;
}

} // namespace zsad
