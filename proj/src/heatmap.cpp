#include "zsad/heatmap.hpp"

#include <algorithm>
#include <cmath>

#include "zsad/container.hpp"
#include "zsad/errors.hpp"
#include "zsad/image_io.hpp"

namespace zsad {

namespace {

constexpr char kMapMagic[4] = {'Z', 'S', 'M', 'P'};

// Viridis anchors sampled every 1/8 of the range; linear interpolation
// between them is close enough for inspection overlays.
constexpr double kViridis[9][3] = {
    {0.267004, 0.004874, 0.329415}, {0.275191, 0.194905, 0.496005},
    {0.212395, 0.359683, 0.551710}, {0.153364, 0.497000, 0.557724},
    {0.122312, 0.633153, 0.530398}, {0.288921, 0.758394, 0.428426},
    {0.626579, 0.854645, 0.223353}, {0.993248, 0.906157, 0.143936},
    {0.993248, 0.906157, 0.143936},
};

void viridis(double v, double rgb[3]) {
    v = std::clamp(v, 0.0, 1.0);
    const double t = v * 7.0;
    const int lo = static_cast<int>(t);
    const double f = t - lo;
    for (int c = 0; c < 3; ++c) {
        rgb[c] = kViridis[lo][c] * (1.0 - f) + kViridis[lo + 1][c] * f;
    }
}

std::string stage_name(MapStage stage) {
    switch (stage) {
        case MapStage::patch_grid: return "patch_grid";
        case MapStage::upsampled: return "upsampled";
        case MapStage::smoothed: return "smoothed";
    }
    return "smoothed";
}

MapStage stage_from_name(const std::string& name) {
    if (name == "patch_grid") return MapStage::patch_grid;
    if (name == "upsampled") return MapStage::upsampled;
    return MapStage::smoothed;
}

} // namespace

void export_heatmap_png(const AnomalyMap& map, const std::filesystem::path& path,
                        const Image* base, double overlay_alpha) {
    const Matrix& m = map.values;
    if (m.empty()) throw InputError("export_heatmap_png: empty map");
    if (base != nullptr && (base->height != m.rows || base->width != m.cols)) {
        throw InputError("export_heatmap_png: base image shape does not match map");
    }

    RawImage out;
    out.width = m.cols;
    out.height = m.rows;
    out.channels = 3;
    out.pixels.resize(m.rows * m.cols * 3);
    double rgb[3];
    for (std::size_t y = 0; y < m.rows; ++y) {
        for (std::size_t x = 0; x < m.cols; ++x) {
            viridis(m.at(y, x), rgb);
            for (std::size_t c = 0; c < 3; ++c) {
                double v = rgb[c];
                if (base != nullptr) {
                    // Base images are normalized tensors; fold them back to a
                    // displayable [0,1] gray by clamping.
                    const std::size_t bc = std::min(c, base->channels - 1);
                    const double g = std::clamp(base->at(bc, y, x) * 0.5 + 0.5, 0.0, 1.0);
                    v = overlay_alpha * v + (1.0 - overlay_alpha) * g;
                }
                out.pixels[(y * m.cols + x) * 3 + c] =
                    static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            }
        }
    }
    write_png(path, out);
}

void export_heatmap_raw(const AnomalyMap& map, const std::filesystem::path& path) {
    nlohmann::ordered_json meta;
    meta["version"] = 1;
    meta["stage"] = stage_name(map.stage);
    container::write_file(path, kMapMagic, meta,
                          {container::from_matrix("values", map.values)});
}

AnomalyMap load_heatmap_raw(const std::filesystem::path& path) {
    auto file = container::read_file(path, kMapMagic);
    AnomalyMap map;
    map.values = container::to_matrix(file.tensor("values"));
    map.stage = stage_from_name(file.meta.value("stage", "smoothed"));
    return map;
}

std::string sanitize_sample_id(const std::string& id) {
    std::string out;
    out.reserve(id.size());
    for (char ch : id) {
        const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                        (ch >= '0' && ch <= '9') || ch == '-' || ch == '_' || ch == '.';
        out.push_back(ok ? ch : '_');
    }
    if (out.empty()) out = "sample";
    return out;
}

} // namespace zsad
