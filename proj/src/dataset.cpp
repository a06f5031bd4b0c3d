#include "zsad/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "zsad/errors.hpp"
#include "zsad/image_io.hpp"

namespace zsad {

AnnotationLevel parse_annotation_level(const std::string& name) {
    if (name == "image_only") return AnnotationLevel::image_only;
    if (name == "pixel_only") return AnnotationLevel::pixel_only;
    if (name == "both") return AnnotationLevel::both;
    throw FormatError("unknown annotation_level '" + name +
                      "' (expected image_only, pixel_only or both)");
}

std::string annotation_level_name(AnnotationLevel level) {
    switch (level) {
        case AnnotationLevel::image_only: return "image_only";
        case AnnotationLevel::pixel_only: return "pixel_only";
        case AnnotationLevel::both: return "both";
    }
    return "both";
}

std::filesystem::path DatasetManifest::resolve(const std::string& rel) const {
    std::filesystem::path p(rel);
    if (p.is_absolute()) return p;
    return base_dir / p;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw AssetError("manifest not found: " + path.string());

    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest is not valid JSON: " + path.string() + ": " + e.what());
    }

    DatasetManifest m;
    m.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");

    std::vector<std::string> problems;
    auto complain = [&problems](const std::string& msg) { problems.push_back(msg); };

    m.manifest_version = j.value("manifest_version", -1);
    if (m.manifest_version != 1) {
        throw FormatError("manifest '" + path.string() + "': unsupported manifest_version " +
                          std::to_string(m.manifest_version));
    }
    m.name = j.value("name", "");
    if (m.name.empty()) complain("manifest has no name");
    m.domain_tag = j.value("domain_tag", "industrial");
    if (m.domain_tag != "industrial" && m.domain_tag != "medical") {
        complain("domain_tag '" + m.domain_tag + "' is not industrial or medical");
    }
    m.notes = j.value("notes", "");

    try {
        m.annotation_level = parse_annotation_level(j.value("annotation_level", ""));
    } catch (const FormatError& e) {
        complain(e.what());
    }
    if (j.contains("categories")) {
        for (const auto& c : j["categories"]) m.categories.push_back(c.get<std::string>());
    }
    if (m.categories.empty()) complain("manifest lists no categories");
    std::set<std::string> known(m.categories.begin(), m.categories.end());

    const bool needs_masks = m.annotation_level != AnnotationLevel::image_only;
    if (!j.contains("samples") || !j["samples"].is_array() || j["samples"].empty()) {
        complain("manifest lists no samples");
    } else {
        std::set<std::string> seen_ids;
        for (const auto& s : j["samples"]) {
            ManifestSample entry;
            entry.id = s.value("id", "");
            entry.category = s.value("category", "");
            entry.image_path = s.value("image_path", "");
            entry.label = s.value("label", -1);
            if (s.contains("mask_path")) entry.mask_path = s["mask_path"].get<std::string>();

            const std::string who = entry.id.empty() ? "<missing id>" : entry.id;
            if (entry.id.empty()) complain("sample with empty id");
            if (!seen_ids.insert(entry.id).second) complain("duplicate sample id '" + who + "'");
            if (entry.label != 0 && entry.label != 1) {
                complain("sample '" + who + "': label must be 0 or 1");
            }
            if (entry.category.empty() || !known.count(entry.category)) {
                complain("sample '" + who + "': category '" + entry.category +
                         "' not in the categories list");
            }
            if (entry.image_path.empty()) {
                complain("sample '" + who + "': missing image_path");
            } else if (!std::filesystem::exists(m.resolve(entry.image_path))) {
                complain("sample '" + who + "': image file does not exist: " + entry.image_path);
            }
            if (entry.label == 1 && needs_masks && !entry.mask_path.has_value()) {
                complain("sample '" + who + "': anomalous sample requires mask_path under "
                         "annotation_level " + annotation_level_name(m.annotation_level));
            }
            if (entry.mask_path.has_value() &&
                !std::filesystem::exists(m.resolve(*entry.mask_path))) {
                complain("sample '" + who + "': mask file does not exist: " + *entry.mask_path);
            }
            m.samples.push_back(std::move(entry));
        }
    }

    if (!problems.empty()) {
        std::ostringstream msg;
        msg << "manifest validation failed for " << path.string() << " (" << problems.size()
            << " problem" << (problems.size() == 1 ? "" : "s") << "):";
        for (const auto& p : problems) msg << "\n  - " << p;
        throw DataError(msg.str());
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["manifest_version"] = 1;
    j["name"] = manifest.name;
    j["domain_tag"] = manifest.domain_tag;
    j["annotation_level"] = annotation_level_name(manifest.annotation_level);
    j["categories"] = manifest.categories;
    if (!manifest.notes.empty()) j["notes"] = manifest.notes;
    nlohmann::ordered_json samples = nlohmann::ordered_json::array();
    for (const auto& s : manifest.samples) {
        nlohmann::ordered_json e;
        e["id"] = s.id;
        e["category"] = s.category;
        e["image_path"] = s.image_path;
        e["label"] = s.label;
        if (s.mask_path.has_value()) e["mask_path"] = *s.mask_path;
        samples.push_back(e);
    }
    j["samples"] = samples;

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write manifest: " + path.string());
    out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------

namespace {

// align_corners=false bilinear resize of an interleaved 8-bit raster into a
// [0,1] planar tensor.
Image resize_bilinear_to_unit(const RawImage& src, std::size_t out_h, std::size_t out_w) {
    Image out(src.channels, out_h, out_w);
    const double sy = static_cast<double>(src.height) / static_cast<double>(out_h);
    const double sx = static_cast<double>(src.width) / static_cast<double>(out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(src.height - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(src.width - 1));
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - static_cast<double>(x0);
            for (std::size_t c = 0; c < src.channels; ++c) {
                const double v =
                    (1.0 - wy) * ((1.0 - wx) * src.at(y0, x0, c) + wx * src.at(y0, x1, c)) +
                    wy * ((1.0 - wx) * src.at(y1, x0, c) + wx * src.at(y1, x1, c));
                out.at(c, y, x) = v / 255.0;
            }
        }
    }
    return out;
}

Mask resize_mask_nearest(const RawImage& src, std::size_t out_h, std::size_t out_w) {
    Mask out(out_h, out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        const std::size_t sy = std::min(
            static_cast<std::size_t>((static_cast<double>(y) + 0.5) *
                                     static_cast<double>(src.height) / static_cast<double>(out_h)),
            src.height - 1);
        for (std::size_t x = 0; x < out_w; ++x) {
            const std::size_t sx = std::min(
                static_cast<std::size_t>((static_cast<double>(x) + 0.5) *
                                         static_cast<double>(src.width) /
                                         static_cast<double>(out_w)),
                src.width - 1);
            // First channel decides; binarize at 0.5 of full scale.
            out.at(y, x) = src.at(sy, sx, 0) >= 128 ? 1 : 0;
        }
    }
    return out;
}

} // namespace

Preprocessor::Preprocessor(BackboneConfig config) : config_(std::move(config)) {
    config_.validate();
}

std::string Preprocessor::fingerprint() const {
    std::ostringstream desc;
    desc << "resize=bilinear/ac0:" << config_.input_resolution
         << ";mask=nearest,binarize@0.5;scale=1/255;norm=";
    for (std::size_t i = 0; i < config_.normalization_mean.size(); ++i) {
        desc << config_.normalization_mean[i] << "/" << config_.normalization_std[i] << ",";
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(desc.str())));
    return buf;
}

Sample Preprocessor::load(const ManifestSample& entry, const DatasetManifest& manifest) const {
    Sample sample;
    sample.id = entry.id;
    sample.category = entry.category;
    sample.label = entry.label;

    RawImage raw;
    try {
        raw = read_image(manifest.resolve(entry.image_path));
    } catch (const Error& e) {
        throw DataError("sample '" + entry.id + "': " + e.what());
    }
    const auto res = static_cast<std::size_t>(config_.input_resolution);

    // Expand grayscale to the configured channel count so every sample meets
    // the encoder's input contract.
    const auto channels = static_cast<std::size_t>(config_.channels());
    Image unit = resize_bilinear_to_unit(raw, res, res);
    sample.image = Image(channels, res, res);
    for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t sc = std::min(c, unit.channels - 1);
        for (std::size_t y = 0; y < res; ++y) {
            for (std::size_t x = 0; x < res; ++x) {
                sample.image.at(c, y, x) = (unit.at(sc, y, x) - config_.normalization_mean[c]) /
                                           config_.normalization_std[c];
            }
        }
    }

    if (entry.mask_path.has_value()) {
        RawImage mask_raw;
        try {
            mask_raw = read_image(manifest.resolve(*entry.mask_path));
        } catch (const Error& e) {
            throw DataError("sample '" + entry.id + "' mask: " + e.what());
        }
        sample.mask = resize_mask_nearest(mask_raw, res, res);
    } else if (entry.label == 0 && manifest.annotation_level != AnnotationLevel::image_only) {
        // A normal image's ground truth is the empty mask.
        sample.mask = Mask(res, res, 0);
    }
    return sample;
}

std::vector<Sample> load_samples(const DatasetManifest& manifest, const Preprocessor& pre) {
    std::vector<Sample> out;
    out.reserve(manifest.samples.size());
    for (const auto& entry : manifest.samples) out.push_back(pre.load(entry, manifest));
    return out;
}

// ---------------------------------------------------------------------------

namespace {

RawImage quantize_image(const Image& img) {
    RawImage raw;
    raw.width = img.width;
    raw.height = img.height;
    raw.channels = img.channels;
    raw.pixels.resize(img.data.size());
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            for (std::size_t c = 0; c < img.channels; ++c) {
                const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
                raw.pixels[(y * img.width + x) * img.channels + c] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    return raw;
}

} // namespace

DatasetManifest generate_synthetic_dataset(const SynthConfig& config,
                                           const std::filesystem::path& out_dir) {
    if (config.n_normal < 1 || config.n_anomalous < 1) {
        throw ParamError("generate_synthetic_dataset: sample counts must be >= 1");
    }
    if (config.image_size < 16) {
        throw ParamError("generate_synthetic_dataset: image_size must be >= 16");
    }
    std::filesystem::create_directories(out_dir / "images");
    std::filesystem::create_directories(out_dir / "masks");

    const auto size = static_cast<std::size_t>(config.image_size);
    DatasetManifest manifest;
    manifest.name = config.name;
    manifest.domain_tag = "industrial";
    manifest.annotation_level = AnnotationLevel::both;
    manifest.categories = {config.category};
    manifest.notes = "synthetic textured backgrounds with bright rectangular defects";

    const int total = config.n_normal + config.n_anomalous;
    for (int i = 0; i < total; ++i) {
        const bool anomalous = i >= config.n_normal;
        Rng rng(derive_seed(config.seed, "synthetic_sample", static_cast<std::uint64_t>(i)));

        // Low-frequency textured background with mild per-pixel noise. The
        // spread stays well below the rectangle brightness so defective
        // patches are linearly separable from any background texture.
        const double base = rng.uniform(0.35, 0.45);
        const double fx1 = rng.uniform(1.0, 4.0), fy1 = rng.uniform(1.0, 4.0);
        const double fx2 = rng.uniform(4.0, 9.0), fy2 = rng.uniform(4.0, 9.0);
        const double ph1 = rng.uniform(0.0, 6.28318530717958647692);
        const double ph2 = rng.uniform(0.0, 6.28318530717958647692);
        Vec tint(3);
        for (double& t : tint) t = rng.uniform(0.95, 1.05);

        Image img(3, size, size);
        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
                const double u = static_cast<double>(x) / static_cast<double>(size);
                const double v = static_cast<double>(y) / static_cast<double>(size);
                const double texture =
                    0.03 * std::sin(6.28318530717958647692 * (fx1 * u + fy1 * v) + ph1) +
                    0.02 * std::sin(6.28318530717958647692 * (fx2 * u - fy2 * v) + ph2);
                const double noise = rng.uniform(-0.015, 0.015);
                const double lum = base + texture + noise;
                for (std::size_t c = 0; c < 3; ++c) {
                    img.at(c, y, x) = std::clamp(lum * tint[c], 0.0, 1.0);
                }
            }
        }

        Mask mask(size, size, 0);
        if (anomalous) {
            const int n_rects = 1 + static_cast<int>(rng.index(3));
            for (int r = 0; r < n_rects; ++r) {
                const auto w = static_cast<std::size_t>(
                    rng.uniform(static_cast<double>(size) / 8.0, static_cast<double>(size) / 3.0));
                const auto h = static_cast<std::size_t>(
                    rng.uniform(static_cast<double>(size) / 8.0, static_cast<double>(size) / 3.0));
                const std::size_t x0 = rng.index(size - w);
                const std::size_t y0 = rng.index(size - h);
                const double delta = rng.uniform(0.40, 0.55);
                for (std::size_t y = y0; y < y0 + h; ++y) {
                    for (std::size_t x = x0; x < x0 + w; ++x) {
                        for (std::size_t c = 0; c < 3; ++c) {
                            img.at(c, y, x) = std::clamp(img.at(c, y, x) + delta, 0.0, 1.0);
                        }
                        mask.at(y, x) = 1;
                    }
                }
            }
        }

        char id[32];
        std::snprintf(id, sizeof(id), "%s_%03d", anomalous ? "anom" : "good", i);
        const std::string image_rel = std::string("images/") + id + ".ppm";
        const std::string mask_rel = std::string("masks/") + id + ".pgm";
        write_ppm(out_dir / image_rel, quantize_image(img));

        RawImage mask_raw;
        mask_raw.width = size;
        mask_raw.height = size;
        mask_raw.channels = 1;
        mask_raw.pixels.resize(size * size);
        for (std::size_t k = 0; k < mask.data.size(); ++k) {
            mask_raw.pixels[k] = mask.data[k] ? 255 : 0;
        }
        write_ppm(out_dir / mask_rel, mask_raw);

        ManifestSample entry;
        entry.id = id;
        entry.category = config.category;
        entry.image_path = image_rel;
        entry.label = anomalous ? 1 : 0;
        entry.mask_path = mask_rel;
        manifest.samples.push_back(std::move(entry));
    }

    save_manifest(manifest, out_dir / "manifest.json");
    manifest.base_dir = out_dir;
    return manifest;
}

// ---------------------------------------------------------------------------

namespace {

bool is_image_file(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return ext == ".png" || ext == ".ppm" || ext == ".pgm";
}

std::vector<std::filesystem::path> sorted_files(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    if (!std::filesystem::exists(dir)) return files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

} // namespace

DatasetManifest convert_mvtec_layout(const std::filesystem::path& root, const std::string& name,
                                     const std::string& split) {
    if (!std::filesystem::is_directory(root)) {
        throw AssetError("convert_mvtec_layout: directory not found: " + root.string());
    }
    if (split != "test" && split != "train" && split != "all") {
        throw ParamError("convert_mvtec_layout: split must be test, train or all");
    }

    DatasetManifest manifest;
    manifest.name = name;
    manifest.domain_tag = "industrial";
    manifest.annotation_level = AnnotationLevel::both;
    manifest.notes =
        "converted from an MVTec-style tree (<category>/{train,test}/<defect>/*, masks under "
        "<category>/ground_truth/<defect>/<stem>_mask.*); split=" + split;

    std::vector<std::filesystem::path> categories;
    for (const auto& e : std::filesystem::directory_iterator(root)) {
        if (e.is_directory()) categories.push_back(e.path());
    }
    std::sort(categories.begin(), categories.end());

    for (const auto& cat_dir : categories) {
        const std::string category = cat_dir.filename().string();
        bool any = false;
        for (const char* phase : {"train", "test"}) {
            if (split != "all" && split != phase) continue;
            const auto phase_dir = cat_dir / phase;
            if (!std::filesystem::is_directory(phase_dir)) continue;
            std::vector<std::filesystem::path> defect_dirs;
            for (const auto& d : std::filesystem::directory_iterator(phase_dir)) {
                if (d.is_directory()) defect_dirs.push_back(d.path());
            }
            std::sort(defect_dirs.begin(), defect_dirs.end());
            for (const auto& defect_dir : defect_dirs) {
                const std::string defect = defect_dir.filename().string();
                const bool anomalous = defect != "good";
                for (const auto& file : sorted_files(defect_dir)) {
                    ManifestSample entry;
                    entry.category = category;
                    entry.label = anomalous ? 1 : 0;
                    entry.id = category + "/" + phase + "/" + defect + "/" +
                               file.stem().string();
                    entry.image_path =
                        std::filesystem::relative(file, root).generic_string();
                    if (anomalous) {
                        const auto gt_dir = cat_dir / "ground_truth" / defect;
                        // MVTec convention: <stem>_mask.<ext>; accept <stem>.<ext> too.
                        std::filesystem::path mask;
                        for (const auto& candidate : sorted_files(gt_dir)) {
                            const auto stem = candidate.stem().string();
                            if (stem == file.stem().string() + "_mask" ||
                                stem == file.stem().string()) {
                                mask = candidate;
                                break;
                            }
                        }
                        if (mask.empty()) {
                            throw DataError("convert_mvtec_layout: no ground-truth mask for " +
                                            entry.id);
                        }
                        entry.mask_path =
                            std::filesystem::relative(mask, root).generic_string();
                    }
                    manifest.samples.push_back(std::move(entry));
                    any = true;
                }
            }
        }
        if (any) manifest.categories.push_back(category);
    }
    if (manifest.samples.empty()) {
        throw DataError("convert_mvtec_layout: no samples found under " + root.string());
    }
    manifest.base_dir = root;
    return manifest;
}

DatasetManifest convert_flat_layout(const std::filesystem::path& images_dir,
                                    const std::optional<std::filesystem::path>& masks_dir,
                                    const std::string& name, const std::string& category,
                                    const std::string& domain_tag) {
    if (!std::filesystem::is_directory(images_dir)) {
        throw AssetError("convert_flat_layout: directory not found: " + images_dir.string());
    }
    DatasetManifest manifest;
    manifest.name = name;
    manifest.domain_tag = domain_tag;
    manifest.categories = {category};
    manifest.annotation_level =
        masks_dir.has_value() ? AnnotationLevel::pixel_only : AnnotationLevel::image_only;
    manifest.notes = "converted from a flat layout; label = 1 when a mask with the same stem "
                     "exists, 0 otherwise";

    const auto base = images_dir.parent_path().empty() ? std::filesystem::path(".")
                                                       : images_dir.parent_path();
    for (const auto& file : sorted_files(images_dir)) {
        ManifestSample entry;
        entry.category = category;
        entry.id = file.stem().string();
        entry.image_path = std::filesystem::relative(file, base).generic_string();
        entry.label = 0;
        if (masks_dir.has_value()) {
            for (const auto& mask : sorted_files(*masks_dir)) {
                const auto stem = mask.stem().string();
                if (stem == file.stem().string() ||
                    stem == file.stem().string() + "_segmentation" ||
                    stem == file.stem().string() + "_mask") {
                    entry.label = 1;
                    entry.mask_path = std::filesystem::relative(mask, base).generic_string();
                    break;
                }
            }
        }
        manifest.samples.push_back(std::move(entry));
    }
    if (manifest.samples.empty()) {
        throw DataError("convert_flat_layout: no images found under " + images_dir.string());
    }
    manifest.base_dir = base;
    return manifest;
}

} // namespace zsad
