#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "zsad/backbone.hpp"
#include "zsad/common.hpp"

namespace zsad {

enum class AnnotationLevel : std::uint8_t { image_only, pixel_only, both };

AnnotationLevel parse_annotation_level(const std::string& name);
std::string annotation_level_name(AnnotationLevel level);

struct ManifestSample {
    std::string id;
    std::string category;
    std::string image_path;  // relative to the manifest location or absolute
    int label = 0;
    std::optional<std::string> mask_path;
};

struct DatasetManifest {
    int manifest_version = 1;
    std::string name;
    std::string domain_tag = "industrial";  // {industrial, medical}
    std::vector<std::string> categories;
    AnnotationLevel annotation_level = AnnotationLevel::both;
    std::vector<ManifestSample> samples;
    std::string notes;  // converters document their layout assumptions here
    std::filesystem::path base_dir;  // directory the manifest was loaded from

    std::filesystem::path resolve(const std::string& rel) const;
};

// Parses and validates a manifest. Every violation is collected and reported
// in one DataError (with sample ids), not first-failure.
DatasetManifest load_manifest(const std::filesystem::path& path);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// A loaded, preprocessed sample. Anomalous samples carry their ground-truth
// mask when the manifest provides one; normal samples under pixel-annotated
// manifests get an implicit all-zero mask.
struct Sample {
    std::string id;
    std::string category;
    int label = 0;
    Image image;               // C x H x W, resized and channel-normalized
    std::optional<Mask> mask;  // H x W at the preprocessed resolution
};

// Deterministic preprocessing pipeline shared byte-for-byte between training
// and evaluation: bilinear resize to input_resolution, scale to [0,1],
// channel normalization; masks resize nearest-neighbor and binarize at 0.5.
class Preprocessor {
public:
    explicit Preprocessor(BackboneConfig config);

    Sample load(const ManifestSample& entry, const DatasetManifest& manifest) const;

    // Stable hash of every knob that affects the output tensor.
    std::string fingerprint() const;

    const BackboneConfig& config() const { return config_; }

private:
    BackboneConfig config_;
};

std::vector<Sample> load_samples(const DatasetManifest& manifest, const Preprocessor& pre);

// Synthetic desk-scale dataset: textured backgrounds, anomalous images get
// 1..3 bright axis-aligned rectangles with exact masks. Fully deterministic
// under seed; anomalous patches are linearly separable from background under
// the mock encoder.
struct SynthConfig {
    std::string name = "synthetic";
    int n_normal = 40;
    int n_anomalous = 40;
    int image_size = 128;
    std::uint64_t seed = 111;
    std::string category = "object";
};

// Writes images, masks and manifest.json under out_dir; returns the manifest.
DatasetManifest generate_synthetic_dataset(const SynthConfig& config,
                                           const std::filesystem::path& out_dir);

// Directory converters; both document their layout assumption in the
// manifest's notes field.
DatasetManifest convert_mvtec_layout(const std::filesystem::path& root, const std::string& name,
                                     const std::string& split /* "test", "train" or "all" */);
DatasetManifest convert_flat_layout(const std::filesystem::path& images_dir,
                                    const std::optional<std::filesystem::path>& masks_dir,
                                    const std::string& name, const std::string& category,
                                    const std::string& domain_tag);

} // namespace zsad
