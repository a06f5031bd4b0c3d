#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "zsad/common.hpp"
#include "zsad/scoring.hpp"

namespace zsad {

// Writes the map as an 8-bit viridis-style PNG. Values are clamped to [0,1].
// When `base` is given the colormap is alpha-blended over the (denormalized)
// image.
void export_heatmap_png(const AnomalyMap& map, const std::filesystem::path& path,
                        const Image* base = nullptr, double overlay_alpha = 0.5);

// Raw float32 companion file ("ZSMP" container) with the map shape and stage
// in the header.
void export_heatmap_raw(const AnomalyMap& map, const std::filesystem::path& path);

// Reads back a raw map file (used by tests and downstream tools).
AnomalyMap load_heatmap_raw(const std::filesystem::path& path);

// Sample ids may contain path separators; this maps them to safe filenames.
std::string sanitize_sample_id(const std::string& id);

} // namespace zsad
