#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "vslp/field.hpp"
#include "vslp/posterior.hpp"
#include "vslp/stage1.hpp"

namespace vslp::tools {

namespace fs = std::filesystem;
using nlohmann::json;

/// A JSON-lines manifest. Entry paths are relative to `dir`.
struct Manifest {
  fs::path dir;
  std::vector<json> entries;

  fs::path resolve(const json& entry, const std::string& key) const;
};

Manifest read_manifest(const fs::path& file);
void write_manifest(const fs::path& file, const std::vector<json>& entries);

void write_json(const fs::path& file, const json& doc);
json read_json(const fs::path& file);

/// Masks are single-channel fields holding the class id per pixel.
void save_mask(const fs::path& file, const LabelMask& mask);
/// Single-channel fields are read as class ids; wider fields as one-hot or
/// scores (argmax, invalid pixels map to class 0).
LabelMask load_labels(const fs::path& file);

/// Stack payload plus `<file>.json` sidecar with rotations, classes, angles.
void save_stack(const fs::path& file, const PredictionStack& stack);
PredictionStack load_stack(const fs::path& file);

/// Histogram payload plus sidecar with bins, classes, centers.
void save_histogram(const fs::path& file, const HistogramPosterior& hist);
HistogramPosterior load_histogram(const fs::path& file);

/// [mean | stddev] payload plus sidecar with classes.
void save_gaussian(const fs::path& file, const GaussianPosterior& g);

fs::path sidecar_path(const fs::path& file);

std::string item_id(std::size_t index);

std::vector<double> to_vector(const json& array);

}  // namespace vslp::tools
