#include "dataset_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "vslp/field_io.hpp"

namespace vslp::tools {

fs::path Manifest::resolve(const json& entry, const std::string& key) const {
  if (!entry.contains(key) || !entry.at(key).is_string()) {
    throw std::runtime_error("manifest entry lacks '" + key + "'");
  }
  return dir / entry.at(key).get<std::string>();
}

Manifest read_manifest(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open manifest " + file.string());
  Manifest m;
  m.dir = file.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.entries.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw std::runtime_error(file.string() + ":" + std::to_string(lineno) +
                               ": " + e.what());
    }
  }
  if (m.entries.empty()) {
    throw std::runtime_error("manifest " + file.string() + " is empty");
  }
  return m;
}

void write_manifest(const fs::path& file, const std::vector<json>& entries) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  for (const auto& e : entries) out << e.dump() << '\n';
}

void write_json(const fs::path& file, const json& doc) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << doc.dump(2) << '\n';
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(file.string() + ": " + e.what());
  }
}

fs::path sidecar_path(const fs::path& file) {
  fs::path p = file;
  p += ".json";
  return p;
}

void save_mask(const fs::path& file, const LabelMask& mask) {
  PixelField f(mask.height, mask.width, 1);
  for (std::size_t p = 0; p < mask.labels.size(); ++p) {
    f.data()[p] = mask.labels[p];
  }
  save_field(file, f);
}

LabelMask load_labels(const fs::path& file) {
  const PixelField f = load_field(file);
  if (f.channels() == 1) {
    LabelMask m(f.height(), f.width());
    for (std::size_t p = 0; p < f.pixels(); ++p) {
      const double v = f.data()[p];
      if (!(v >= 0.0) || v > 255.0 || v != std::floor(v)) {
        throw std::runtime_error(file.string() + ": not a label mask");
      }
      m.labels[p] = static_cast<std::uint8_t>(v);
    }
    return m;
  }
  LabelMask m = argmax_labels(f);
  for (std::size_t p = 0; p < f.pixels(); ++p) {
    if (f.validity()[p] == 0) m.labels[p] = 0;
  }
  return m;
}

void save_stack(const fs::path& file, const PredictionStack& stack) {
  save_field(file, stack.pack());
  write_json(sidecar_path(file), {{"rotations", stack.rotations()},
                                  {"classes", stack.classes},
                                  {"angles", stack.angles}});
}

PredictionStack load_stack(const fs::path& file) {
  const json side = read_json(sidecar_path(file));
  return PredictionStack::unpack(load_field(file),
                                 side.at("classes").get<std::size_t>(),
                                 side.at("angles").get<std::vector<double>>());
}

void save_histogram(const fs::path& file, const HistogramPosterior& hist) {
  save_field(file, hist.weights);
  write_json(sidecar_path(file), {{"bins", hist.bins},
                                  {"classes", hist.classes},
                                  {"centers", hist.centers},
                                  {"empty_pixels", hist.empty_pixels}});
}

HistogramPosterior load_histogram(const fs::path& file) {
  const json side = read_json(sidecar_path(file));
  HistogramPosterior h;
  h.bins = side.at("bins").get<std::size_t>();
  h.classes = side.at("classes").get<std::size_t>();
  h.centers = bin_centers(h.bins);
  h.empty_pixels = side.value("empty_pixels", std::size_t{0});
  h.weights = load_field(file);
  if (h.weights.channels() != h.bins * h.classes) {
    throw std::runtime_error(file.string() +
                             ": channel count does not match sidecar");
  }
  return h;
}

void save_gaussian(const fs::path& file, const GaussianPosterior& g) {
  const PixelField* parts[] = {&g.mean, &g.stddev};
  save_field(file, concat_channels(parts));
  write_json(sidecar_path(file),
             {{"classes", g.classes()}, {"layout", "mean,stddev"}});
}

std::string item_id(std::size_t index) {
  std::ostringstream s;
  s << "item_";
  s.width(4);
  s.fill('0');
  s << index;
  return s.str();
}

std::vector<double> to_vector(const json& array) {
  return array.get<std::vector<double>>();
}

}  // namespace vslp::tools
