#include "vslp/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "vslp/parallel.hpp"
#include "vslp/random.hpp"

namespace vslp {

Perturbation parse_perturbation(const std::string& name) {
  if (name == "none") return Perturbation::kNone;
  if (name == "additive") return Perturbation::kAdditive;
  if (name == "coarse") return Perturbation::kCoarse;
  throw std::invalid_argument("unknown perturbation '" + name + "'");
}

std::string perturbation_name(Perturbation p) {
  switch (p) {
    case Perturbation::kNone: return "none";
    case Perturbation::kAdditive: return "additive";
    case Perturbation::kCoarse: return "coarse";
  }
  return "none";
}

void SynthConfig::validate() const {
  if (size == 0 || size % 8 != 0) {
    throw std::invalid_argument("synth: size must be a positive multiple of 8");
  }
  if (classes < 2 || classes > 255) {
    throw std::invalid_argument("synth: classes must be in [2, 255]");
  }
  if (min_blobs > max_blobs) {
    throw std::invalid_argument("synth: empty blob count range");
  }
  if (!(min_radius > 0.0) || min_radius > max_radius) {
    throw std::invalid_argument("synth: empty blob radius range");
  }
  if (max_radius > static_cast<double>(size)) {
    throw std::invalid_argument("synth: blob radius exceeds image size");
  }
  if (!(texture_std >= 0.0) || !(classifier_noise >= 0.0) ||
      !(perturbation_delta >= 0.0)) {
    throw std::invalid_argument("synth: standard deviations must be >= 0");
  }
}

namespace {

// Sequential draws from a counter-based stream.
class Draws {
 public:
  explicit Draws(CounterRng rng) : rng_(rng) {}
  double uniform() { return rng_.uniform(next_++); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return rng_.normal(next_++); }
  std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
    const auto span = static_cast<double>(hi - lo + 1);
    return lo + std::min(hi - lo, static_cast<std::size_t>(uniform() * span));
  }

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

std::array<double, 3> base_color(std::size_t cls) {
  static constexpr std::array<std::array<double, 3>, 4> kColors = {{
      {0.88, 0.72, 0.82},
      {0.48, 0.26, 0.58},
      {0.70, 0.38, 0.48},
      {0.36, 0.44, 0.72},
  }};
  if (cls < kColors.size()) return kColors[cls];
  const double t = std::fmod(0.618034 * static_cast<double>(cls), 1.0);
  return {0.3 + 0.5 * t, 0.6 - 0.4 * t, 0.4 + 0.3 * t};
}

}  // namespace

std::vector<std::uint8_t> close3x3(const std::vector<std::uint8_t>& bits,
                                   std::size_t height, std::size_t width) {
  // A one-pixel margin makes this the closing on the unbounded plane.
  const std::size_t ph = height + 2;
  const std::size_t pw = width + 2;
  std::vector<std::uint8_t> padded(ph * pw, 0);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      padded[(r + 1) * pw + c + 1] = bits[r * width + c];
    }
  }
  auto morph = [&](const std::vector<std::uint8_t>& in, bool dilate) {
    std::vector<std::uint8_t> out(in.size());
    for (std::size_t r = 0; r < ph; ++r) {
      for (std::size_t c = 0; c < pw; ++c) {
        bool any = false;
        bool all = true;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const auto rr = static_cast<std::ptrdiff_t>(r) + dr;
            const auto cc = static_cast<std::ptrdiff_t>(c) + dc;
            const bool v = rr >= 0 && cc >= 0 &&
                           rr < static_cast<std::ptrdiff_t>(ph) &&
                           cc < static_cast<std::ptrdiff_t>(pw) &&
                           in[static_cast<std::size_t>(rr) * pw +
                              static_cast<std::size_t>(cc)] != 0;
            any = any || v;
            all = all && v;
          }
        }
        out[r * pw + c] = (dilate ? any : all) ? 1 : 0;
      }
    }
    return out;
  };
  const auto closed = morph(morph(padded, true), false);
  std::vector<std::uint8_t> out(height * width);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      out[r * width + c] = closed[(r + 1) * pw + c + 1];
    }
  }
  return out;
}

ProportionVector mask_proportions(const LabelMask& mask, std::size_t classes) {
  std::vector<double> counts(classes, 0.0);
  for (auto l : mask.labels) {
    if (l >= classes) {
      throw std::invalid_argument("mask_proportions: label out of range");
    }
    counts[l] += 1.0;
  }
  const double n = static_cast<double>(mask.labels.size());
  for (double& c : counts) c /= n;
  return ProportionVector(std::move(counts));
}

ProportionVector perturb_proportions(const ProportionVector& exact,
                                     Perturbation mode, double delta,
                                     std::uint64_t seed) {
  std::vector<double> v = exact.values();
  switch (mode) {
    case Perturbation::kNone:
      return exact;
    case Perturbation::kAdditive: {
      Draws draws(CounterRng(seed, 0x9e37));
      for (double& x : v) x += draws.uniform(-delta, delta);
      break;
    }
    case Perturbation::kCoarse:
      for (double& x : v) x = std::round(x * 10.0) / 10.0;
      break;
  }
  return project_simplex(v);
}

SynthItem generate_item(const SynthConfig& cfg, std::uint64_t item_seed) {
  cfg.validate();
  const std::size_t n = cfg.size;
  Draws draws(CounterRng(item_seed, 1));
  const std::size_t blobs = draws.index(cfg.min_blobs, cfg.max_blobs);

  std::vector<std::vector<std::uint8_t>> per_class(
      cfg.classes, std::vector<std::uint8_t>(n * n, 0));
  for (std::size_t b = 0; b < blobs; ++b) {
    const std::size_t cls =
        cfg.classes == 2 ? 1 : draws.index(1, cfg.classes - 1);
    // A blob is a small union of ellipses around a common centre.
    const double cy = draws.uniform(0.0, static_cast<double>(n));
    const double cx = draws.uniform(0.0, static_cast<double>(n));
    const std::size_t lobes = draws.index(1, 3);
    for (std::size_t e = 0; e < lobes; ++e) {
      const double ry = draws.uniform(cfg.min_radius, cfg.max_radius);
      const double rx = draws.uniform(cfg.min_radius, cfg.max_radius);
      const double theta = draws.uniform(0.0, std::numbers::pi);
      const double oy = e == 0 ? 0.0 : draws.uniform(-0.5, 0.5) * ry;
      const double ox = e == 0 ? 0.0 : draws.uniform(-0.5, 0.5) * rx;
      const double ct = std::cos(theta);
      const double st = std::sin(theta);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
          const double dy = static_cast<double>(r) + 0.5 - (cy + oy);
          const double dx = static_cast<double>(c) + 0.5 - (cx + ox);
          const double a = (ct * dx + st * dy) / rx;
          const double bq = (-st * dx + ct * dy) / ry;
          if (a * a + bq * bq <= 1.0) per_class[cls][r * n + c] = 1;
        }
      }
    }
  }

  SynthItem item;
  item.seed = item_seed;
  item.mask = LabelMask(n, n, 0);
  for (std::size_t k = 1; k < cfg.classes; ++k) {
    const auto closed = close3x3(per_class[k], n, n);
    for (std::size_t p = 0; p < n * n; ++p) {
      if (closed[p] != 0) item.mask.labels[p] = static_cast<std::uint8_t>(k);
    }
  }

  item.image = PixelField(n, n, 3);
  Draws texture(CounterRng(item_seed, 2));
  // A smooth stain gradient plus per-pixel grain.
  const double gy = texture.uniform(-0.05, 0.05);
  const double gx = texture.uniform(-0.05, 0.05);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const auto color = base_color(item.mask.at(r, c));
      const double shade =
          gy * (static_cast<double>(r) / static_cast<double>(n) - 0.5) +
          gx * (static_cast<double>(c) / static_cast<double>(n) - 0.5);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = color[ch] + shade + cfg.texture_std * texture.normal();
        item.image.at(r, c, ch) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  item.exact = mask_proportions(item.mask, cfg.classes);
  item.label = perturb_proportions(item.exact, cfg.perturbation,
                                   cfg.perturbation_delta, mix64(item_seed));
  return item;
}

std::vector<SynthItem> generate_dataset(const SynthConfig& cfg,
                                        std::size_t n) {
  cfg.validate();
  if (n == 0) throw std::invalid_argument("generate_dataset: n must be >= 1");
  std::vector<SynthItem> items(n);
  parallel_for(n, [&](std::size_t i) {
    items[i] = generate_item(cfg, mix64(cfg.seed ^ mix64(i + 1)));
  });
  return items;
}

PredictionStack simulate_tta(const LabelMask& mask, std::size_t classes,
                             const PatchGrid& grid, std::size_t rotations,
                             double noise_std, std::uint64_t seed) {
  if (rotations == 0) {
    throw std::invalid_argument("simulate_tta: need at least one rotation");
  }
  if (!(noise_std >= 0.0)) {
    throw std::invalid_argument("simulate_tta: noise std must be >= 0");
  }
  if (grid.image_height != mask.height || grid.image_width != mask.width) {
    throw std::invalid_argument("simulate_tta: grid does not match mask");
  }
  const PixelField hot = one_hot(mask, classes);
  const CounterRng base(seed, 3);
  PredictionStack stack;
  stack.classes = classes;
  stack.angles = tta_angles(rotations);
  stack.slices.resize(rotations);
  parallel_for(rotations, [&](std::size_t r) {
    const PixelField rotated = rotate_warp(hot, stack.angles[r], false);
    const CounterRng rot_rng = base.substream(r);
    std::vector<std::vector<double>> per_patch(grid.count());
    for (std::size_t j = 0; j < grid.count(); ++j) {
      const PatchOrigin o = grid.origins[j];
      std::vector<double> props(classes, 0.0);
      double count = 0.0;
      for (std::size_t y = o.row; y < o.row + grid.patch_height; ++y) {
        for (std::size_t x = o.col; x < o.col + grid.patch_width; ++x) {
          if (!rotated.valid(y, x)) continue;
          const auto px = rotated.pixel(y, x);
          for (std::size_t k = 0; k < classes; ++k) props[k] += px[k];
          count += 1.0;
        }
      }
      if (count == 0.0) continue;
      for (double& p : props) p /= count;
      if (noise_std > 0.0) {
        const CounterRng patch_rng = rot_rng.substream(j);
        for (std::size_t k = 0; k < classes; ++k) {
          const CounterRng entry = patch_rng.substream(k);
          double n = 0.0;
          for (std::uint64_t t = 0;; ++t) {
            n = entry.normal(t);
            if (std::abs(n) <= 2.0) break;
          }
          props[k] += noise_std * n;
        }
      }
      per_patch[j] = project_simplex(props).values();
    }
    const PixelField pred =
        broadcast_patches(grid, per_patch, classes, rotated);
    stack.slices[r] = rotate_warp(pred, stack.angles[r], true);
  });
  return stack;
}

}  // namespace vslp
