#include "vslp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace vslp {

namespace {

void require_same_shape(const LabelMask& a, const LabelMask& b,
                        const char* who) {
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument(std::string(who) + ": shape mismatch");
  }
}

// 1-D squared distance transform of a sampled function (lower envelope of
// parabolas).
void edt_1d(std::span<const double> f, std::span<double> d,
            std::vector<std::size_t>& v, std::vector<double>& z) {
  const std::size_t n = f.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::size_t k = 0;
  std::size_t first = n;
  for (std::size_t q = 0; q < n; ++q) {
    if (std::isfinite(f[q])) {
      first = q;
      break;
    }
  }
  if (first == n) {
    std::fill(d.begin(), d.end(), inf);
    return;
  }
  v[0] = first;
  z[0] = -inf;
  z[1] = inf;
  for (std::size_t q = first + 1; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    const auto qd = static_cast<double>(q);
    double s;
    while (true) {
      const auto vk = static_cast<double>(v[k]);
      s = ((f[q] + qd * qd) - (f[v[k]] + vk * vk)) / (2.0 * qd - 2.0 * vk);
      if (s <= z[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    if (s <= z[k]) {
      // k == 0 and the new parabola dominates everywhere
      v[0] = q;
      z[1] = inf;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const auto qd = static_cast<double>(q);
    while (z[k + 1] < qd) ++k;
    const double dq = qd - static_cast<double>(v[k]);
    d[q] = dq * dq + f[v[k]];
  }
}

// Squared Euclidean distance from every pixel to the nearest set pixel.
std::vector<double> squared_distance_map(const LabelMask& sites) {
  const std::size_t h = sites.height;
  const std::size_t w = sites.width;
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    grid[i] = sites.labels[i] != 0 ? 0.0 : inf;
  }
  const std::size_t n = std::max(h, w);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<std::size_t> v(n);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) f[r] = grid[r * w + c];
    edt_1d({f.data(), h}, {d.data(), h}, v, z);
    for (std::size_t r = 0; r < h; ++r) grid[r * w + c] = d[r];
  }
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) f[c] = grid[r * w + c];
    edt_1d({f.data(), w}, {d.data(), w}, v, z);
    for (std::size_t c = 0; c < w; ++c) grid[r * w + c] = d[c];
  }
  return grid;
}

}  // namespace

OverlapScores dice_miou(const LabelMask& pred, const LabelMask& gt,
                        std::size_t classes) {
  require_same_shape(pred, gt, "dice_miou");
  if (pred.labels.size() != pred.height * pred.width ||
      gt.labels.size() != gt.height * gt.width) {
    throw std::invalid_argument("dice_miou: label buffer size mismatch");
  }
  std::size_t max_label = 0;
  for (auto l : pred.labels) max_label = std::max<std::size_t>(max_label, l);
  for (auto l : gt.labels) max_label = std::max<std::size_t>(max_label, l);
  if (classes == 0) classes = std::max<std::size_t>(max_label + 1, 2);
  if (max_label >= classes) {
    throw std::invalid_argument("dice_miou: label exceeds class count");
  }
  std::vector<std::size_t> inter(classes, 0), np(classes, 0), ng(classes, 0);
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    ++np[pred.labels[i]];
    ++ng[gt.labels[i]];
    if (pred.labels[i] == gt.labels[i]) ++inter[pred.labels[i]];
  }
  OverlapScores out;
  out.class_iou.assign(classes, std::numeric_limits<double>::quiet_NaN());
  double iou_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    const std::size_t uni = np[k] + ng[k] - inter[k];
    if (uni == 0) continue;
    out.class_iou[k] =
        static_cast<double>(inter[k]) / static_cast<double>(uni);
    iou_sum += out.class_iou[k];
    ++present;
  }
  out.miou = present > 0 ? iou_sum / static_cast<double>(present) : 1.0;

  auto dice_of = [&](std::size_t k) {
    const std::size_t denom = np[k] + ng[k];
    // Both empty: perfect agreement.
    return denom == 0 ? 1.0
                      : 2.0 * static_cast<double>(inter[k]) /
                            static_cast<double>(denom);
  };
  if (classes == 2) {
    out.dice = dice_of(1);
  } else {
    double sum = 0.0;
    for (std::size_t k = 1; k < classes; ++k) sum += dice_of(k);
    out.dice = sum / static_cast<double>(classes - 1);
  }
  return out;
}

LabelMask boundary(const LabelMask& mask) {
  LabelMask out(mask.height, mask.width, 0);
  const std::size_t h = mask.height;
  const std::size_t w = mask.width;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (mask.at(r, c) == 0) continue;
      const bool edge = r == 0 || c == 0 || r + 1 == h || c + 1 == w ||
                        mask.at(r - 1, c) == 0 || mask.at(r + 1, c) == 0 ||
                        mask.at(r, c - 1) == 0 || mask.at(r, c + 1) == 0;
      out.at(r, c) = edge ? 1 : 0;
    }
  }
  return out;
}

std::vector<double> directed_boundary_distances(const LabelMask& from,
                                                const LabelMask& to) {
  require_same_shape(from, to, "directed_boundary_distances");
  const LabelMask bf = boundary(from);
  const LabelMask bt = boundary(to);
  const std::vector<double> dist2 = squared_distance_map(bt);
  std::vector<double> out;
  for (std::size_t i = 0; i < bf.labels.size(); ++i) {
    if (bf.labels[i] != 0) out.push_back(std::sqrt(dist2[i]));
  }
  return out;
}

namespace {

double nearest_rank_95(std::vector<double> d) {
  std::sort(d.begin(), d.end());
  const auto n = static_cast<double>(d.size());
  auto rank = static_cast<std::size_t>(std::ceil(0.95 * n));
  rank = std::clamp<std::size_t>(rank, 1, d.size());
  return d[rank - 1];
}

}  // namespace

double hausdorff95(const LabelMask& pred, const LabelMask& gt) {
  require_same_shape(pred, gt, "hausdorff95");
  const auto any_fg = [](const LabelMask& m) {
    return std::any_of(m.labels.begin(), m.labels.end(),
                       [](std::uint8_t l) { return l != 0; });
  };
  if (!any_fg(pred) || !any_fg(gt)) {
    return std::numeric_limits<double>::infinity();
  }
  const double a = nearest_rank_95(directed_boundary_distances(pred, gt));
  const double b = nearest_rank_95(directed_boundary_distances(gt, pred));
  return std::max(a, b);
}

ProportionReport classification_report(std::span<const ProportionVector> pred,
                                       std::span<const ProportionVector> gt) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("classification_report: length mismatch");
  }
  if (pred.empty()) {
    throw std::invalid_argument("classification_report: empty input");
  }
  const std::size_t classes = gt[0].size();
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  ProportionReport out;
  std::size_t correct = 0;
  std::size_t entries = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != classes || gt[i].size() != classes) {
      throw std::invalid_argument("classification_report: size mismatch");
    }
    const std::size_t p = pred[i].argmax();
    const std::size_t g = gt[i].argmax();
    if (p == g) {
      ++correct;
      ++tp[p];
    } else {
      ++fp[p];
      ++fn[g];
    }
    for (std::size_t k = 0; k < classes; ++k) {
      const double d = pred[i][k] - gt[i][k];
      out.mae += std::abs(d);
      out.mse += d * d;
      ++entries;
    }
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  out.mae /= static_cast<double>(entries);
  out.mse /= static_cast<double>(entries);
  for (std::size_t k = 0; k < classes; ++k) {
    const double prec =
        tp[k] + fp[k] == 0 ? 0.0
                           : static_cast<double>(tp[k]) /
                                 static_cast<double>(tp[k] + fp[k]);
    const double rec =
        tp[k] + fn[k] == 0 ? 0.0
                           : static_cast<double>(tp[k]) /
                                 static_cast<double>(tp[k] + fn[k]);
    out.precision += prec;
    out.recall += rec;
    out.f1 += prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  }
  out.precision /= static_cast<double>(classes);
  out.recall /= static_cast<double>(classes);
  out.f1 /= static_cast<double>(classes);
  return out;
}

MeanStd mean_std(std::span<const double> values, std::size_t* count_infinite) {
  MeanStd out;
  std::size_t n = 0;
  std::size_t skipped = 0;
  for (double v : values) {
    if (!std::isfinite(v)) {
      ++skipped;
      continue;
    }
    out.mean += v;
    ++n;
  }
  if (count_infinite != nullptr) *count_infinite = skipped;
  if (n == 0) {
    out.mean = std::numeric_limits<double>::quiet_NaN();
    out.stddev = out.mean;
    return out;
  }
  out.mean /= static_cast<double>(n);
  for (double v : values) {
    if (std::isfinite(v)) out.stddev += (v - out.mean) * (v - out.mean);
  }
  out.stddev = std::sqrt(out.stddev / static_cast<double>(n));
  return out;
}

}  // namespace vslp
