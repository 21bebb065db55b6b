#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "vslp/field.hpp"

namespace vslp {

struct OverlapScores {
  double dice = 0.0;
  double miou = 0.0;
  /// IoU per class id; classes absent from both masks hold NaN.
  std::vector<double> class_iou;
};

/// Dice is the foreground score for binary masks and the macro average over
/// foreground classes otherwise. mIoU averages IoU over the classes present in
/// pred or gt. `classes` of 0 means max label + 1 over both masks.
OverlapScores dice_miou(const LabelMask& pred, const LabelMask& gt,
                        std::size_t classes = 0);

/// Symmetric 95th-percentile boundary distance (nearest rank) between the
/// foregrounds (label != 0). Boundary pixels have a 4-neighbour outside the
/// foreground or outside the image. +infinity when either foreground is empty.
double hausdorff95(const LabelMask& pred, const LabelMask& gt);

/// Directed distances from every boundary pixel of `from` to the nearest
/// boundary pixel of `to`, unsorted.
std::vector<double> directed_boundary_distances(const LabelMask& from,
                                                const LabelMask& to);

/// Boundary pixels of the foreground as a mask of 0/1.
LabelMask boundary(const LabelMask& mask);

struct ProportionReport {
  double accuracy = 0.0;
  double precision = 0.0;  // macro over classes
  double recall = 0.0;
  double f1 = 0.0;
  double mae = 0.0;
  double mse = 0.0;
};

/// Predominant-class scores (argmax, ties to the lowest index) and
/// per-entry proportion errors.
ProportionReport classification_report(std::span<const ProportionVector> pred,
                                       std::span<const ProportionVector> gt);

struct MetricReport {
  double dice = 0.0;
  double miou = 0.0;
  double hd95 = 0.0;
  std::optional<ProportionReport> proportions;
};

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

/// Mean and standard deviation over finite values; `count_infinite` reports
/// how many entries were skipped.
MeanStd mean_std(std::span<const double> values,
                 std::size_t* count_infinite = nullptr);

}  // namespace vslp
