#include "vslp/stage1.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vslp/parallel.hpp"

namespace vslp {

PixelField PredictionStack::pack() const {
  const std::size_t n = rotations();
  if (n == 0) throw std::invalid_argument("PredictionStack::pack: empty");
  const std::size_t h = height();
  const std::size_t w = width();
  PixelField out(h, w, n * classes, kInvalidSample);
  out.validity().assign(h * w, 0);
  for (std::size_t r = 0; r < n; ++r) {
    const PixelField& s = slices[r];
    for (std::size_t p = 0; p < h * w; ++p) {
      if (s.validity()[p] == 0) continue;
      out.validity()[p] = 1;
      std::copy_n(s.data().data() + p * classes, classes,
                  out.data().data() + p * n * classes + r * classes);
    }
  }
  return out;
}

PredictionStack PredictionStack::unpack(const PixelField& packed,
                                        std::size_t classes,
                                        std::vector<double> angles) {
  if (classes == 0 || packed.channels() % classes != 0 ||
      packed.channels() / classes != angles.size()) {
    throw std::invalid_argument("PredictionStack::unpack: channel layout");
  }
  const std::size_t n = angles.size();
  PredictionStack stack;
  stack.classes = classes;
  stack.angles = std::move(angles);
  for (std::size_t r = 0; r < n; ++r) {
    PixelField s(packed.height(), packed.width(), classes);
    for (std::size_t p = 0; p < packed.pixels(); ++p) {
      const double* src = packed.data().data() + p * n * classes + r * classes;
      const bool ok = packed.validity()[p] != 0 && src[0] >= 0.0;
      s.validity()[p] = ok ? 1 : 0;
      if (ok) std::copy_n(src, classes, s.data().data() + p * classes);
    }
    stack.slices.push_back(std::move(s));
  }
  return stack;
}

std::vector<double> tta_angles(std::size_t rotations) {
  std::vector<double> angles(rotations);
  for (std::size_t r = 0; r < rotations; ++r) {
    angles[r] = 360.0 * static_cast<double>(r) /
                static_cast<double>(rotations);
  }
  return angles;
}

std::vector<double> tissue_weights(const PixelField& image,
                                   const PatchGrid& grid) {
  std::vector<double> weights(grid.count(), 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < grid.count(); ++j) {
    const PatchOrigin o = grid.origins[j];
    std::size_t n = 0;
    for (std::size_t r = 0; r < grid.patch_height; ++r) {
      for (std::size_t c = 0; c < grid.patch_width; ++c) {
        if (image.valid(o.row + r, o.col + c)) ++n;
      }
    }
    weights[j] = static_cast<double>(n);
    total += weights[j];
  }
  if (total <= 0.0) {
    throw std::invalid_argument("tissue_weights: no tissue in any patch");
  }
  for (double& w : weights) w /= total;
  return weights;
}

nn::Network make_proportion_classifier(std::size_t in_channels,
                                       std::size_t classes) {
  using nn::LayerSpec;
  return nn::Network({
      LayerSpec::conv(3, in_channels, 8),
      LayerSpec::leaky_relu(8),
      LayerSpec::conv(3, 8, 16),
      LayerSpec::leaky_relu(16),
      LayerSpec::global_mean(16),
      LayerSpec::conv(1, 16, classes),
      LayerSpec::softmax(classes),
  });
}

namespace {

void check_item(const Stage1Item& item, std::size_t classes) {
  if (item.label.size() != classes) {
    throw std::invalid_argument("stage1: label size != classifier classes");
  }
  if (item.weights.size() != item.grid.count()) {
    throw std::invalid_argument("stage1: weight count != patch count");
  }
}

// Weighted patch average and, optionally, its gradient w.r.t. params.
double item_loss(const nn::Network& net, const nn::NetworkParams& params,
                 const Stage1Item& item, double scale,
                 nn::NetworkParams* grads) {
  const std::size_t classes = net.out_channels();
  check_item(item, classes);
  std::vector<double> aggregate(classes, 0.0);
  std::vector<nn::Tape> tapes;
  for (std::size_t j = 0; j < item.grid.count(); ++j) {
    if (item.weights[j] == 0.0) continue;
    PixelField patch = extract_patch(item.image, item.grid, j);
    if (grads != nullptr) {
      auto [out, tape] = net.forward_with_tape(params, patch);
      for (std::size_t k = 0; k < classes; ++k) {
        aggregate[k] += item.weights[j] * out.data()[k];
      }
      tapes.push_back(std::move(tape));
    } else {
      PixelField out = net.forward(params, patch);
      for (std::size_t k = 0; k < classes; ++k) {
        aggregate[k] += item.weights[j] * out.data()[k];
      }
    }
  }
  double loss = 0.0;
  std::vector<double> residual(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    residual[k] = item.label[k] - aggregate[k];
    loss += residual[k] * residual[k];
  }
  if (grads != nullptr) {
    std::size_t t = 0;
    for (std::size_t j = 0; j < item.grid.count(); ++j) {
      if (item.weights[j] == 0.0) continue;
      PixelField dout(1, 1, classes);
      for (std::size_t k = 0; k < classes; ++k) {
        dout.data()[k] = -2.0 * scale * item.weights[j] * residual[k];
      }
      nn::Gradients g = net.backward(params, tapes[t++], dout);
      auto& dst = grads->mutable_tensors();
      for (const auto& [name, tensor] : g.params.tensors()) {
        auto& d = dst.at(name).data;
        for (std::size_t q = 0; q < d.size(); ++q) d[q] += tensor.data[q];
      }
    }
  }
  return loss;
}

}  // namespace

double stage1_loss(const nn::Network& classifier,
                   const nn::NetworkParams& params,
                   std::span<const Stage1Item> items) {
  if (items.empty()) throw std::invalid_argument("stage1_loss: no items");
  double total = 0.0;
  for (const Stage1Item& item : items) {
    total += item_loss(classifier, params, item, 0.0, nullptr);
  }
  return total / static_cast<double>(items.size());
}

Stage1LossResult stage1_loss_and_grad(const nn::Network& classifier,
                                      const nn::NetworkParams& params,
                                      std::span<const Stage1Item> items) {
  if (items.empty()) throw std::invalid_argument("stage1_loss: no items");
  Stage1LossResult result;
  result.grads = params.zeros_like();
  const double scale = 1.0 / static_cast<double>(items.size());
  for (const Stage1Item& item : items) {
    result.loss += item_loss(classifier, params, item, scale, &result.grads);
  }
  result.loss *= scale;
  return result;
}

PixelField broadcast_patches(const PatchGrid& grid,
                             std::span<const std::vector<double>> values,
                             std::size_t channels, const PixelField& support) {
  if (values.size() != grid.count()) {
    throw std::invalid_argument("broadcast_patches: one vector per patch");
  }
  const std::size_t h = grid.image_height;
  const std::size_t w = grid.image_width;
  PixelField out(h, w, channels);
  std::vector<std::uint32_t> cover(h * w, 0);
  for (std::size_t j = 0; j < grid.count(); ++j) {
    if (values[j].empty()) continue;
    if (values[j].size() != channels) {
      throw std::invalid_argument("broadcast_patches: vector length");
    }
    const PatchOrigin o = grid.origins[j];
    for (std::size_t r = o.row; r < o.row + grid.patch_height; ++r) {
      for (std::size_t c = o.col; c < o.col + grid.patch_width; ++c) {
        auto px = out.pixel(r, c);
        for (std::size_t k = 0; k < channels; ++k) px[k] += values[j][k];
        ++cover[r * w + c];
      }
    }
  }
  for (std::size_t p = 0; p < h * w; ++p) {
    const bool ok = cover[p] > 0 && support.validity()[p] != 0;
    out.validity()[p] = ok ? 1 : 0;
    if (!ok) {
      std::fill_n(out.data().data() + p * channels, channels, 0.0);
      continue;
    }
    const double inv = 1.0 / static_cast<double>(cover[p]);
    for (std::size_t k = 0; k < channels; ++k) {
      out.data()[p * channels + k] *= inv;
    }
  }
  return out;
}

PredictionStack tta_predict(const nn::Network& classifier,
                            const nn::NetworkParams& params,
                            const PixelField& image, const PatchGrid& grid,
                            std::size_t rotations) {
  if (rotations == 0) {
    throw std::invalid_argument("tta_predict: need at least one rotation");
  }
  if (grid.image_height != image.height() ||
      grid.image_width != image.width()) {
    throw std::invalid_argument("tta_predict: grid does not match image");
  }
  const std::size_t classes = classifier.out_channels();
  PredictionStack stack;
  stack.classes = classes;
  stack.angles = tta_angles(rotations);
  stack.slices.resize(rotations);
  parallel_for(rotations, [&](std::size_t r) {
    const PixelField rotated = rotate_warp(image, stack.angles[r], false);
    std::vector<std::vector<double>> per_patch(grid.count());
    for (std::size_t j = 0; j < grid.count(); ++j) {
      PixelField patch = extract_patch(rotated, grid, j);
      if (patch.valid_count() == 0) continue;
      per_patch[j] = classifier.forward(params, patch).data();
    }
    const PixelField pred =
        broadcast_patches(grid, per_patch, classes, rotated);
    stack.slices[r] = rotate_warp(pred, stack.angles[r], true);
  });
  return stack;
}

PixelField vote_mask(const PredictionStack& stack) {
  if (stack.rotations() == 0) {
    throw std::invalid_argument("vote_mask: empty stack");
  }
  const std::size_t classes = stack.classes;
  const std::size_t h = stack.height();
  const std::size_t w = stack.width();
  PixelField mask(h, w, classes);
  std::vector<std::size_t> votes(classes);
  for (std::size_t p = 0; p < h * w; ++p) {
    std::fill(votes.begin(), votes.end(), 0);
    std::size_t total = 0;
    for (const PixelField& s : stack.slices) {
      if (s.validity()[p] == 0) continue;
      const double* v = s.data().data() + p * classes;
      votes[static_cast<std::size_t>(std::max_element(v, v + classes) - v)]++;
      ++total;
    }
    if (total == 0) {
      mask.validity()[p] = 0;
      continue;
    }
    const auto best = static_cast<std::size_t>(
        std::max_element(votes.begin(), votes.end()) - votes.begin());
    mask.data()[p * classes + best] = 1.0;
  }
  return mask;
}

}  // namespace vslp
