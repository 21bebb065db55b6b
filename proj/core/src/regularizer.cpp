#include "vslp/regularizer.hpp"

#include <algorithm>
#include <stdexcept>

namespace vslp {

std::size_t RegularizerSpec::posterior_channels() const {
  return posterior == PosteriorKind::kHistogram ? bins * classes
                                                : 2 * classes;
}

std::size_t RegularizerSpec::input_channels() const {
  return image_channels + posterior_channels() + classes;
}

std::size_t RegularizerSpec::output_channels() const {
  return posterior == PosteriorKind::kHistogram ? classes : 2 * classes;
}

void RegularizerSpec::validate() const {
  if (image_channels == 0 || classes == 0) {
    throw std::invalid_argument("RegularizerSpec: zero channels");
  }
  if (posterior == PosteriorKind::kHistogram && bins < 2) {
    throw std::invalid_argument("RegularizerSpec: need at least 2 bins");
  }
  if (widths.empty()) {
    throw std::invalid_argument("RegularizerSpec: no scales");
  }
  for (std::size_t s = 0; s < widths.size(); ++s) {
    if (widths[s] == 0 || (s > 0 && widths[s] <= widths[s - 1])) {
      throw std::invalid_argument(
          "RegularizerSpec: widths must increase strictly with depth");
    }
  }
  if (kernel % 2 == 0 || convs_per_scale == 0 || up_kernel < 2) {
    throw std::invalid_argument("RegularizerSpec: bad kernel layout");
  }
}

namespace {

void check_grid(const PixelField& a, const PixelField& b, const char* what) {
  if (!a.same_grid(b)) {
    throw std::invalid_argument(std::string("assemble_input: ") + what +
                                " has different H/W than the image");
  }
}

}  // namespace

RegularizerInput assemble_input(const PixelField& image,
                                const HistogramPosterior& posterior,
                                const PixelField& prediction) {
  check_grid(image, posterior.weights, "posterior");
  check_grid(image, prediction, "prediction");
  if (prediction.channels() != posterior.classes) {
    throw std::invalid_argument(
        "assemble_input: prediction channels != posterior classes");
  }
  const PixelField* parts[] = {&image, &posterior.weights, &prediction};
  return {image.channels(), posterior.weights.channels(),
          prediction.channels(), concat_channels(parts)};
}

RegularizerInput assemble_input(const PixelField& image,
                                const GaussianPosterior& posterior,
                                const PixelField& prediction) {
  check_grid(image, posterior.mean, "posterior mean");
  check_grid(image, posterior.stddev, "posterior stddev");
  check_grid(image, prediction, "prediction");
  if (posterior.mean.channels() != posterior.stddev.channels() ||
      prediction.channels() != posterior.mean.channels()) {
    throw std::invalid_argument("assemble_input: Gaussian channel mismatch");
  }
  const PixelField* parts[] = {&image, &posterior.mean, &posterior.stddev,
                               &prediction};
  return {image.channels(), 2 * posterior.mean.channels(),
          prediction.channels(), concat_channels(parts)};
}

nn::Network build_regularizer_network(const RegularizerSpec& spec) {
  spec.validate();
  using nn::LayerSpec;
  std::vector<LayerSpec> layers;
  const std::size_t k = spec.kernel;
  std::vector<std::size_t> skip_index(spec.scales());
  std::size_t channels = spec.input_channels();
  for (std::size_t s = 0; s < spec.scales(); ++s) {
    const std::size_t w = spec.widths[s];
    for (std::size_t c = 0; c < spec.convs_per_scale; ++c) {
      if (c == 0 && s > 0) {
        layers.push_back(LayerSpec::downsample(k, channels, w));
      } else {
        layers.push_back(LayerSpec::conv(k, channels, w));
      }
      layers.push_back(LayerSpec::leaky_relu(w));
      channels = w;
    }
    skip_index[s] = layers.size();
  }
  for (std::size_t s = spec.scales() - 1; s > 0; --s) {
    const std::size_t w = spec.widths[s - 1];
    layers.push_back(
        LayerSpec::transposed_conv(spec.up_kernel, channels, w, 2));
    channels = w;
    if (spec.skip_connections) {
      layers.push_back(LayerSpec::skip_concat(skip_index[s - 1], channels,
                                              spec.widths[s - 1]));
      channels += spec.widths[s - 1];
    }
    for (std::size_t c = 0; c < spec.convs_per_scale; ++c) {
      layers.push_back(LayerSpec::conv(k, channels, w));
      layers.push_back(LayerSpec::leaky_relu(w));
      channels = w;
    }
  }
  layers.push_back(LayerSpec::conv(1, channels, spec.output_channels()));
  return nn::Network(std::move(layers), spec.padding);
}

namespace {

std::size_t round_up(std::size_t n, std::size_t multiple) {
  return (n + multiple - 1) / multiple * multiple;
}

std::size_t reflect(std::size_t i, std::size_t n) {
  return i < n ? i : 2 * (n - 1) - i;
}

}  // namespace

PixelField reflect_pad(const PixelField& field, std::size_t multiple) {
  const std::size_t h = field.height();
  const std::size_t w = field.width();
  const std::size_t ph = round_up(h, multiple);
  const std::size_t pw = round_up(w, multiple);
  if (ph == h && pw == w) return field;
  if (ph - h >= h || pw - w >= w) {
    throw std::invalid_argument("reflect_pad: field too small to reflect");
  }
  const std::size_t k = field.channels();
  PixelField out(ph, pw, k);
  for (std::size_t r = 0; r < ph; ++r) {
    for (std::size_t c = 0; c < pw; ++c) {
      auto src = field.pixel(reflect(r, h), reflect(c, w));
      std::copy(src.begin(), src.end(), out.pixel(r, c).begin());
    }
  }
  return out;
}

PixelField reflect_pad_adjoint(const PixelField& padded, std::size_t height,
                               std::size_t width) {
  if (padded.height() == height && padded.width() == width) return padded;
  const std::size_t k = padded.channels();
  PixelField out(height, width, k);
  for (std::size_t r = 0; r < padded.height(); ++r) {
    for (std::size_t c = 0; c < padded.width(); ++c) {
      auto src = padded.pixel(r, c);
      auto dst = out.pixel(reflect(r, height), reflect(c, width));
      for (std::size_t ch = 0; ch < k; ++ch) dst[ch] += src[ch];
    }
  }
  return out;
}

PixelField crop(const PixelField& field, std::size_t height,
                std::size_t width) {
  if (field.height() == height && field.width() == width) return field;
  if (height > field.height() || width > field.width()) {
    throw std::invalid_argument("crop: target larger than field");
  }
  const std::size_t k = field.channels();
  PixelField out(height, width, k);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      auto src = field.pixel(r, c);
      std::copy(src.begin(), src.end(), out.pixel(r, c).begin());
    }
  }
  return out;
}

Regularizer::Regularizer(RegularizerSpec spec)
    : spec_(std::move(spec)), network_(build_regularizer_network(spec_)) {}

nn::NetworkParams Regularizer::init_params(std::uint64_t seed,
                                           bool zero_final_layer) const {
  return network_.init_params(seed, zero_final_layer);
}

PixelField Regularizer::grad(const nn::NetworkParams& params,
                             const RegularizerInput& input) const {
  if (input.total_channels() != spec_.input_channels()) {
    throw std::invalid_argument("reg_grad: input has " +
                                std::to_string(input.total_channels()) +
                                " channels, spec expects " +
                                std::to_string(spec_.input_channels()));
  }
  const std::size_t m = spatial_multiple();
  if (input.assembled.height() % m != 0 || input.assembled.width() % m != 0) {
    throw std::invalid_argument("reg_grad: H and W must be multiples of " +
                                std::to_string(m));
  }
  return network_.forward(params, input.assembled);
}

PixelField Regularizer::evaluate(const nn::NetworkParams& params,
                                 const PixelField& assembled,
                                 Record* record) const {
  const std::size_t h = assembled.height();
  const std::size_t w = assembled.width();
  const PixelField padded = reflect_pad(assembled, spatial_multiple());
  if (record == nullptr) {
    return crop(network_.forward(params, padded), h, w);
  }
  auto [out, tape] = network_.forward_with_tape(params, padded);
  record->tape = std::move(tape);
  record->height = h;
  record->width = w;
  return crop(out, h, w);
}

nn::Gradients Regularizer::backward(const nn::NetworkParams& params,
                                    const Record& record,
                                    const PixelField& output_grad) const {
  const PixelField& padded_out = record.tape.activations.back();
  PixelField dy = output_grad;
  if (padded_out.height() != record.height ||
      padded_out.width() != record.width) {
    dy = PixelField(padded_out.height(), padded_out.width(),
                    padded_out.channels());
    for (std::size_t r = 0; r < record.height; ++r) {
      for (std::size_t c = 0; c < record.width; ++c) {
        auto src = output_grad.pixel(r, c);
        std::copy(src.begin(), src.end(), dy.pixel(r, c).begin());
      }
    }
  }
  nn::Gradients g = network_.backward(params, record.tape, dy);
  g.input = reflect_pad_adjoint(g.input, record.height, record.width);
  return g;
}

PixelField reg_grad(const nn::NetworkParams& params,
                    const RegularizerSpec& spec,
                    const RegularizerInput& input) {
  return Regularizer(spec).grad(params, input);
}

}  // namespace vslp
