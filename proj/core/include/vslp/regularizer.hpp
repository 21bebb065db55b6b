#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vslp/field.hpp"
#include "vslp/network.hpp"
#include "vslp/posterior.hpp"

namespace vslp {

enum class PosteriorKind { kHistogram, kGaussian };

/// Encoder-decoder (U-Net style) regulariser layout. Each scale has
/// `convs_per_scale` k x k convolutions; the first one on every deeper scale
/// has stride 2. The decoder upsamples with stride-2 transposed convolutions,
/// concatenates the encoder features of the same scale and applies
/// `convs_per_scale` convolutions. A final 1x1 convolution emits the gradient
/// field. The defaults (7-channel input) give 1,369,573 parameters.
struct RegularizerSpec {
  std::size_t image_channels = 3;
  PosteriorKind posterior = PosteriorKind::kHistogram;
  std::size_t bins = 3;
  std::size_t classes = 1;  // refined channels N_y'
  std::vector<std::size_t> widths = {12, 24, 48, 96};
  std::size_t kernel = 7;
  std::size_t convs_per_scale = 2;
  std::size_t up_kernel = 2;
  bool skip_connections = true;
  nn::Padding padding = nn::Padding::kZero;

  std::size_t posterior_channels() const;
  std::size_t input_channels() const;
  /// N_y' for histogram variants; 2 N_y' (d/dmu, d/dsigma) for the Gaussian.
  std::size_t output_channels() const;
  std::size_t scales() const { return widths.size(); }
  /// Throws std::invalid_argument for an unusable layout.
  void validate() const;
};

/// Network input with the fixed channel order [image | posterior | prediction].
struct RegularizerInput {
  std::size_t image_channels = 0;
  std::size_t posterior_channels = 0;
  std::size_t prediction_channels = 0;
  PixelField assembled;

  std::size_t total_channels() const { return assembled.channels(); }
};

/// Posterior channels are the class-major histogram weights.
RegularizerInput assemble_input(const PixelField& image,
                                const HistogramPosterior& posterior,
                                const PixelField& prediction);
/// Posterior channels are [mean (N_y') | stddev (N_y')].
RegularizerInput assemble_input(const PixelField& image,
                                const GaussianPosterior& posterior,
                                const PixelField& prediction);

nn::Network build_regularizer_network(const RegularizerSpec& spec);

/// Reflective padding at the bottom/right edge up to the next multiple.
PixelField reflect_pad(const PixelField& field, std::size_t multiple);
/// Adjoint of reflect_pad: folds the padded rows/cols back onto their sources.
PixelField reflect_pad_adjoint(const PixelField& padded, std::size_t height,
                               std::size_t width);
PixelField crop(const PixelField& field, std::size_t height,
                std::size_t width);

/// The learned regulariser, realised as a network whose output is the
/// gradient field grad_u R (lambda-unscaled).
class Regularizer {
 public:
  explicit Regularizer(RegularizerSpec spec);

  const RegularizerSpec& spec() const { return spec_; }
  const nn::Network& network() const { return network_; }
  nn::NetworkParams init_params(std::uint64_t seed,
                                bool zero_final_layer = false) const;

  /// Strict evaluation: H and W must be multiples of spatial_multiple().
  PixelField grad(const nn::NetworkParams& params,
                  const RegularizerInput& input) const;

  struct Record {
    nn::Tape tape;
    std::size_t height = 0;
    std::size_t width = 0;
  };

  /// Pads reflectively as needed, evaluates, crops. Fills `record` when given.
  PixelField evaluate(const nn::NetworkParams& params,
                      const PixelField& assembled,
                      Record* record = nullptr) const;
  /// Gradients of <output_grad, evaluate(...)> w.r.t. the assembled input
  /// (unpadded) and the parameters.
  nn::Gradients backward(const nn::NetworkParams& params, const Record& record,
                         const PixelField& output_grad) const;

  std::size_t spatial_multiple() const {
    return network_.spatial_multiple();
  }

 private:
  RegularizerSpec spec_;
  nn::Network network_;
};

/// grad_u R for `input`; throws std::invalid_argument when H or W is not a
/// multiple of 2^(scales-1).
PixelField reg_grad(const nn::NetworkParams& params,
                    const RegularizerSpec& spec,
                    const RegularizerInput& input);

}  // namespace vslp
