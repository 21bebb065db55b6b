#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vslp/field.hpp"

namespace vslp::nn {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);
  std::size_t numel() const { return data.size(); }
  bool operator==(const Tensor&) const = default;
};

/// Named parameter tensors (sorted by name). Every copy or mutable access
/// gets a fresh identity, which tapes use to detect staleness.
class NetworkParams {
 public:
  NetworkParams();
  NetworkParams(const NetworkParams& other);
  NetworkParams& operator=(const NetworkParams& other);
  NetworkParams(NetworkParams&&) noexcept = default;
  NetworkParams& operator=(NetworkParams&&) noexcept = default;

  void add(const std::string& name, Tensor tensor);
  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  Tensor& mutable_at(const std::string& name);

  const std::map<std::string, Tensor>& tensors() const { return tensors_; }
  std::map<std::string, Tensor>& mutable_tensors();

  std::size_t tensor_count() const { return tensors_.size(); }
  std::size_t total_count() const;
  /// Same names and shapes, all zeros.
  NetworkParams zeros_like() const;
  bool same_layout(const NetworkParams& other) const;
  bool all_finite() const;

  std::uint64_t identity() const { return identity_; }

  bool operator==(const NetworkParams& other) const {
    return tensors_ == other.tensors_;
  }

 private:
  void refresh_identity();
  std::map<std::string, Tensor> tensors_;
  std::uint64_t identity_ = 0;
};

enum class LayerKind {
  kConv,
  kTransposedConv,
  kActivation,
  kSkipConcat,
  kDownsample,
  kGlobalMean,
  kSoftmax,
};

enum class Activation { kIdentity, kLeakyRelu };
enum class Padding { kZero, kCircular };

/// One layer. Convolutions use 'same' padding of (kernel-1)/2; a downsample is
/// a stride-2 convolution and a transposed convolution is the exact adjoint of
/// the convolution with the same geometry.
struct LayerSpec {
  LayerKind kind = LayerKind::kActivation;
  std::size_t kernel = 1;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;
  Activation activation = Activation::kIdentity;
  double slope = 0.01;
  // Skip-concat source: 0 is the network input, i+1 the output of layer i.
  std::size_t skip_from = 0;

  static LayerSpec conv(std::size_t kernel, std::size_t in, std::size_t out);
  static LayerSpec downsample(std::size_t kernel, std::size_t in,
                              std::size_t out);
  static LayerSpec transposed_conv(std::size_t kernel, std::size_t in,
                                   std::size_t out, std::size_t stride = 2);
  static LayerSpec leaky_relu(std::size_t channels, double slope = 0.01);
  static LayerSpec identity(std::size_t channels);
  static LayerSpec skip_concat(std::size_t skip_from, std::size_t in,
                               std::size_t skip_channels);
  static LayerSpec global_mean(std::size_t channels);
  static LayerSpec softmax(std::size_t channels);

  bool has_params() const {
    return kind == LayerKind::kConv || kind == LayerKind::kDownsample ||
           kind == LayerKind::kTransposedConv;
  }
};

/// Intermediates recorded by a forward pass.
struct Tape {
  std::vector<PixelField> activations;  // activations[0] is the input
  std::uint64_t params_identity = 0;
  const void* network = nullptr;
};

struct Gradients {
  PixelField input;
  NetworkParams params;
};

class Network {
 public:
  /// Validates channel flow; throws std::invalid_argument on mismatch.
  explicit Network(std::vector<LayerSpec> layers,
                   Padding padding = Padding::kZero);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  Padding padding() const { return padding_; }
  std::size_t in_channels() const { return in_channels_; }
  std::size_t out_channels() const { return out_channels_; }
  /// Spatial dims must be divisible by this.
  std::size_t spatial_multiple() const { return spatial_multiple_; }

  static std::string weight_name(std::size_t layer);
  static std::string bias_name(std::size_t layer);

  /// Fan-in scaled uniform initialisation, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  NetworkParams init_params(std::uint64_t seed,
                            bool zero_final_layer = false) const;
  std::size_t parameter_count() const;

  PixelField forward(const NetworkParams& params,
                     const PixelField& input) const;
  std::pair<PixelField, Tape> forward_with_tape(const NetworkParams& params,
                                                const PixelField& input) const;

  /// Exact reverse-mode gradients of <output_grad, output>. Throws
  /// std::logic_error when the tape was recorded with different parameters or
  /// by a different network.
  Gradients backward(const NetworkParams& params, const Tape& tape,
                     const PixelField& output_grad) const;

 private:
  PixelField run(const NetworkParams& params, const PixelField& input,
                 Tape* tape) const;
  void check_params(const NetworkParams& params) const;

  std::vector<LayerSpec> layers_;
  Padding padding_;
  std::size_t in_channels_ = 0;
  std::size_t out_channels_ = 0;
  std::size_t spatial_multiple_ = 1;
};

// Low-level kernels, exposed for tests and benchmarks. Weight layout is
// [k, k, in, out] for convolutions and [k, k, out, in] for transposed
// convolutions, so both use the same tensor for an adjoint pair.
PixelField conv2d(const PixelField& x, const Tensor& weight,
                  const Tensor* bias, std::size_t stride, Padding padding);
PixelField conv2d_transposed(const PixelField& x, const Tensor& weight,
                             const Tensor* bias, std::size_t stride,
                             Padding padding);

}  // namespace vslp::nn
