#include "vslp/network.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

namespace vslp::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

std::atomic<std::uint64_t> g_next_identity{1};

struct Geometry {
  std::size_t h = 0, w = 0, channels = 0;
  std::size_t kernel = 1, stride = 1, pad = 0;
  std::size_t ho = 0, wo = 0;

  std::size_t rows() const { return ho * wo; }
  std::size_t cols() const { return kernel * kernel * channels; }
};

Geometry make_geometry(std::size_t h, std::size_t w, std::size_t channels,
                       std::size_t kernel, std::size_t stride) {
  Geometry g;
  g.h = h;
  g.w = w;
  g.channels = channels;
  g.kernel = kernel;
  g.stride = stride;
  g.pad = (kernel - 1) / 2;
  if (h + 2 * g.pad < kernel || w + 2 * g.pad < kernel) {
    throw std::invalid_argument("conv: input smaller than kernel");
  }
  g.ho = (h + 2 * g.pad - kernel) / stride + 1;
  g.wo = (w + 2 * g.pad - kernel) / stride + 1;
  return g;
}

// Source coordinate for output position `o`, kernel tap `t`, or -1 when it
// lands in zero padding.
inline std::ptrdiff_t source_index(std::size_t o, std::size_t t,
                                   const Geometry& g, std::size_t extent,
                                   Padding padding) {
  auto i = static_cast<std::ptrdiff_t>(o * g.stride + t) -
           static_cast<std::ptrdiff_t>(g.pad);
  const auto n = static_cast<std::ptrdiff_t>(extent);
  if (i >= 0 && i < n) return i;
  if (padding == Padding::kZero) return -1;
  i %= n;
  return i < 0 ? i + n : i;
}

void im2col(const double* x, const Geometry& g, Padding padding,
            double* cols) {
  const std::size_t c = g.channels;
  const std::size_t row_len = g.cols();
  for (std::size_t oy = 0; oy < g.ho; ++oy) {
    for (std::size_t ox = 0; ox < g.wo; ++ox) {
      double* row = cols + (oy * g.wo + ox) * row_len;
      for (std::size_t ky = 0; ky < g.kernel; ++ky) {
        const auto iy = source_index(oy, ky, g, g.h, padding);
        for (std::size_t kx = 0; kx < g.kernel; ++kx) {
          double* dst = row + (ky * g.kernel + kx) * c;
          const auto ix = source_index(ox, kx, g, g.w, padding);
          if (iy < 0 || ix < 0) {
            std::fill_n(dst, c, 0.0);
          } else {
            std::copy_n(x + (static_cast<std::size_t>(iy) * g.w +
                             static_cast<std::size_t>(ix)) * c,
                        c, dst);
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const Geometry& g, Padding padding,
            double* x) {
  const std::size_t c = g.channels;
  const std::size_t row_len = g.cols();
  for (std::size_t oy = 0; oy < g.ho; ++oy) {
    for (std::size_t ox = 0; ox < g.wo; ++ox) {
      const double* row = cols + (oy * g.wo + ox) * row_len;
      for (std::size_t ky = 0; ky < g.kernel; ++ky) {
        const auto iy = source_index(oy, ky, g, g.h, padding);
        if (iy < 0) continue;
        for (std::size_t kx = 0; kx < g.kernel; ++kx) {
          const auto ix = source_index(ox, kx, g, g.w, padding);
          if (ix < 0) continue;
          const double* src = row + (ky * g.kernel + kx) * c;
          double* dst = x + (static_cast<std::size_t>(iy) * g.w +
                             static_cast<std::size_t>(ix)) * c;
          for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }
}

bool is_pointwise(const Geometry& g) {
  return g.kernel == 1 && g.stride == 1;
}

void add_bias(PixelField& y, const Tensor* bias) {
  if (bias == nullptr) return;
  MatMap out(y.data().data(), static_cast<Eigen::Index>(y.pixels()),
             static_cast<Eigen::Index>(y.channels()));
  Eigen::Map<const Eigen::RowVectorXd> b(
      bias->data.data(), static_cast<Eigen::Index>(bias->numel()));
  out.rowwise() += b;
}

// `in_axis` is the weight axis that must match the input channel count.
void check_weight(const Tensor& weight, std::size_t in_channels,
                  std::size_t in_axis, const char* what) {
  if (weight.shape.size() != 4 || weight.shape[0] != weight.shape[1]) {
    throw std::invalid_argument(std::string(what) +
                                ": weight must be [k, k, a, b]");
  }
  if (weight.shape[in_axis] != in_channels) {
    throw std::invalid_argument(std::string(what) +
                                ": input channel mismatch");
  }
}

// Gradients of a convolution given its input and the output gradient.
void conv2d_backward(const PixelField& x, const Tensor& weight,
                     std::size_t stride, Padding padding,
                     const PixelField& dy, PixelField* dx, Tensor* dweight,
                     Tensor* dbias) {
  const std::size_t k = weight.shape[0];
  const std::size_t cout = weight.shape[3];
  const Geometry g = make_geometry(x.height(), x.width(), x.channels(), k,
                                   stride);
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols = static_cast<Eigen::Index>(g.cols());
  ConstMatMap dY(dy.data().data(), rows, static_cast<Eigen::Index>(cout));
  ConstMatMap W(weight.data.data(), cols, static_cast<Eigen::Index>(cout));

  std::vector<double> buffer;
  const double* col_ptr = x.data().data();
  if (!is_pointwise(g)) {
    buffer.resize(g.rows() * g.cols());
    im2col(x.data().data(), g, padding, buffer.data());
    col_ptr = buffer.data();
  }
  ConstMatMap C(col_ptr, rows, cols);
  if (dweight != nullptr) {
    MatMap dW(dweight->data.data(), cols, static_cast<Eigen::Index>(cout));
    dW.noalias() += C.transpose() * dY;
  }
  if (dbias != nullptr) {
    Eigen::Map<Eigen::RowVectorXd> db(dbias->data.data(),
                                      static_cast<Eigen::Index>(cout));
    db += dY.colwise().sum();
  }
  if (dx != nullptr) {
    *dx = PixelField(x.height(), x.width(), x.channels());
    if (is_pointwise(g)) {
      MatMap dX(dx->data().data(), rows, cols);
      dX.noalias() = dY * W.transpose();
    } else {
      std::vector<double> dcols(g.rows() * g.cols());
      MatMap dC(dcols.data(), rows, cols);
      dC.noalias() = dY * W.transpose();
      col2im(dcols.data(), g, padding, dx->data().data());
    }
  }
}

void conv2d_transposed_backward(const PixelField& x, const Tensor& weight,
                                std::size_t stride, Padding padding,
                                const PixelField& dy, PixelField* dx,
                                Tensor* dweight, Tensor* dbias) {
  const std::size_t k = weight.shape[0];
  const std::size_t cout = weight.shape[2];
  const std::size_t cin = weight.shape[3];
  const Geometry g = make_geometry(dy.height(), dy.width(), cout, k, stride);
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols = static_cast<Eigen::Index>(g.cols());
  std::vector<double> dcols(g.rows() * g.cols());
  im2col(dy.data().data(), g, padding, dcols.data());
  ConstMatMap dC(dcols.data(), rows, cols);
  ConstMatMap X(x.data().data(), rows, static_cast<Eigen::Index>(cin));
  ConstMatMap W(weight.data.data(), cols, static_cast<Eigen::Index>(cin));
  if (dweight != nullptr) {
    MatMap dW(dweight->data.data(), cols, static_cast<Eigen::Index>(cin));
    dW.noalias() += dC.transpose() * X;
  }
  if (dbias != nullptr) {
    MatMap dY(const_cast<double*>(dy.data().data()),
              static_cast<Eigen::Index>(dy.pixels()),
              static_cast<Eigen::Index>(cout));
    Eigen::Map<Eigen::RowVectorXd> db(dbias->data.data(),
                                      static_cast<Eigen::Index>(cout));
    db += dY.colwise().sum();
  }
  if (dx != nullptr) {
    *dx = PixelField(x.height(), x.width(), cin);
    MatMap dX(dx->data().data(), rows, static_cast<Eigen::Index>(cin));
    dX.noalias() = dC * W;
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims, double fill)
    : shape(std::move(dims)) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  data.assign(n, fill);
}

NetworkParams::NetworkParams() { refresh_identity(); }

NetworkParams::NetworkParams(const NetworkParams& other)
    : tensors_(other.tensors_) {
  refresh_identity();
}

NetworkParams& NetworkParams::operator=(const NetworkParams& other) {
  if (this != &other) {
    tensors_ = other.tensors_;
    refresh_identity();
  }
  return *this;
}

void NetworkParams::refresh_identity() { identity_ = g_next_identity++; }

void NetworkParams::add(const std::string& name, Tensor tensor) {
  if (!tensors_.emplace(name, std::move(tensor)).second) {
    throw std::invalid_argument("NetworkParams: duplicate tensor " + name);
  }
  refresh_identity();
}

bool NetworkParams::contains(const std::string& name) const {
  return tensors_.count(name) != 0;
}

const Tensor& NetworkParams::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) {
    throw std::invalid_argument("NetworkParams: missing tensor " + name);
  }
  return it->second;
}

Tensor& NetworkParams::mutable_at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) {
    throw std::invalid_argument("NetworkParams: missing tensor " + name);
  }
  refresh_identity();
  return it->second;
}

std::map<std::string, Tensor>& NetworkParams::mutable_tensors() {
  refresh_identity();
  return tensors_;
}

std::size_t NetworkParams::total_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.numel();
  return n;
}

NetworkParams NetworkParams::zeros_like() const {
  NetworkParams out;
  for (const auto& [name, t] : tensors_) out.add(name, Tensor(t.shape));
  return out;
}

bool NetworkParams::same_layout(const NetworkParams& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  auto a = tensors_.begin();
  auto b = other.tensors_.begin();
  for (; a != tensors_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.shape != b->second.shape) {
      return false;
    }
  }
  return true;
}

bool NetworkParams::all_finite() const {
  for (const auto& [name, t] : tensors_) {
    for (double v : t.data) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

LayerSpec LayerSpec::conv(std::size_t kernel, std::size_t in,
                          std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::kConv;
  s.kernel = kernel;
  s.in_channels = in;
  s.out_channels = out;
  return s;
}

LayerSpec LayerSpec::downsample(std::size_t kernel, std::size_t in,
                                std::size_t out) {
  LayerSpec s = conv(kernel, in, out);
  s.kind = LayerKind::kDownsample;
  s.stride = 2;
  return s;
}

LayerSpec LayerSpec::transposed_conv(std::size_t kernel, std::size_t in,
                                     std::size_t out, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::kTransposedConv;
  s.kernel = kernel;
  s.in_channels = in;
  s.out_channels = out;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::leaky_relu(std::size_t channels, double slope) {
  LayerSpec s;
  s.kind = LayerKind::kActivation;
  s.activation = Activation::kLeakyRelu;
  s.slope = slope;
  s.in_channels = s.out_channels = channels;
  return s;
}

LayerSpec LayerSpec::identity(std::size_t channels) {
  LayerSpec s;
  s.kind = LayerKind::kActivation;
  s.activation = Activation::kIdentity;
  s.in_channels = s.out_channels = channels;
  return s;
}

LayerSpec LayerSpec::skip_concat(std::size_t skip_from, std::size_t in,
                                 std::size_t skip_channels) {
  LayerSpec s;
  s.kind = LayerKind::kSkipConcat;
  s.skip_from = skip_from;
  s.in_channels = in;
  s.out_channels = in + skip_channels;
  return s;
}

LayerSpec LayerSpec::global_mean(std::size_t channels) {
  LayerSpec s;
  s.kind = LayerKind::kGlobalMean;
  s.in_channels = s.out_channels = channels;
  return s;
}

LayerSpec LayerSpec::softmax(std::size_t channels) {
  LayerSpec s;
  s.kind = LayerKind::kSoftmax;
  s.in_channels = s.out_channels = channels;
  return s;
}

PixelField conv2d(const PixelField& x, const Tensor& weight,
                  const Tensor* bias, std::size_t stride, Padding padding) {
  check_weight(weight, x.channels(), 2, "conv2d");
  const std::size_t k = weight.shape[0];
  const std::size_t cout = weight.shape[3];
  const Geometry g = make_geometry(x.height(), x.width(), x.channels(), k,
                                   stride);
  PixelField y(g.ho, g.wo, cout);
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols = static_cast<Eigen::Index>(g.cols());
  ConstMatMap W(weight.data.data(), cols, static_cast<Eigen::Index>(cout));
  MatMap Y(y.data().data(), rows, static_cast<Eigen::Index>(cout));
  if (is_pointwise(g)) {
    ConstMatMap X(x.data().data(), rows, cols);
    Y.noalias() = X * W;
  } else {
    std::vector<double> buffer(g.rows() * g.cols());
    im2col(x.data().data(), g, padding, buffer.data());
    ConstMatMap C(buffer.data(), rows, cols);
    Y.noalias() = C * W;
  }
  add_bias(y, bias);
  return y;
}

PixelField conv2d_transposed(const PixelField& x, const Tensor& weight,
                             const Tensor* bias, std::size_t stride,
                             Padding padding) {
  check_weight(weight, x.channels(), 3, "conv2d_transposed");
  const std::size_t k = weight.shape[0];
  const std::size_t cout = weight.shape[2];
  const std::size_t cin = weight.shape[3];
  const Geometry g = make_geometry(x.height() * stride, x.width() * stride,
                                   cout, k, stride);
  if (g.ho != x.height() || g.wo != x.width()) {
    throw std::invalid_argument(
        "conv2d_transposed: kernel/stride do not invert cleanly");
  }
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols = static_cast<Eigen::Index>(g.cols());
  std::vector<double> buffer(g.rows() * g.cols());
  ConstMatMap X(x.data().data(), rows, static_cast<Eigen::Index>(cin));
  ConstMatMap W(weight.data.data(), cols, static_cast<Eigen::Index>(cin));
  MatMap C(buffer.data(), rows, cols);
  C.noalias() = X * W.transpose();
  PixelField y(g.h, g.w, cout);
  col2im(buffer.data(), g, padding, y.data().data());
  add_bias(y, bias);
  return y;
}

Network::Network(std::vector<LayerSpec> layers, Padding padding)
    : layers_(std::move(layers)), padding_(padding) {
  if (layers_.empty()) {
    throw std::invalid_argument("Network: no layers");
  }
  in_channels_ = layers_.front().in_channels;
  if (in_channels_ == 0) {
    throw std::invalid_argument("Network: zero input channels");
  }
  // Per activation: channel count and log2 of the downsampling factor.
  std::vector<std::size_t> channels{in_channels_};
  std::vector<int> level{0};
  int max_level = 0;
  bool pooled = false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const std::string where = "Network layer " + std::to_string(i) + ": ";
    if (l.in_channels != channels.back()) {
      throw std::invalid_argument(where + "expects " +
                                  std::to_string(l.in_channels) +
                                  " channels, receives " +
                                  std::to_string(channels.back()));
    }
    if (l.out_channels == 0) {
      throw std::invalid_argument(where + "zero output channels");
    }
    int next_level = level.back();
    switch (l.kind) {
      case LayerKind::kConv:
      case LayerKind::kDownsample:
        if (l.kernel % 2 == 0) {
          throw std::invalid_argument(where + "conv kernel must be odd");
        }
        if (l.stride != 1 && l.stride != 2) {
          throw std::invalid_argument(where + "stride must be 1 or 2");
        }
        if (l.kind == LayerKind::kDownsample && l.stride != 2) {
          throw std::invalid_argument(where + "downsample needs stride 2");
        }
        if (pooled && (l.kernel != 1 || l.stride != 1)) {
          throw std::invalid_argument(where +
                                      "only 1x1 convs after global mean");
        }
        if (l.stride == 2) ++next_level;
        break;
      case LayerKind::kTransposedConv:
        if (l.stride != 2 || l.kernel < 2) {
          throw std::invalid_argument(where +
                                      "transposed conv needs stride 2");
        }
        if (pooled) {
          throw std::invalid_argument(where + "spatial layer after pooling");
        }
        --next_level;
        break;
      case LayerKind::kActivation:
      case LayerKind::kSoftmax:
        if (l.out_channels != l.in_channels) {
          throw std::invalid_argument(where + "must preserve channels");
        }
        break;
      case LayerKind::kGlobalMean:
        if (l.out_channels != l.in_channels) {
          throw std::invalid_argument(where + "must preserve channels");
        }
        pooled = true;
        break;
      case LayerKind::kSkipConcat:
        if (l.skip_from > i) {
          throw std::invalid_argument(where + "skip source is not earlier");
        }
        if (level[l.skip_from] != level.back()) {
          throw std::invalid_argument(where + "skip source scale mismatch");
        }
        if (l.out_channels != l.in_channels + channels[l.skip_from]) {
          throw std::invalid_argument(where + "skip channel count mismatch");
        }
        break;
    }
    max_level = std::max(max_level, next_level);
    channels.push_back(l.out_channels);
    level.push_back(next_level);
  }
  out_channels_ = channels.back();
  spatial_multiple_ = std::size_t{1} << max_level;
}

std::string Network::weight_name(std::size_t layer) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "L%03zu.weight", layer);
  return buf;
}

std::string Network::bias_name(std::size_t layer) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "L%03zu.bias", layer);
  return buf;
}

NetworkParams Network::init_params(std::uint64_t seed,
                                   bool zero_final_layer) const {
  NetworkParams params;
  std::mt19937_64 rng(seed);
  std::size_t last = layers_.size();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].has_params()) last = i;
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    if (!l.has_params()) continue;
    const std::size_t k = l.kernel;
    Tensor weight = l.kind == LayerKind::kTransposedConv
                        ? Tensor({k, k, l.out_channels, l.in_channels})
                        : Tensor({k, k, l.in_channels, l.out_channels});
    Tensor bias({l.out_channels});
    if (!(zero_final_layer && i == last)) {
      const double fan_in = static_cast<double>(
          l.kind == LayerKind::kTransposedConv ? l.in_channels
                                               : k * k * l.in_channels);
      const double bound = 1.0 / std::sqrt(fan_in);
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : weight.data) v = dist(rng);
      for (double& v : bias.data) v = dist(rng);
    }
    params.add(weight_name(i), std::move(weight));
    params.add(bias_name(i), std::move(bias));
  }
  return params;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const LayerSpec& l : layers_) {
    if (l.has_params()) {
      n += l.kernel * l.kernel * l.in_channels * l.out_channels +
           l.out_channels;
    }
  }
  return n;
}

void Network::check_params(const NetworkParams& params) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    if (!l.has_params()) continue;
    const Tensor& w = params.at(weight_name(i));
    const Tensor& b = params.at(bias_name(i));
    const std::size_t k = l.kernel;
    const std::vector<std::size_t> expect =
        l.kind == LayerKind::kTransposedConv
            ? std::vector<std::size_t>{k, k, l.out_channels, l.in_channels}
            : std::vector<std::size_t>{k, k, l.in_channels, l.out_channels};
    if (w.shape != expect || b.shape != std::vector<std::size_t>{
                                            l.out_channels}) {
      throw std::invalid_argument("Network: parameter shape mismatch at " +
                                  weight_name(i));
    }
  }
}

PixelField Network::forward(const NetworkParams& params,
                            const PixelField& input) const {
  return run(params, input, nullptr);
}

std::pair<PixelField, Tape> Network::forward_with_tape(
    const NetworkParams& params, const PixelField& input) const {
  Tape tape;
  PixelField out = run(params, input, &tape);
  return {std::move(out), std::move(tape)};
}

PixelField Network::run(const NetworkParams& params, const PixelField& input,
                        Tape* tape) const {
  if (input.channels() != in_channels_) {
    throw std::invalid_argument(
        "Network: input has " + std::to_string(input.channels()) +
        " channels, expected " + std::to_string(in_channels_));
  }
  if (input.height() % spatial_multiple_ != 0 ||
      input.width() % spatial_multiple_ != 0) {
    throw std::invalid_argument("Network: spatial dims not divisible by " +
                                std::to_string(spatial_multiple_));
  }
  check_params(params);

  // Activations referenced by later skip connections must be retained even
  // without a tape.
  std::vector<bool> keep(layers_.size() + 1, tape != nullptr);
  for (const LayerSpec& l : layers_) {
    if (l.kind == LayerKind::kSkipConcat) keep[l.skip_from] = true;
  }
  std::vector<PixelField> acts(layers_.size() + 1);
  acts[0] = input;
  acts[0].validity().assign(input.pixels(), 1);

  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const PixelField& x = acts[i];
    PixelField y;
    switch (l.kind) {
      case LayerKind::kConv:
      case LayerKind::kDownsample:
        y = conv2d(x, params.at(weight_name(i)), &params.at(bias_name(i)),
                   l.stride, padding_);
        break;
      case LayerKind::kTransposedConv:
        y = conv2d_transposed(x, params.at(weight_name(i)),
                              &params.at(bias_name(i)), l.stride, padding_);
        break;
      case LayerKind::kActivation:
        y = x;
        if (l.activation == Activation::kLeakyRelu) {
          for (double& v : y.data()) {
            if (v <= 0.0) v *= l.slope;
          }
        }
        break;
      case LayerKind::kSkipConcat: {
        const PixelField* parts[] = {&x, &acts[l.skip_from]};
        y = concat_channels(parts);
        break;
      }
      case LayerKind::kGlobalMean: {
        y = PixelField(1, 1, x.channels());
        const double inv = 1.0 / static_cast<double>(x.pixels());
        for (std::size_t p = 0; p < x.pixels(); ++p) {
          for (std::size_t c = 0; c < x.channels(); ++c) {
            y.data()[c] += x.data()[p * x.channels() + c];
          }
        }
        for (double& v : y.data()) v *= inv;
        break;
      }
      case LayerKind::kSoftmax: {
        y = x;
        const std::size_t c = x.channels();
        for (std::size_t p = 0; p < x.pixels(); ++p) {
          double* v = y.data().data() + p * c;
          const double m = *std::max_element(v, v + c);
          double sum = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            v[j] = std::exp(v[j] - m);
            sum += v[j];
          }
          for (std::size_t j = 0; j < c; ++j) v[j] /= sum;
        }
        break;
      }
    }
    acts[i + 1] = std::move(y);
    if (!keep[i] && i > 0) acts[i] = PixelField();
  }

  PixelField out = acts.back();
  if (tape != nullptr) {
    tape->activations = std::move(acts);
    tape->params_identity = params.identity();
    tape->network = this;
  }
  return out;
}

Gradients Network::backward(const NetworkParams& params, const Tape& tape,
                            const PixelField& output_grad) const {
  if (tape.network != this || tape.params_identity != params.identity() ||
      tape.activations.size() != layers_.size() + 1) {
    throw std::logic_error("Network::backward: stale or foreign tape");
  }
  if (!output_grad.same_shape(tape.activations.back())) {
    throw std::invalid_argument("Network::backward: output_grad shape");
  }
  Gradients result;
  result.params = params.zeros_like();
  auto& grad_tensors = result.params.mutable_tensors();

  std::vector<PixelField> grads(layers_.size() + 1);
  grads.back() = output_grad;
  auto accumulate = [&grads](std::size_t idx, const PixelField& g) {
    if (grads[idx].empty()) {
      grads[idx] = g;
    } else {
      auto& dst = grads[idx].data();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += g.data()[j];
    }
  };

  for (std::size_t i = layers_.size(); i-- > 0;) {
    const LayerSpec& l = layers_[i];
    PixelField dy = std::move(grads[i + 1]);
    grads[i + 1] = PixelField();
    const PixelField& x = tape.activations[i];
    if (dy.empty()) {
      // Output unused downstream; contributes nothing.
      dy = PixelField(tape.activations[i + 1].height(),
                      tape.activations[i + 1].width(), l.out_channels);
    }
    PixelField dx;
    switch (l.kind) {
      case LayerKind::kConv:
      case LayerKind::kDownsample:
        conv2d_backward(x, params.at(weight_name(i)), l.stride, padding_, dy,
                        &dx, &grad_tensors.at(weight_name(i)),
                        &grad_tensors.at(bias_name(i)));
        break;
      case LayerKind::kTransposedConv:
        conv2d_transposed_backward(x, params.at(weight_name(i)), l.stride,
                                   padding_, dy, &dx,
                                   &grad_tensors.at(weight_name(i)),
                                   &grad_tensors.at(bias_name(i)));
        break;
      case LayerKind::kActivation:
        dx = std::move(dy);
        if (l.activation == Activation::kLeakyRelu) {
          for (std::size_t j = 0; j < dx.size(); ++j) {
            if (x.data()[j] <= 0.0) dx.data()[j] *= l.slope;
          }
        }
        break;
      case LayerKind::kSkipConcat: {
        const std::size_t a = l.in_channels;
        const std::size_t b = l.out_channels - a;
        accumulate(l.skip_from, dy.slice_channels(a, b));
        dx = dy.slice_channels(0, a);
        break;
      }
      case LayerKind::kGlobalMean: {
        dx = PixelField(x.height(), x.width(), x.channels());
        const double inv = 1.0 / static_cast<double>(x.pixels());
        for (std::size_t p = 0; p < x.pixels(); ++p) {
          for (std::size_t c = 0; c < x.channels(); ++c) {
            dx.data()[p * x.channels() + c] = dy.data()[c] * inv;
          }
        }
        break;
      }
      case LayerKind::kSoftmax: {
        const PixelField& y = tape.activations[i + 1];
        dx = PixelField(x.height(), x.width(), x.channels());
        const std::size_t c = x.channels();
        for (std::size_t p = 0; p < x.pixels(); ++p) {
          const double* yv = y.data().data() + p * c;
          const double* gv = dy.data().data() + p * c;
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += yv[j] * gv[j];
          for (std::size_t j = 0; j < c; ++j) {
            dx.data()[p * c + j] = yv[j] * (gv[j] - dot);
          }
        }
        break;
      }
    }
    accumulate(i, dx);
  }
  result.input = std::move(grads[0]);
  return result;
}

}  // namespace vslp::nn
