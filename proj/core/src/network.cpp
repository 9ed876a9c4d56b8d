#include "pve/network.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace pve {
namespace {

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using RowVec = Eigen::Map<const Eigen::RowVectorXf>;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

struct ConvGeometry {
  std::size_t batch, height, width, channels;
  std::size_t out_height, out_width;
  std::size_t pad_top, pad_left;
  std::size_t kernel, stride;

  std::size_t rows() const { return batch * out_height * out_width; }
  std::size_t cols() const { return kernel * kernel * channels; }
};

ConvGeometry conv_geometry(const Conv2d& conv, const Shape& in) {
  ConvGeometry g{};
  g.batch = in[0];
  g.height = in[1];
  g.width = in[2];
  g.channels = in[3];
  g.kernel = conv.kernel;
  g.stride = conv.stride;
  g.out_height = (g.height + g.stride - 1) / g.stride;
  g.out_width = (g.width + g.stride - 1) / g.stride;
  const auto pad_h = std::max<long>(0, long((g.out_height - 1) * g.stride + g.kernel) - long(g.height));
  const auto pad_w = std::max<long>(0, long((g.out_width - 1) * g.stride + g.kernel) - long(g.width));
  g.pad_top = std::size_t(pad_h / 2);
  g.pad_left = std::size_t(pad_w / 2);
  return g;
}

FloatBuffer& scratch() {
  thread_local FloatBuffer buffer;
  return buffer;
}

void im2col(const ConvGeometry& g, const float* in, float* cols) {
  const std::size_t kc = g.kernel * g.channels;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oy = 0; oy < g.out_height; ++oy) {
      for (std::size_t ox = 0; ox < g.out_width; ++ox) {
        float* row = cols + ((n * g.out_height + oy) * g.out_width + ox) * g.cols();
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
          const long iy = long(oy * g.stride + ky) - long(g.pad_top);
          float* dst = row + ky * kc;
          if (iy < 0 || iy >= long(g.height)) {
            std::fill(dst, dst + kc, 0.0f);
            continue;
          }
          for (std::size_t kx = 0; kx < g.kernel; ++kx) {
            const long ix = long(ox * g.stride + kx) - long(g.pad_left);
            float* cell = dst + kx * g.channels;
            if (ix < 0 || ix >= long(g.width)) {
              std::fill(cell, cell + g.channels, 0.0f);
            } else {
              const float* src = in + ((n * g.height + std::size_t(iy)) * g.width + std::size_t(ix)) * g.channels;
              std::copy(src, src + g.channels, cell);
            }
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const float* cols, float* in_grad) {
  const std::size_t kc = g.kernel * g.channels;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oy = 0; oy < g.out_height; ++oy) {
      for (std::size_t ox = 0; ox < g.out_width; ++ox) {
        const float* row = cols + ((n * g.out_height + oy) * g.out_width + ox) * g.cols();
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
          const long iy = long(oy * g.stride + ky) - long(g.pad_top);
          if (iy < 0 || iy >= long(g.height)) continue;
          for (std::size_t kx = 0; kx < g.kernel; ++kx) {
            const long ix = long(ox * g.stride + kx) - long(g.pad_left);
            if (ix < 0 || ix >= long(g.width)) continue;
            const float* src = row + ky * kc + kx * g.channels;
            float* dst = in_grad + ((n * g.height + std::size_t(iy)) * g.width + std::size_t(ix)) * g.channels;
            for (std::size_t c = 0; c < g.channels; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

void check_same_shape(const Tensor& a, const Shape& expected, const char* what) {
  if (a.shape() != expected)
    throw std::invalid_argument(std::string(what) + ": expected shape " + shape_string(expected) + ", got " +
                                shape_string(a.shape()));
}

}  // namespace

std::string layer_name(const LayerSpec& layer) {
  return std::visit(overloaded{
                        [](const Conv2d& c) {
                          return "conv2d(" + std::to_string(c.in_channels) + "->" + std::to_string(c.out_channels) +
                                 ", k=" + std::to_string(c.kernel) + ", s=" + std::to_string(c.stride) + ")";
                        },
                        [](const Dense& d) {
                          return "dense(" + std::to_string(d.in_features) + "->" + std::to_string(d.out_features) + ")";
                        },
                        [](const Relu&) { return std::string("relu"); },
                        [](const Sigmoid&) { return std::string("sigmoid"); },
                    },
                    layer);
}

Shape output_shape(const LayerSpec& layer, const Shape& input) {
  auto reject = [&](const Shape& expected) -> Shape {
    throw std::invalid_argument("layer " + layer_name(layer) + ": input shape " + shape_string(input) +
                                " incompatible with expected " + shape_string(expected));
  };
  return std::visit(overloaded{
                        [&](const Conv2d& c) -> Shape {
                          if (input.size() != 4 || input[3] != c.in_channels)
                            return reject({0, 0, 0, c.in_channels});
                          return {input[0], (input[1] + c.stride - 1) / c.stride, (input[2] + c.stride - 1) / c.stride,
                                  c.out_channels};
                        },
                        [&](const Dense& d) -> Shape {
                          if (input.size() < 2) return reject({0, d.in_features});
                          std::size_t features = 1;
                          for (std::size_t i = 1; i < input.size(); ++i) features *= input[i];
                          if (features != d.in_features) return reject({input[0], d.in_features});
                          return {input[0], d.out_features};
                        },
                        [&](const auto&) -> Shape { return input; },
                    },
                    layer);
}

void Tape::clear() {
  owner_ = nullptr;
  inputs_.clear();
  outputs_.clear();
}

Network::Network(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::visit(overloaded{
                   [&](const Conv2d& c) {
                     if (c.kernel == 0 || c.stride == 0 || c.in_channels == 0 || c.out_channels == 0)
                       throw std::invalid_argument("conv2d extents must be positive");
                     weight_index_.push_back(int(params_.size()));
                     params_.emplace_back(Shape{c.kernel, c.kernel, c.in_channels, c.out_channels});
                     params_.emplace_back(Shape{c.out_channels});
                     names_.push_back("layer" + std::to_string(i) + ".conv.weight");
                     names_.push_back("layer" + std::to_string(i) + ".conv.bias");
                   },
                   [&](const Dense& d) {
                     if (d.in_features == 0 || d.out_features == 0)
                       throw std::invalid_argument("dense extents must be positive");
                     weight_index_.push_back(int(params_.size()));
                     params_.emplace_back(Shape{d.in_features, d.out_features});
                     params_.emplace_back(Shape{d.out_features});
                     names_.push_back("layer" + std::to_string(i) + ".dense.weight");
                     names_.push_back("layer" + std::to_string(i) + ".dense.bias");
                   },
                   [&](const auto&) { weight_index_.push_back(-1); },
               },
               layers_[i]);
  }
  for (auto& p : params_) p.enable_grad();
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void Network::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (weight_index_[i] < 0) continue;
    const bool relu_next = i + 1 < layers_.size() && std::holds_alternative<Relu>(layers_[i + 1]);
    Tensor& w = params_[std::size_t(weight_index_[i])];
    Tensor& b = params_[std::size_t(weight_index_[i]) + 1];
    double fan_in = 0, fan_out = 0;
    if (const auto* c = std::get_if<Conv2d>(&layers_[i])) {
      fan_in = double(c->kernel * c->kernel * c->in_channels);
      fan_out = double(c->kernel * c->kernel * c->out_channels);
    } else {
      const auto& d = std::get<Dense>(layers_[i]);
      fan_in = double(d.in_features);
      fan_out = double(d.out_features);
    }
    const double limit = relu_next ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<float> dist(float(-limit), float(limit));
    for (auto& x : w.data()) x = dist(rng);
    std::fill(b.data().begin(), b.data().end(), 0.0f);
  }
}

Tensor Network::forward(const Tensor& input) const { return run(input, nullptr); }

Tensor Network::forward(const Tensor& input, Tape& tape) const {
  tape.clear();
  Tensor out = run(input, &tape);
  tape.owner_ = this;
  return out;
}

Tensor Network::run(const Tensor& input, Tape* tape) const {
  Tensor x = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Shape out_shape = output_shape(layers_[i], x.shape());
    Tensor y(out_shape);
    std::visit(overloaded{
                   [&](const Conv2d& c) {
                     const auto g = conv_geometry(c, x.shape());
                     auto& cols = scratch();
                     cols.resize(g.rows() * g.cols());
                     im2col(g, x.data().data(), cols.data());
                     const Tensor& w = params_[std::size_t(weight_index_[i])];
                     const Tensor& b = params_[std::size_t(weight_index_[i]) + 1];
                     MapR out(y.data().data(), Eigen::Index(g.rows()), Eigen::Index(c.out_channels));
                     out.noalias() = CMapR(cols.data(), Eigen::Index(g.rows()), Eigen::Index(g.cols())) *
                                     CMapR(w.data().data(), Eigen::Index(g.cols()), Eigen::Index(c.out_channels));
                     out.rowwise() += RowVec(b.data().data(), Eigen::Index(c.out_channels));
                   },
                   [&](const Dense& d) {
                     const Tensor& w = params_[std::size_t(weight_index_[i])];
                     const Tensor& b = params_[std::size_t(weight_index_[i]) + 1];
                     const auto n = Eigen::Index(x.extent(0));
                     MapR out(y.data().data(), n, Eigen::Index(d.out_features));
                     out.noalias() = CMapR(x.data().data(), n, Eigen::Index(d.in_features)) *
                                     CMapR(w.data().data(), Eigen::Index(d.in_features), Eigen::Index(d.out_features));
                     out.rowwise() += RowVec(b.data().data(), Eigen::Index(d.out_features));
                   },
                   [&](const Relu&) {
                     auto src = x.data();
                     auto dst = y.data();
                     for (std::size_t k = 0; k < src.size(); ++k) dst[k] = src[k] > 0.0f ? src[k] : 0.0f;
                   },
                   [&](const Sigmoid&) {
                     auto src = x.data();
                     auto dst = y.data();
                     for (std::size_t k = 0; k < src.size(); ++k) dst[k] = 1.0f / (1.0f + std::exp(-src[k]));
                   },
               },
               layers_[i]);
    if (tape) {
      // Weight layers need their input; activations need their output.
      const bool activation = std::holds_alternative<Relu>(layers_[i]) || std::holds_alternative<Sigmoid>(layers_[i]);
      tape->inputs_.push_back(activation ? Tensor{} : std::move(x));
      tape->outputs_.push_back(activation ? y : Tensor{});
    }
    x = std::move(y);
  }
  return x;
}

Tensor Network::backward(const Tape& tape, const Tensor& upstream, bool input_grad) {
  if (tape.owner_ != this || tape.inputs_.size() != layers_.size())
    throw std::logic_error("backward called without a matching forward pass on this network");

  Tensor grad = upstream;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const bool need_dx = li > 0 || input_grad;
    std::visit(overloaded{
                   [&](const Conv2d& c) {
                     const Tensor& x = tape.inputs_[li];
                     const auto g = conv_geometry(c, x.shape());
                     check_same_shape(grad, output_shape(c, x.shape()), "conv2d backward");
                     Tensor& w = params_[std::size_t(weight_index_[li])];
                     Tensor& b = params_[std::size_t(weight_index_[li]) + 1];
                     auto& cols = scratch();
                     cols.resize(g.rows() * g.cols());
                     im2col(g, x.data().data(), cols.data());
                     const auto rows = Eigen::Index(g.rows());
                     const auto k = Eigen::Index(g.cols());
                     const auto cout = Eigen::Index(c.out_channels);
                     CMapR dout(grad.data().data(), rows, cout);
                     MapR(w.grad().data(), k, cout).noalias() += CMapR(cols.data(), rows, k).transpose() * dout;
                     Eigen::Map<Eigen::RowVectorXf>(b.grad().data(), cout) += dout.colwise().sum();
                     if (need_dx) {
                       MapR(cols.data(), rows, k).noalias() = dout * CMapR(w.data().data(), k, cout).transpose();
                       Tensor dx(x.shape());
                       col2im(g, cols.data(), dx.data().data());
                       grad = std::move(dx);
                     }
                   },
                   [&](const Dense& d) {
                     const Tensor& x = tape.inputs_[li];
                     check_same_shape(grad, output_shape(d, x.shape()), "dense backward");
                     Tensor& w = params_[std::size_t(weight_index_[li])];
                     Tensor& b = params_[std::size_t(weight_index_[li]) + 1];
                     const auto n = Eigen::Index(x.extent(0));
                     const auto fin = Eigen::Index(d.in_features);
                     const auto fout = Eigen::Index(d.out_features);
                     CMapR dout(grad.data().data(), n, fout);
                     MapR(w.grad().data(), fin, fout).noalias() += CMapR(x.data().data(), n, fin).transpose() * dout;
                     Eigen::Map<Eigen::RowVectorXf>(b.grad().data(), fout) += dout.colwise().sum();
                     if (need_dx) {
                       Tensor dx(x.shape());
                       MapR(dx.data().data(), n, fin).noalias() = dout * CMapR(w.data().data(), fin, fout).transpose();
                       grad = std::move(dx);
                     }
                   },
                   [&](const Relu&) {
                     const Tensor& y = tape.outputs_[li];
                     check_same_shape(grad, y.shape(), "relu backward");
                     auto g = grad.data();
                     auto out = y.data();
                     for (std::size_t k = 0; k < g.size(); ++k)
                       if (out[k] <= 0.0f) g[k] = 0.0f;
                   },
                   [&](const Sigmoid&) {
                     const Tensor& y = tape.outputs_[li];
                     check_same_shape(grad, y.shape(), "sigmoid backward");
                     auto g = grad.data();
                     auto out = y.data();
                     for (std::size_t k = 0; k < g.size(); ++k) g[k] *= out[k] * (1.0f - out[k]);
                   },
               },
               layers_[li]);
  }
  return input_grad ? grad : Tensor{};
}

void Network::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double Network::gradient_sq_norm() const {
  double s = 0;
  for (const auto& p : params_)
    for (float g : p.grad()) s += double(g) * double(g);
  return s;
}

}  // namespace pve
