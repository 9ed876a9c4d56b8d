#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "pve/tensor.hpp"

namespace pve {

/// 2-D convolution over NHWC input with "same" padding: the output spatial
/// extent is ceil(input / stride). Weights are stored as [kernel, kernel,
/// in_channels, out_channels].
struct Conv2d {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 5;
  std::size_t stride = 2;
};

/// Fully connected layer. Inputs of rank > 2 are flattened over all trailing
/// axes. Weights are stored as [in_features, out_features].
struct Dense {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
};

struct Relu {};
struct Sigmoid {};

using LayerSpec = std::variant<Conv2d, Dense, Relu, Sigmoid>;

std::string layer_name(const LayerSpec& layer);

/// Output shape of `layer` for `input`; throws std::invalid_argument naming
/// the layer and both shapes when they are incompatible.
Shape output_shape(const LayerSpec& layer, const Shape& input);

class Network;

/// Activations recorded by a forward pass, consumed by Network::backward.
class Tape {
 public:
  bool empty() const { return owner_ == nullptr; }
  void clear();

 private:
  friend class Network;
  const Network* owner_ = nullptr;
  std::vector<Tensor> inputs_;
  std::vector<Tensor> outputs_;
};

/// A feed-forward stack of layers together with its parameters.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<LayerSpec> layers);

  Network(const Network&) = default;
  Network& operator=(const Network&) = default;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  std::size_t parameter_count() const;

  /// He-uniform weights for layers followed by a ReLU, Xavier-uniform
  /// otherwise; biases zero.
  void initialize(std::uint64_t seed);

  /// Inference pass. Safe to call concurrently on a const network.
  Tensor forward(const Tensor& input) const;
  /// Training pass; records what backward needs into `tape`.
  Tensor forward(const Tensor& input, Tape& tape) const;

  /// Accumulates d(scalar)/d(params) into the parameter gradient buffers given
  /// d(scalar)/d(output). Returns d(scalar)/d(input) when `input_grad` is set,
  /// an empty tensor otherwise. Throws std::logic_error if `tape` was not
  /// recorded by this network.
  Tensor backward(const Tape& tape, const Tensor& upstream, bool input_grad = false);

  void zero_grad();
  /// Sum of squared gradient entries over all parameters.
  double gradient_sq_norm() const;

 private:
  Tensor run(const Tensor& input, Tape* tape) const;

  std::vector<LayerSpec> layers_;
  std::vector<int> weight_index_;  // per layer, -1 when parameter-free
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
};

}  // namespace pve
