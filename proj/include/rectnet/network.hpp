#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rectnet/activation.hpp"
#include "rectnet/layers.hpp"
#include "rectnet/rng.hpp"
#include "rectnet/tensor.hpp"

namespace rectnet {

/// A trainable parameter view. `value` and `grad` alias storage owned by the layer.
struct Param {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
  bool decay = true;  // weight decay applies
  std::vector<std::size_t> shape;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string_view kind() const = 0;

  /// Output shape given input shapes (batch dimension included).
  virtual Shape output_shape(std::span<const Shape> inputs) const = 0;

  virtual Tensor forward(std::span<const Tensor* const> inputs, Mode mode) = 0;

  /// Gradients with respect to each input, given the same inputs as the
  /// preceding forward. Parameter gradients are accumulated internally.
  /// Layers may return empty tensors when `need_input_grad` is false.
  virtual std::vector<Tensor> backward(std::span<const Tensor* const> inputs, const Tensor& grad_out,
                                       bool need_input_grad) = 0;

  virtual std::vector<Param> params() { return {}; }
  virtual void init(RngStream& /*rng*/) {}
  /// Stream for train-time sampling (dropout masks, RReLU divisors).
  virtual void bind_rng(RngStream /*rng*/) {}
};

class ConvLayer final : public Layer {
 public:
  explicit ConvLayer(ConvSpec spec);
  std::string_view kind() const override { return "conv"; }
  Shape output_shape(std::span<const Shape> inputs) const override;
  Tensor forward(std::span<const Tensor* const> inputs, Mode mode) override;
  std::vector<Tensor> backward(std::span<const Tensor* const> inputs, const Tensor& grad_out,
                               bool need_input_grad) override;
  std::vector<Param> params() override;
  /// He initialization: N(0, 2 / fan_in) weights, zero bias.
  void init(RngStream& rng) override;
  const ConvSpec& spec() const { return spec_; }

 private:
  ConvSpec spec_;
  Tensor grad_w_, grad_b_;
};

class PoolLayer final : public Layer {
 public:
  explicit PoolLayer(PoolSpec spec) : spec_(spec) {}
  std::string_view kind() const override { return spec_.kind == PoolKind::Max ? "maxpool" : "avgpool"; }
  Shape output_shape(std::span<const Shape> inputs) const override;
  Tensor forward(std::span<const Tensor* const> inputs, Mode mode) override;
  std::vector<Tensor> backward(std::span<const Tensor* const> inputs, const Tensor& grad_out,
                               bool need_input_grad) override;

 private:
  PoolSpec spec_;
};

class DropoutLayer final : public Layer {
 public:
  explicit DropoutLayer(DropoutSpec spec);
  std::string_view kind() const override { return "dropout"; }
  Shape output_shape(std::span<const Shape> inputs) const override { return inputs[0]; }
  Tensor forward(std::span<const Tensor* const> inputs, Mode mode) override;
  std::vector<Tensor> backward(std::span<const Tensor* const> inputs, const Tensor& grad_out,
                               bool need_input_grad) override;
  void bind_rng(RngStream rng) override { rng_ = rng; }
  const Tensor& mask() const { return mask_; }

 private:
  DropoutSpec spec_;
  RngStream rng_;
  Tensor mask_;
};

class DenseLayer final : public Layer {
 public:
  explicit DenseLayer(DenseSpec spec);
  std::string_view kind() const override { return "dense"; }
  Shape output_shape(std::span<const Shape> inputs) const override;
  Tensor forward(std::span<const Tensor* const> inputs, Mode mode) override;
  std::vector<Tensor> backward(std::span<const Tensor* const> inputs, const Tensor& grad_out,
                               bool need_input_grad) override;
  std::vector<Param> params() override;
  void init(RngStream& rng) override;
  const DenseSpec& spec() const { return spec_; }

 private:
  DenseSpec spec_;
  Tensor grad_w_, grad_b_;
};

class SppLayer final : public Layer {
 public:
  explicit SppLayer(SppSpec spec) : spec_(std::move(spec)) {}
  std::string_view kind() const override { return "spp"; }
  Shape output_shape(std::span<const Shape> inputs) const override;
  Tensor forward(std::span<const Tensor* const> inputs, Mode mode) override;
  std::vector<Tensor> backward(std::span<const Tensor* const> inputs, const Tensor& grad_out,
                               bool need_input_grad) override;

 private:
  SppSpec spec_;
};

/// (N, ...) -> (N, prod(...))
class FlattenLayer final : public Layer {
 public:
  std::string_view kind() const override { return "flatten"; }
  Shape output_shape(std::span<const Shape> inputs) const override;
  Tensor forward(std::span<const Tensor* const> inputs, Mode mode) override;
  std::vector<Tensor> backward(std::span<const Tensor* const> inputs, const Tensor& grad_out,
                               bool need_input_grad) override;
};

/// Branch point. The node forwards its input unchanged; each consumer reads
/// the same output and the network sums the consumers' gradients, which is
/// exactly split_backward.
class SplitLayer final : public Layer {
 public:
  std::string_view kind() const override { return "split"; }
  Shape output_shape(std::span<const Shape> inputs) const override { return inputs[0]; }
  Tensor forward(std::span<const Tensor* const> inputs, Mode mode) override;
  std::vector<Tensor> backward(std::span<const Tensor* const> inputs, const Tensor& grad_out,
                               bool need_input_grad) override;
};

class ConcatLayer final : public Layer {
 public:
  std::string_view kind() const override { return "concat"; }
  Shape output_shape(std::span<const Shape> inputs) const override;
  Tensor forward(std::span<const Tensor* const> inputs, Mode mode) override;
  std::vector<Tensor> backward(std::span<const Tensor* const> inputs, const Tensor& grad_out,
                               bool need_input_grad) override;
};

enum class ActivationKind { Identity, Relu, Leaky, Prelu, Rrelu };

struct ActivationConfig {
  ActivationKind kind = ActivationKind::Relu;
  double leaky_a = 100.0;
  double rrelu_l = 3.0;
  double rrelu_u = 8.0;
  double prelu_init = 0.25;

  void validate() const;
  /// Short token, e.g. "relu", "leaky:a=5.5", "rrelu:l=3,u=8".
  std::string label() const;

  friend bool operator==(const ActivationConfig&, const ActivationConfig&) = default;
};

std::string_view to_string(ActivationKind kind);
/// Throws InvalidParam listing the valid kinds.
ActivationKind parse_activation_kind(std::string_view name);

class ActivationLayer final : public Layer {
 public:
  /// `channels` sizes the PReLU slope vector; ignored by other kinds.
  ActivationLayer(ActivationConfig config, std::size_t channels);
  std::string_view kind() const override { return to_string(config_.kind); }
  Shape output_shape(std::span<const Shape> inputs) const override { return inputs[0]; }
  Tensor forward(std::span<const Tensor* const> inputs, Mode mode) override;
  std::vector<Tensor> backward(std::span<const Tensor* const> inputs, const Tensor& grad_out,
                               bool need_input_grad) override;
  std::vector<Param> params() override;
  void bind_rng(RngStream rng) override { rng_ = rng; }

  const ActivationConfig& config() const { return config_; }
  const PReluState& prelu() const { return prelu_; }
  const RReluParam& rrelu() const { return rrelu_; }

 private:
  ActivationConfig config_;
  PReluState prelu_;
  RReluParam rrelu_;
  RngStream rng_;
  Mode last_mode_ = Mode::Test;
};

/// Directed acyclic graph of layers, evaluated in insertion order. Node 0 is
/// the network input; every added node gets the next id. A node consumed by
/// several successors receives the sum of their gradients.
class Network {
 public:
  /// `example_shape` excludes the batch dimension. `seed` keys the
  /// per-layer init and runtime streams (stream id = node id).
  Network(Shape example_shape, std::uint64_t seed);

  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  std::size_t add(std::string name, std::unique_ptr<Layer> layer, std::vector<std::size_t> inputs);

  /// Output shape of a node for a batch of one.
  const Shape& node_shape(std::size_t id) const { return shapes_.at(id); }
  std::size_t node_count() const { return nodes_.size() + 1; }
  std::string_view node_name(std::size_t id) const;
  Layer& layer(std::size_t id);
  const Layer& layer(std::size_t id) const;

  /// Per-node output shapes for a given batch input shape (index 0 = input).
  std::vector<Shape> trace(const Shape& batch_input) const;

  void set_mode(Mode mode) { mode_ = mode; }
  Mode mode() const { return mode_; }

  /// Returns the output of the last node.
  const Tensor& forward(const Tensor& x);
  /// Back-propagates `grad_out` (gradient of the loss w.r.t. the last output)
  /// and accumulates parameter gradients. Requires a preceding forward.
  void backward(const Tensor& grad_out);

  std::vector<Param> params();
  void zero_grad();
  std::size_t parameter_count();

 private:
  struct Node {
    std::string name;
    std::unique_ptr<Layer> layer;
    std::vector<std::size_t> inputs;
    Tensor output;
  };

  Shape example_shape_;
  std::uint64_t seed_;
  Mode mode_ = Mode::Train;
  std::vector<Node> nodes_;   // node id = index + 1
  std::vector<Shape> shapes_; // per node id, batch of one
  Tensor input_;
  bool have_forward_ = false;
};

}  // namespace rectnet
