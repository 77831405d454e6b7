#include "rectnet/network.hpp"

#include <cmath>
#include <fmt/format.h>

#include "rectnet/errors.hpp"

namespace rectnet {

namespace {

constexpr std::uint64_t kInitDomain = 0x1a17;

void he_normal(Tensor& w, std::size_t fan_in, RngStream& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w.data()) v = std * rng.normal();
}

const Tensor& single_input(std::span<const Tensor* const> inputs, std::string_view kind) {
  if (inputs.size() != 1) throw ShapeMismatch(fmt::format("{}: expected one input, got {}", kind, inputs.size()));
  return *inputs[0];
}

}  // namespace

// ---------------------------------------------------------------------------
// ConvLayer

ConvLayer::ConvLayer(ConvSpec spec)
    : spec_(std::move(spec)), grad_w_(spec_.weights.shape()), grad_b_(spec_.bias.shape()) {}

Shape ConvLayer::output_shape(std::span<const Shape> inputs) const { return conv_output_shape(inputs[0], spec_); }

Tensor ConvLayer::forward(std::span<const Tensor* const> inputs, Mode) {
  return conv_forward(single_input(inputs, kind()), spec_);
}

std::vector<Tensor> ConvLayer::backward(std::span<const Tensor* const> inputs, const Tensor& grad_out,
                                        bool need_input_grad) {
  ConvGrads g = conv_backward(single_input(inputs, kind()), grad_out, spec_, need_input_grad);
  for (std::size_t i = 0; i < grad_w_.size(); ++i) grad_w_[i] += g.grad_w[i];
  for (std::size_t i = 0; i < grad_b_.size(); ++i) grad_b_[i] += g.grad_b[i];
  std::vector<Tensor> out;
  out.push_back(std::move(g.grad_x));
  return out;
}

std::vector<Param> ConvLayer::params() {
  return {Param{"weights", spec_.weights.data(), grad_w_.data(), true, spec_.weights.shape().dims()},
          Param{"bias", spec_.bias.data(), grad_b_.data(), false, spec_.bias.shape().dims()}};
}

void ConvLayer::init(RngStream& rng) {
  he_normal(spec_.weights, spec_.in_channels * spec_.kh * spec_.kw, rng);
  spec_.bias.fill(0.0);
}

// ---------------------------------------------------------------------------
// PoolLayer

Shape PoolLayer::output_shape(std::span<const Shape> inputs) const { return pool_output_shape(inputs[0], spec_); }

Tensor PoolLayer::forward(std::span<const Tensor* const> inputs, Mode) {
  return pool_forward(single_input(inputs, kind()), spec_);
}

std::vector<Tensor> PoolLayer::backward(std::span<const Tensor* const> inputs, const Tensor& grad_out, bool) {
  std::vector<Tensor> out;
  out.push_back(pool_backward(single_input(inputs, kind()), grad_out, spec_));
  return out;
}

// ---------------------------------------------------------------------------
// DropoutLayer

DropoutLayer::DropoutLayer(DropoutSpec spec) : spec_(spec) { spec_.validate(); }

Tensor DropoutLayer::forward(std::span<const Tensor* const> inputs, Mode mode) {
  return dropout_forward(single_input(inputs, kind()), spec_, mode, rng_, mask_);
}

std::vector<Tensor> DropoutLayer::backward(std::span<const Tensor* const>, const Tensor& grad_out, bool) {
  std::vector<Tensor> out;
  out.push_back(dropout_backward(grad_out, mask_));
  return out;
}

// ---------------------------------------------------------------------------
// DenseLayer

DenseLayer::DenseLayer(DenseSpec spec)
    : spec_(std::move(spec)), grad_w_(spec_.weights.shape()), grad_b_(spec_.bias.shape()) {}

Shape DenseLayer::output_shape(std::span<const Shape> inputs) const {
  if (inputs[0].numel_from(1) != spec_.in_features) {
    throw ShapeMismatch(fmt::format("dense: input {} does not flatten to {}", inputs[0].str(), spec_.in_features));
  }
  return Shape{inputs[0][0], spec_.out_features};
}

Tensor DenseLayer::forward(std::span<const Tensor* const> inputs, Mode) {
  return dense_forward(single_input(inputs, kind()), spec_);
}

std::vector<Tensor> DenseLayer::backward(std::span<const Tensor* const> inputs, const Tensor& grad_out, bool) {
  DenseGrads g = dense_backward(single_input(inputs, kind()), grad_out, spec_);
  for (std::size_t i = 0; i < grad_w_.size(); ++i) grad_w_[i] += g.grad_w[i];
  for (std::size_t i = 0; i < grad_b_.size(); ++i) grad_b_[i] += g.grad_b[i];
  std::vector<Tensor> out;
  out.push_back(std::move(g.grad_x));
  return out;
}

std::vector<Param> DenseLayer::params() {
  return {Param{"weights", spec_.weights.data(), grad_w_.data(), true, spec_.weights.shape().dims()},
          Param{"bias", spec_.bias.data(), grad_b_.data(), false, spec_.bias.shape().dims()}};
}

void DenseLayer::init(RngStream& rng) {
  he_normal(spec_.weights, spec_.in_features, rng);
  spec_.bias.fill(0.0);
}

// ---------------------------------------------------------------------------
// SppLayer, FlattenLayer, SplitLayer, ConcatLayer

Shape SppLayer::output_shape(std::span<const Shape> inputs) const {
  const Shape& in = inputs[0];
  if (in.rank() != 4) throw ShapeMismatch("spp: expected NCHW input");
  for (auto n : spec_.levels) {
    if (n == 0 || n > in[2] || n > in[3]) {
      throw InvalidShape(fmt::format("spp: level {} exceeds spatial size {}x{}", n, in[2], in[3]));
    }
  }
  return Shape{in[0], spp_feature_count(in[1], spec_)};
}

Tensor SppLayer::forward(std::span<const Tensor* const> inputs, Mode) {
  return spp_forward(single_input(inputs, kind()), spec_);
}

std::vector<Tensor> SppLayer::backward(std::span<const Tensor* const> inputs, const Tensor& grad_out, bool) {
  std::vector<Tensor> out;
  out.push_back(spp_backward(single_input(inputs, kind()), grad_out, spec_));
  return out;
}

Shape FlattenLayer::output_shape(std::span<const Shape> inputs) const {
  return Shape{inputs[0][0], inputs[0].numel_from(1)};
}

Tensor FlattenLayer::forward(std::span<const Tensor* const> inputs, Mode) {
  const Tensor& x = single_input(inputs, kind());
  return x.reshaped(Shape{x.dim(0), x.shape().numel_from(1)});
}

std::vector<Tensor> FlattenLayer::backward(std::span<const Tensor* const> inputs, const Tensor& grad_out, bool) {
  std::vector<Tensor> out;
  out.push_back(grad_out.reshaped(single_input(inputs, kind()).shape()));
  return out;
}

Tensor SplitLayer::forward(std::span<const Tensor* const> inputs, Mode) { return single_input(inputs, kind()); }

std::vector<Tensor> SplitLayer::backward(std::span<const Tensor* const>, const Tensor& grad_out, bool) {
  return {grad_out};
}

Shape ConcatLayer::output_shape(std::span<const Shape> inputs) const {
  if (inputs.empty()) throw ShapeMismatch("concat: no inputs");
  std::size_t channels = 0;
  for (const auto& s : inputs) {
    if (s.rank() != 4 || s[0] != inputs[0][0] || s[2] != inputs[0][2] || s[3] != inputs[0][3]) {
      throw ShapeMismatch(fmt::format("concat: {} vs {} differ outside the channel axis", s.str(), inputs[0].str()));
    }
    channels += s[1];
  }
  return Shape{inputs[0][0], channels, inputs[0][2], inputs[0][3]};
}

Tensor ConcatLayer::forward(std::span<const Tensor* const> inputs, Mode) { return concat_forward(inputs); }

std::vector<Tensor> ConcatLayer::backward(std::span<const Tensor* const> inputs, const Tensor& grad_out, bool) {
  std::vector<Shape> shapes;
  for (const Tensor* t : inputs) shapes.push_back(t->shape());
  return concat_backward(grad_out, shapes);
}

// ---------------------------------------------------------------------------
// Activation

std::string_view to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::Identity: return "identity";
    case ActivationKind::Relu: return "relu";
    case ActivationKind::Leaky: return "leaky";
    case ActivationKind::Prelu: return "prelu";
    case ActivationKind::Rrelu: return "rrelu";
  }
  return "?";
}

ActivationKind parse_activation_kind(std::string_view name) {
  if (name == "relu") return ActivationKind::Relu;
  if (name == "leaky") return ActivationKind::Leaky;
  if (name == "prelu") return ActivationKind::Prelu;
  if (name == "rrelu") return ActivationKind::Rrelu;
  if (name == "identity") return ActivationKind::Identity;
  throw InvalidParam(fmt::format("unknown activation '{}' (valid: relu, leaky, prelu, rrelu, identity)", name));
}

void ActivationConfig::validate() const {
  switch (kind) {
    case ActivationKind::Leaky: LeakyParam{leaky_a}.validate(); break;
    case ActivationKind::Rrelu: RReluParam{rrelu_l, rrelu_u, {}}.validate(); break;
    case ActivationKind::Prelu:
      if (!std::isfinite(prelu_init)) throw InvalidParam("prelu: initial slope must be finite");
      break;
    default: break;
  }
}

std::string ActivationConfig::label() const {
  switch (kind) {
    case ActivationKind::Leaky: return fmt::format("leaky:a={}", leaky_a);
    case ActivationKind::Rrelu: return fmt::format("rrelu:l={},u={}", rrelu_l, rrelu_u);
    default: return std::string(to_string(kind));
  }
}

ActivationLayer::ActivationLayer(ActivationConfig config, std::size_t channels) : config_(config) {
  config_.validate();
  if (config_.kind == ActivationKind::Prelu) prelu_ = PReluState::with_channels(channels, config_.prelu_init);
  if (config_.kind == ActivationKind::Rrelu) {
    rrelu_.l = config_.rrelu_l;
    rrelu_.u = config_.rrelu_u;
  }
}

Tensor ActivationLayer::forward(std::span<const Tensor* const> inputs, Mode mode) {
  const Tensor& x = single_input(inputs, kind());
  last_mode_ = mode;
  switch (config_.kind) {
    case ActivationKind::Identity: return x;
    case ActivationKind::Relu: return relu_forward(x);
    case ActivationKind::Leaky: return leaky_forward(x, LeakyParam{config_.leaky_a});
    case ActivationKind::Prelu: return prelu_forward(x, prelu_);
    case ActivationKind::Rrelu: return rrelu_forward(x, rrelu_, mode, rng_);
  }
  return x;
}

std::vector<Tensor> ActivationLayer::backward(std::span<const Tensor* const> inputs, const Tensor& grad_out, bool) {
  const Tensor& x = single_input(inputs, kind());
  std::vector<Tensor> out;
  switch (config_.kind) {
    case ActivationKind::Identity: out.push_back(grad_out); break;
    case ActivationKind::Relu: out.push_back(relu_backward(x, grad_out)); break;
    case ActivationKind::Leaky: out.push_back(leaky_backward(x, grad_out, LeakyParam{config_.leaky_a})); break;
    case ActivationKind::Prelu: out.push_back(prelu_backward(x, grad_out, prelu_)); break;
    case ActivationKind::Rrelu: out.push_back(rrelu_backward(x, grad_out, rrelu_, last_mode_)); break;
  }
  return out;
}

std::vector<Param> ActivationLayer::params() {
  if (config_.kind != ActivationKind::Prelu) return {};
  // no decay on slopes: it would pull PReLU toward ReLU
  return {Param{"slopes", prelu_.slopes, prelu_.slope_grads, false, {prelu_.slopes.size()}}};
}

// ---------------------------------------------------------------------------
// Network

Network::Network(Shape example_shape, std::uint64_t seed) : example_shape_(std::move(example_shape)), seed_(seed) {
  std::vector<std::size_t> dims{1};
  dims.insert(dims.end(), example_shape_.dims().begin(), example_shape_.dims().end());
  shapes_.emplace_back(std::move(dims));
}

std::size_t Network::add(std::string name, std::unique_ptr<Layer> layer, std::vector<std::size_t> inputs) {
  const std::size_t id = nodes_.size() + 1;
  if (inputs.empty()) throw ShapeMismatch(fmt::format("node '{}' has no inputs", name));
  std::vector<Shape> in_shapes;
  for (auto i : inputs) {
    if (i >= id) throw ShapeMismatch(fmt::format("node '{}' reads node {} which is not defined yet", name, i));
    in_shapes.push_back(shapes_[i]);
  }
  shapes_.push_back(layer->output_shape(in_shapes));

  RngStream init_rng(derive_seed(seed_, kInitDomain), id);
  layer->init(init_rng);
  layer->bind_rng(RngStream(seed_, id));
  nodes_.push_back(Node{std::move(name), std::move(layer), std::move(inputs), Tensor()});
  have_forward_ = false;
  return id;
}

std::string_view Network::node_name(std::size_t id) const { return id == 0 ? "input" : nodes_.at(id - 1).name; }

Layer& Network::layer(std::size_t id) { return *nodes_.at(id - 1).layer; }
const Layer& Network::layer(std::size_t id) const { return *nodes_.at(id - 1).layer; }

std::vector<Shape> Network::trace(const Shape& batch_input) const {
  std::vector<Shape> shapes{batch_input};
  for (const auto& node : nodes_) {
    std::vector<Shape> in;
    for (auto i : node.inputs) in.push_back(shapes[i]);
    shapes.push_back(node.layer->output_shape(in));
  }
  return shapes;
}

const Tensor& Network::forward(const Tensor& x) {
  if (nodes_.empty()) throw ShapeMismatch("forward on an empty network");
  if (x.rank() != example_shape_.rank() + 1 ||
      !std::equal(example_shape_.dims().begin(), example_shape_.dims().end(), x.shape().dims().begin() + 1)) {
    throw ShapeMismatch(
        fmt::format("network expects examples of shape {}, got batch {}", example_shape_.str(), x.shape().str()));
  }
  input_ = x;
  std::vector<const Tensor*> args;
  for (auto& node : nodes_) {
    args.clear();
    for (auto i : node.inputs) args.push_back(i == 0 ? &input_ : &nodes_[i - 1].output);
    node.output = node.layer->forward(args, mode_);
  }
  have_forward_ = true;
  return nodes_.back().output;
}

void Network::backward(const Tensor& grad_out) {
  if (!have_forward_) throw StaleCache("Network::backward without a preceding forward");
  require_same_shape(grad_out, nodes_.back().output, "Network::backward");
  std::vector<Tensor> grads(nodes_.size() + 1);
  grads.back() = grad_out;
  std::vector<const Tensor*> args;
  for (std::size_t id = nodes_.size(); id >= 1; --id) {
    Node& node = nodes_[id - 1];
    Tensor& g = grads[id];
    if (g.empty()) continue;  // output does not reach the loss
    args.clear();
    bool need_input_grad = false;
    for (auto i : node.inputs) {
      args.push_back(i == 0 ? &input_ : &nodes_[i - 1].output);
      need_input_grad = need_input_grad || i != 0;
    }
    std::vector<Tensor> in_grads = node.layer->backward(args, g, need_input_grad);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t src = node.inputs[k];
      if (src == 0 || in_grads[k].empty()) continue;
      if (grads[src].empty()) {
        grads[src] = std::move(in_grads[k]);
      } else {
        grads[src] = split_backward(grads[src], in_grads[k]);
      }
    }
    g = Tensor();
  }
}

std::vector<Param> Network::params() {
  std::vector<Param> all;
  for (auto& node : nodes_) {
    for (auto& p : node.layer->params()) {
      p.name = node.name + "." + p.name;
      all.push_back(std::move(p));
    }
  }
  return all;
}

void Network::zero_grad() {
  for (auto& p : params()) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

std::size_t Network::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : params()) n += p.value.size();
  return n;
}

}  // namespace rectnet
