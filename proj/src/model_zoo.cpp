#include "rectnet/model_zoo.hpp"

#include <cmath>
#include <fmt/format.h>
#include <memory>

#include "rectnet/errors.hpp"

namespace rectnet {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

class SpecBuilder {
 public:
  SpecBuilder(std::string name, std::size_t num_classes, ActivationConfig activation, Shape input_shape,
              double width = 1.0)
      : width_(width) {
    spec_.name = std::move(name);
    spec_.num_classes = num_classes;
    spec_.activation = activation;
    spec_.input_shape = std::move(input_shape);
  }

  std::size_t scaled(std::size_t channels) const {
    if (width_ == 1.0) return channels;
    return std::max<std::size_t>(8, static_cast<std::size_t>(std::lround(static_cast<double>(channels) * width_)));
  }

  std::size_t add(std::string name, LayerDesc layer, std::vector<std::size_t> inputs) {
    spec_.nodes.push_back(NodeDesc{std::move(name), std::move(layer), std::move(inputs)});
    return spec_.nodes.size();
  }

  // Convolution followed by the model's activation. Returns the activation node.
  std::size_t conv(const std::string& name, std::size_t from, std::size_t channels, std::size_t kernel,
                   bool scale = true) {
    const auto c = add(name, ConvDesc{scale ? scaled(channels) : channels, kernel}, {from});
    return add(name + ".act", ActivationDesc{}, {c});
  }

  std::size_t dense(const std::string& name, std::size_t from, std::size_t features, bool activate) {
    const auto d = add(name, DenseDesc{features}, {from});
    return activate ? add(name + ".act", ActivationDesc{}, {d}) : d;
  }

  std::size_t pool(const std::string& name, std::size_t from, PoolKind kind, std::size_t window, std::size_t stride,
                   std::size_t pad) {
    return add(name, PoolDesc{kind, window, stride, pad}, {from});
  }

  ModelSpec finish() && { return std::move(spec_); }

 private:
  ModelSpec spec_;
  double width_;
};

ModelSpec nin(std::size_t num_classes, ActivationConfig activation, double width) {
  if (num_classes != 10 && num_classes != 100) {
    throw InvalidParam(fmt::format("nin: num_classes must be 10 or 100, got {}", num_classes));
  }
  SpecBuilder b(width == 1.0 ? "nin" : "nin-reduced", num_classes, activation, Shape{3, 32, 32}, width);
  auto x = b.conv("conv1", 0, 192, 5);
  x = b.conv("cccp1", x, 160, 1);
  x = b.conv("cccp2", x, 96, 1);
  x = b.pool("pool1", x, PoolKind::Max, 3, 2, 1);  // 32 -> 16
  x = b.add("drop1", DropoutDesc{0.5}, {x});
  x = b.conv("conv2", x, 192, 5);
  x = b.conv("cccp3", x, 192, 1);
  x = b.conv("cccp4", x, 192, 1);
  x = b.pool("pool2", x, PoolKind::Avg, 3, 2, 1);  // 16 -> 8
  x = b.add("drop2", DropoutDesc{0.5}, {x});
  x = b.conv("conv3", x, 192, 3);
  x = b.conv("cccp5", x, 192, 1);
  x = b.conv("cccp6", x, num_classes, 1, false);
  x = b.pool("pool3", x, PoolKind::Avg, 8, 1, 0);  // 8 -> 1
  b.add("flatten", FlattenDesc{}, {x});
  return std::move(b).finish();
}

ModelSpec ndsb(ActivationConfig activation, double width) {
  SpecBuilder b(width == 1.0 ? "ndsb" : "ndsb-reduced", 121, activation, Shape{1, 70, 70}, width);
  auto x = b.conv("conv1", 0, 32, 3);
  x = b.conv("conv2", x, 32, 3);
  x = b.pool("pool1", x, PoolKind::Max, 3, 2, 1);  // 70 -> 35
  x = b.conv("conv3", x, 64, 3);
  x = b.conv("conv4", x, 64, 3);
  x = b.conv("conv5", x, 64, 3);
  x = b.pool("pool2", x, PoolKind::Max, 3, 2, 0);  // 35 -> 17
  const auto split = b.add("split", SplitDesc{}, {x});
  // branch 1 carries four 3x3 layers, branch 2 three
  auto b1 = split;
  for (int i = 1; i <= 4; ++i) b1 = b.conv(fmt::format("branch1.conv{}", i), b1, 96, 3);
  auto b2 = split;
  for (int i = 1; i <= 3; ++i) b2 = b.conv(fmt::format("branch2.conv{}", i), b2, 96, 3);
  x = b.add("concat", ConcatDesc{}, {b1, b2});
  x = b.pool("pool3", x, PoolKind::Max, 3, 2, 0);  // 17 -> 8
  for (int i = 6; i <= 10; ++i) x = b.conv(fmt::format("conv{}", i), x, 256, 3);
  x = b.add("spp", SppDesc{{1, 2, 4}}, {x});
  x = b.dense("fc1", x, b.scaled(1024), true);
  x = b.dense("fc2", x, b.scaled(1024), true);
  b.dense("classifier", x, 121, false);
  return std::move(b).finish();
}

std::unique_ptr<Layer> make_layer(const LayerDesc& desc, std::span<const Shape> in, const ActivationConfig& act) {
  return std::visit(
      overloaded{
          [&](const ConvDesc& d) -> std::unique_ptr<Layer> {
            return std::make_unique<ConvLayer>(ConvSpec::same(in[0][1], d.out_channels, d.kernel));
          },
          [&](const PoolDesc& d) -> std::unique_ptr<Layer> {
            return std::make_unique<PoolLayer>(PoolSpec{d.kind, d.window, d.window, d.stride, d.stride, d.pad, d.pad});
          },
          [&](const DropoutDesc& d) -> std::unique_ptr<Layer> {
            return std::make_unique<DropoutLayer>(DropoutSpec{d.rate});
          },
          [&](const DenseDesc& d) -> std::unique_ptr<Layer> {
            return std::make_unique<DenseLayer>(DenseSpec::zeros(in[0].numel_from(1), d.out_features));
          },
          [&](const SppDesc& d) -> std::unique_ptr<Layer> { return std::make_unique<SppLayer>(SppSpec{d.levels}); },
          [&](const FlattenDesc&) -> std::unique_ptr<Layer> { return std::make_unique<FlattenLayer>(); },
          [&](const SplitDesc&) -> std::unique_ptr<Layer> { return std::make_unique<SplitLayer>(); },
          [&](const ConcatDesc&) -> std::unique_ptr<Layer> { return std::make_unique<ConcatLayer>(); },
          [&](const ActivationDesc&) -> std::unique_ptr<Layer> {
            return std::make_unique<ActivationLayer>(act, channel_count(in[0]));
          },
      },
      desc);
}

}  // namespace

Network instantiate(const ModelSpec& spec, std::uint64_t seed) {
  spec.activation.validate();
  Network net(spec.input_shape, seed);
  for (const auto& node : spec.nodes) {
    std::vector<Shape> in;
    for (auto i : node.inputs) {
      if (i >= net.node_count()) throw ShapeMismatch(fmt::format("node '{}' reads undefined node {}", node.name, i));
      in.push_back(net.node_shape(i));
    }
    net.add(node.name, make_layer(node.layer, in, spec.activation), node.inputs);
  }
  return net;
}

ModelSpec with_activation(ModelSpec spec, ActivationConfig activation) {
  spec.activation = activation;
  return spec;
}

ModelSpec build_nin(std::size_t num_classes, ActivationConfig activation) { return nin(num_classes, activation, 1.0); }

ModelSpec build_ndsb(ActivationConfig activation) { return ndsb(activation, 1.0); }

ModelSpec build_reduced(std::string_view base, double width_factor, ActivationConfig activation,
                        std::size_t num_classes) {
  if (!(width_factor > 0.0 && width_factor <= 1.0)) {
    throw InvalidParam(fmt::format("width factor must be in (0, 1], got {}", width_factor));
  }
  if (base == "nin") return nin(num_classes, activation, width_factor);
  if (base == "ndsb") return ndsb(activation, width_factor);
  throw InvalidParam(fmt::format("unknown base model '{}' (valid: nin, ndsb)", base));
}

ModelSpec build_model(std::string_view name, std::size_t num_classes, double width_factor,
                      ActivationConfig activation) {
  if (name == "nin") return build_nin(num_classes, activation);
  if (name == "ndsb") return build_ndsb(activation);
  if (name == "nin-reduced") return build_reduced("nin", width_factor, activation, num_classes);
  if (name == "ndsb-reduced") return build_reduced("ndsb", width_factor, activation);
  throw InvalidParam(fmt::format("unknown model '{}' (valid: nin, ndsb, nin-reduced, ndsb-reduced)", name));
}

}  // namespace rectnet
