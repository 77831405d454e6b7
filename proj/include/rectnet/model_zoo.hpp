#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rectnet/layers.hpp"
#include "rectnet/network.hpp"

namespace rectnet {

// Layer constructors. Input channel/feature counts are inferred from the
// graph when the spec is instantiated.

/// k x k convolution, stride 1, "same" padding.
struct ConvDesc {
  std::size_t out_channels;
  std::size_t kernel;
};
struct PoolDesc {
  PoolKind kind;
  std::size_t window;
  std::size_t stride;
  std::size_t pad;
};
struct DropoutDesc {
  double rate;
};
struct DenseDesc {
  std::size_t out_features;
};
struct SppDesc {
  std::vector<std::size_t> levels;
};
struct FlattenDesc {};
struct SplitDesc {};
struct ConcatDesc {};
/// Uses the model's activation config.
struct ActivationDesc {};

using LayerDesc =
    std::variant<ConvDesc, PoolDesc, DropoutDesc, DenseDesc, SppDesc, FlattenDesc, SplitDesc, ConcatDesc, ActivationDesc>;

/// `inputs` are node ids: 0 is the network input, node i of `nodes` has id i + 1.
struct NodeDesc {
  std::string name;
  LayerDesc layer;
  std::vector<std::size_t> inputs;
};

struct ModelSpec {
  std::string name;
  std::vector<NodeDesc> nodes;
  std::size_t num_classes = 0;
  ActivationConfig activation;
  Shape input_shape;  // per example, (C, H, W)
};

/// Builds the network; all parameter initialization is keyed by `seed`.
Network instantiate(const ModelSpec& spec, std::uint64_t seed);

/// Copy of `spec` with a different activation; topology unchanged.
ModelSpec with_activation(ModelSpec spec, ActivationConfig activation);

/// Network-in-Network for 3x32x32 CIFAR images, 10 or 100 classes.
ModelSpec build_nin(std::size_t num_classes, ActivationConfig activation);

/// Two-branch plankton network for 1x70x70 grayscale images, 121 classes.
ModelSpec build_ndsb(ActivationConfig activation);

/// Same topology as the base with hidden widths scaled by `width_factor`
/// (rounded, minimum 8). Class counts are not scaled.
ModelSpec build_reduced(std::string_view base, double width_factor, ActivationConfig activation,
                        std::size_t num_classes = 10);

/// Looks up nin, ndsb, nin-reduced or ndsb-reduced.
ModelSpec build_model(std::string_view name, std::size_t num_classes, double width_factor,
                      ActivationConfig activation);

}  // namespace rectnet
