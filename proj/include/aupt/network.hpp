#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "aupt/tensor.hpp"

namespace aupt {

enum class LayerKind { Input, Conv, MaxPool, FullyConnected, Output };

std::string_view to_string(LayerKind kind);

/// One row of the architecture table.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Input;
  int filter = 0;  // kernel or pooling window edge; 0 when not applicable
  int stride = 0;
  double drop = 0.0;
  Shape output;  // per-sample output dims

  bool operator==(const LayerSpec&) const = default;
};

inline constexpr Index kInputSize = 64;
inline constexpr double kPoolDrop = 0.25;
inline constexpr double kFcDrop = 0.5;

/// Layer table of the modified VGG13: four conv groups (2, 2, 3, 3 convs of
/// widths 64, 128, 256, 256) each closed by a 2x2/2 max pool with 0.25
/// dropout, two 1024-wide FC layers with 0.5 dropout, and a sigmoid head.
/// `width_divisor` divides every channel and FC width; 1 is the reference
/// network.
std::vector<LayerSpec> vgg13_layout(int in_channels, int num_outputs, int width_divisor = 1);

template <typename Scalar>
struct NamedTensor {
  std::string name;
  Tensor<Scalar> tensor;
};

/// Modified VGG13 classifier with named parameters.
///
/// Copies are deep: a copied network owns independent parameter storage.
template <typename Scalar>
class Network {
 public:
  Network() = default;
  Network(std::vector<LayerSpec> layers, std::vector<NamedTensor<Scalar>> params, int width_divisor);

  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<NamedTensor<Scalar>>& named_parameters() const { return params_; }
  std::vector<NamedTensor<Scalar>>& named_parameters() { return params_; }

  /// Parameter handles in declaration order (sharing storage with the network).
  std::vector<Tensor<Scalar>> parameters() const;
  Tensor<Scalar>& parameter(std::string_view name);
  const Tensor<Scalar>& parameter(std::string_view name) const;
  bool has_parameter(std::string_view name) const;

  int in_channels() const;
  int num_outputs() const;
  int width_divisor() const { return width_divisor_; }
  Index parameter_count() const;

  /// batch [B,C,64,64] (or a single [C,64,64]) -> probabilities [B,num_outputs].
  /// Dropout is active only when `training`. When `trace` is given it
  /// receives the per-sample output dims of every layer, input included.
  Tensor<Scalar> forward(const Tensor<Scalar>& batch, bool training, std::mt19937_64& rng,
                         std::vector<Shape>* trace = nullptr) const;

  /// Evaluation-mode forward without graph recording.
  Tensor<Scalar> predict(const Tensor<Scalar>& batch) const;

  void zero_grad();
  void set_requires_grad(bool on);

  template <typename Other>
  Network<Other> cast() const {
    std::vector<NamedTensor<Other>> converted;
    for (const auto& p : params_) {
      converted.push_back({p.name, Tensor<Other>(p.tensor.dims(), p.tensor.values().template cast<Other>(),
                                                 p.tensor.requires_grad())});
    }
    return Network<Other>(layers_, std::move(converted), width_divisor_);
  }

 private:
  std::vector<LayerSpec> layers_;
  std::vector<NamedTensor<Scalar>> params_;
  int width_divisor_ = 1;
};

/// Fan-in scaled uniform init (see init_bound).
/// Each parameter draws from a stream keyed by (seed, parameter name).
/// Throws ConfigError unless in_channels is 1 or 3 and num_outputs >= 1.
template <typename Scalar>
Network<Scalar> build_vgg13(int in_channels, int num_outputs, std::uint64_t seed, int width_divisor = 1);

/// Copy of `net` whose output layer is re-initialized with `new_num_outputs`
/// units. Every other parameter is bit-identical to `net`.
template <typename Scalar>
Network<Scalar> replace_head(const Network<Scalar>& net, int new_num_outputs, std::uint64_t seed);

inline constexpr std::string_view kHeadWeight = "output.weight";
inline constexpr std::string_view kHeadBias = "output.bias";

/// Weights are uniform on [-b, b] with b = sqrt(6 / fan_in); biases start at
/// zero. Shared by build_vgg13 and replace_head.
inline double init_bound(Index fan_in) { return std::sqrt(6.0 / double(fan_in)); }

}  // namespace aupt
