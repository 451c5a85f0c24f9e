#include "aupt/network.hpp"

#include <algorithm>

#include "aupt/ops.hpp"
#include "aupt/random.hpp"

namespace aupt {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Input: return "Input";
    case LayerKind::Conv: return "Conv";
    case LayerKind::MaxPool: return "MaxPool";
    case LayerKind::FullyConnected: return "FullyConnected";
    case LayerKind::Output: return "Output";
  }
  return "?";
}

std::vector<LayerSpec> vgg13_layout(int in_channels, int num_outputs, int width_divisor) {
  if (in_channels != 1 && in_channels != 3) {
    throw ConfigError("in_channels must be 1 or 3, got " + std::to_string(in_channels));
  }
  if (num_outputs < 1) throw ConfigError("num_outputs must be >= 1, got " + std::to_string(num_outputs));
  if (width_divisor < 1 || 64 % width_divisor != 0) {
    throw ConfigError("width_divisor must be a positive divisor of 64, got " + std::to_string(width_divisor));
  }

  struct Group {
    int convs;
    Index width;
  };
  const Group groups[] = {{2, 64}, {2, 128}, {3, 256}, {3, 256}};

  std::vector<LayerSpec> layers;
  layers.push_back({"input", LayerKind::Input, 0, 0, 0.0, {in_channels, kInputSize, kInputSize}});
  Index side = kInputSize;
  for (int g = 0; g < 4; ++g) {
    const Index width = groups[g].width / width_divisor;
    for (int c = 0; c < groups[g].convs; ++c) {
      layers.push_back({"conv" + std::to_string(g + 1) + "_" + std::to_string(c + 1), LayerKind::Conv, 3, 1, 0.0,
                        {width, side, side}});
    }
    side /= 2;
    layers.push_back({"pool" + std::to_string(g + 1), LayerKind::MaxPool, 2, 2, kPoolDrop, {width, side, side}});
  }
  const Index fc = 1024 / width_divisor;
  layers.push_back({"fc5", LayerKind::FullyConnected, 0, 0, kFcDrop, {fc}});
  layers.push_back({"fc6", LayerKind::FullyConnected, 0, 0, kFcDrop, {fc}});
  layers.push_back({"output", LayerKind::Output, 0, 0, 0.0, {num_outputs}});
  return layers;
}

namespace {

template <typename Scalar>
Tensor<Scalar> init_uniform(Shape dims, Index fan_in, std::uint64_t seed, const std::string& name) {
  auto rng = keyed_rng(seed, {fnv1a64(name)});
  const double bound = init_bound(fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<Scalar> t(std::move(dims), true);
  for (Index i = 0; i < t.size(); ++i) t.values()[i] = Scalar(dist(rng));
  return t;
}

// Parameters of one layer given the previous layer's per-sample output.
template <typename Scalar>
void append_layer_params(const LayerSpec& layer, const Shape& prev, std::uint64_t seed,
                         std::vector<NamedTensor<Scalar>>& out) {
  if (layer.kind == LayerKind::Conv) {
    const Index c_in = prev[0];
    const Index c_out = layer.output[0];
    const Index k = layer.filter;
    const Index fan_in = c_in * k * k;
    out.push_back({layer.name + ".weight", init_uniform<Scalar>({c_out, c_in, k, k}, fan_in, seed, layer.name + ".weight")});
    out.push_back({layer.name + ".bias", Tensor<Scalar>({c_out}, true)});
  } else if (layer.kind == LayerKind::FullyConnected || layer.kind == LayerKind::Output) {
    const Index n_in = shape_size(prev);
    const Index n_out = layer.output[0];
    out.push_back({layer.name + ".weight", init_uniform<Scalar>({n_out, n_in}, n_in, seed, layer.name + ".weight")});
    out.push_back({layer.name + ".bias", Tensor<Scalar>({n_out}, true)});
  }
}

}  // namespace

template <typename Scalar>
Network<Scalar>::Network(std::vector<LayerSpec> layers, std::vector<NamedTensor<Scalar>> params, int width_divisor)
    : layers_(std::move(layers)), params_(std::move(params)), width_divisor_(width_divisor) {}

template <typename Scalar>
Network<Scalar>::Network(const Network& other) : layers_(other.layers_), width_divisor_(other.width_divisor_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back({p.name, p.tensor.clone()});
}

template <typename Scalar>
Network<Scalar>& Network<Scalar>::operator=(const Network& other) {
  if (this != &other) *this = Network(other);
  return *this;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> Network<Scalar>::parameters() const {
  std::vector<Tensor<Scalar>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.tensor);
  return out;
}

template <typename Scalar>
Tensor<Scalar>& Network<Scalar>::parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

template <typename Scalar>
const Tensor<Scalar>& Network<Scalar>::parameter(std::string_view name) const {
  return const_cast<Network*>(this)->parameter(name);
}

template <typename Scalar>
bool Network<Scalar>::has_parameter(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p.name == name; });
}

template <typename Scalar>
int Network<Scalar>::in_channels() const {
  return layers_.empty() ? 0 : int(layers_.front().output[0]);
}

template <typename Scalar>
int Network<Scalar>::num_outputs() const {
  return layers_.empty() ? 0 : int(layers_.back().output[0]);
}

template <typename Scalar>
Index Network<Scalar>::parameter_count() const {
  Index n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

template <typename Scalar>
Tensor<Scalar> Network<Scalar>::forward(const Tensor<Scalar>& batch, bool training, std::mt19937_64& rng,
                                        std::vector<Shape>* trace) const {
  if (layers_.empty()) throw ContractError("forward on an empty network");
  const Shape& expected = layers_.front().output;
  Tensor<Scalar> x = batch;
  if (x.rank() == 3) x = x.reshape({1, x.dim(0), x.dim(1), x.dim(2)});
  if (x.rank() != 4 || x.dim(2) != expected[1] || x.dim(3) != expected[2]) {
    throw ShapeError("network expects [B," + std::to_string(expected[0]) + ",64,64] input, got " +
                     shape_string(batch.dims()));
  }
  if (x.dim(1) != expected[0]) {
    throw ShapeError("network expects " + std::to_string(expected[0]) + " input channels, got " +
                     std::to_string(x.dim(1)));
  }

  auto record = [&](const Tensor<Scalar>& t) {
    if (trace) trace->push_back(Shape(t.dims().begin() + 1, t.dims().end()));
  };
  record(x);
  for (const LayerSpec& layer : layers_) {
    switch (layer.kind) {
      case LayerKind::Input:
        break;
      case LayerKind::Conv:
        x = relu(conv2d(x, parameter(layer.name + ".weight"), parameter(layer.name + ".bias"), layer.stride, 1));
        record(x);
        break;
      case LayerKind::MaxPool:
        x = dropout(maxpool2d(x, layer.filter, layer.stride), layer.drop, training, rng);
        record(x);
        break;
      case LayerKind::FullyConnected:
        if (x.rank() != 2) x = flatten(x);
        x = dropout(relu(linear(x, parameter(layer.name + ".weight"), parameter(layer.name + ".bias"))), layer.drop,
                    training, rng);
        record(x);
        break;
      case LayerKind::Output:
        if (x.rank() != 2) x = flatten(x);
        x = sigmoid(linear(x, parameter(layer.name + ".weight"), parameter(layer.name + ".bias")));
        record(x);
        break;
    }
  }
  return x;
}

template <typename Scalar>
Tensor<Scalar> Network<Scalar>::predict(const Tensor<Scalar>& batch) const {
  NoGradGuard guard;
  std::mt19937_64 unused(0);
  return forward(batch, false, unused);
}

template <typename Scalar>
void Network<Scalar>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename Scalar>
void Network<Scalar>::set_requires_grad(bool on) {
  for (auto& p : params_) p.tensor.set_requires_grad(on);
}

template <typename Scalar>
Network<Scalar> build_vgg13(int in_channels, int num_outputs, std::uint64_t seed, int width_divisor) {
  auto layers = vgg13_layout(in_channels, num_outputs, width_divisor);
  std::vector<NamedTensor<Scalar>> params;
  for (std::size_t i = 1; i < layers.size(); ++i) append_layer_params(layers[i], layers[i - 1].output, seed, params);
  return Network<Scalar>(std::move(layers), std::move(params), width_divisor);
}

template <typename Scalar>
Network<Scalar> replace_head(const Network<Scalar>& net, int new_num_outputs, std::uint64_t seed) {
  if (new_num_outputs < 1) throw ConfigError("new head width must be >= 1, got " + std::to_string(new_num_outputs));
  if (net.layers().empty() || net.layers().back().kind != LayerKind::Output) {
    throw ContractError("replace_head requires a built VGG13 network");
  }
  auto layers = net.layers();
  layers.back().output = {new_num_outputs};

  std::vector<NamedTensor<Scalar>> params;
  for (const auto& p : net.named_parameters()) {
    if (p.name != kHeadWeight && p.name != kHeadBias) params.push_back({p.name, p.tensor.clone()});
  }
  append_layer_params(layers.back(), layers[layers.size() - 2].output, seed, params);
  return Network<Scalar>(std::move(layers), std::move(params), net.width_divisor());
}

template class Network<float>;
template class Network<double>;
template Network<float> build_vgg13(int, int, std::uint64_t, int);
template Network<double> build_vgg13(int, int, std::uint64_t, int);
template Network<float> replace_head(const Network<float>&, int, std::uint64_t);
template Network<double> replace_head(const Network<double>&, int, std::uint64_t);

}  // namespace aupt
