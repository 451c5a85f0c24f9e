#include "aupt/adam.hpp"

#include <cmath>
#include <string>

namespace aupt {

template <typename Scalar>
AdamState<Scalar> make_adam_state(std::span<const Tensor<Scalar>> params, const AdamConfig& config) {
  if (!(config.lr >= 0.0) || !std::isfinite(config.lr)) throw ConfigError("adam lr must be finite and >= 0");
  if (!(config.beta1 > 0.0 && config.beta1 < 1.0)) throw ConfigError("adam beta1 must be in (0,1)");
  if (!(config.beta2 > 0.0 && config.beta2 < 1.0)) throw ConfigError("adam beta2 must be in (0,1)");
  if (!(config.eps > 0.0)) throw ConfigError("adam eps must be positive");
  AdamState<Scalar> state;
  state.config = config;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const auto& p : params) {
    state.m.push_back(AdamState<Scalar>::Vector::Zero(p.size()));
    state.v.push_back(AdamState<Scalar>::Vector::Zero(p.size()));
  }
  return state;
}

template <typename Scalar>
void adam_step(std::span<Tensor<Scalar>> params, AdamState<Scalar>& state) {
  if (params.size() != state.m.size() || params.size() != state.v.size()) {
    throw ShapeError("adam state tracks " + std::to_string(state.m.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].size() || state.v[i].size() != params[i].size()) {
      throw ShapeError("adam state shape mismatch for parameter " + std::to_string(i));
    }
  }

  ++state.step_count;
  const auto& c = state.config;
  const double t = double(state.step_count);
  const Scalar beta1 = Scalar(c.beta1);
  const Scalar beta2 = Scalar(c.beta2);
  const Scalar step = Scalar(c.lr / (1.0 - std::pow(c.beta1, t)));
  const Scalar v_correction = Scalar(1.0 / (1.0 - std::pow(c.beta2, t)));
  const Scalar eps = Scalar(c.eps);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (p.has_grad()) {
      const auto& g = p.grad();
      m = beta1 * m + (Scalar(1) - beta1) * g;
      v = beta2 * v + (Scalar(1) - beta2) * g.cwiseAbs2();
    } else {
      m *= beta1;
      v *= beta2;
    }
    p.values().array() -= step * m.array() / ((v.array() * v_correction).sqrt() + eps);
  }
}

template AdamState<float> make_adam_state(std::span<const Tensor<float>>, const AdamConfig&);
template AdamState<double> make_adam_state(std::span<const Tensor<double>>, const AdamConfig&);
template void adam_step(std::span<Tensor<float>>, AdamState<float>&);
template void adam_step(std::span<Tensor<double>>, AdamState<double>&);

}  // namespace aupt
