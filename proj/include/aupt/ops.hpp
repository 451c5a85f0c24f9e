#pragma once

#include <random>

#include "aupt/tensor.hpp"

// Forward ops with reverse-mode gradients, restricted to what the VGG13
// classifier needs. Every op accepts either a single sample or a batch with
// a leading batch axis, and records history only when an input requires grad
// and grad mode is enabled.

namespace aupt {

/// 2-D convolution with square kernels.
/// input [C_in,H,W] or [B,C_in,H,W]; weights [C_out,C_in,k,k]; bias [C_out].
/// Output spatial size is floor((H + 2*padding - k) / stride) + 1.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                      const Tensor<Scalar>& bias, int stride = 1, int padding = 1);

/// Max pooling over non-overlapping or strided windows. Gradient flows to the
/// first maximal element of each window.
template <typename Scalar>
Tensor<Scalar> maxpool2d(const Tensor<Scalar>& input, int window = 2, int stride = 2);

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& input);

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& input);

/// Inverted dropout: survivors are scaled by 1/(1-p) in training mode, and
/// evaluation mode returns the input handle unchanged.
template <typename Scalar>
Tensor<Scalar> dropout(const Tensor<Scalar>& input, double p, bool training, std::mt19937_64& rng);

/// Affine map W x + b. input [N_in] or [B,N_in]; weights [N_out,N_in]; bias [N_out].
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                      const Tensor<Scalar>& bias);

/// Collapses all but the leading (batch) axis.
template <typename Scalar>
Tensor<Scalar> flatten(const Tensor<Scalar>& input);

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross entropy over all elements; predictions are clamped to
/// [1e-7, 1 - 1e-7] before the log.
template <typename Scalar>
Tensor<Scalar> bce_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& target);

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& input);

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& input, Scalar factor);

}  // namespace aupt
