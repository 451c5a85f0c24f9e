#include "aupt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace aupt {
namespace {

template <typename Scalar>
using NodeOf = detail::Node<Scalar>;

template <typename Scalar>
using VectorOf = typename Tensor<Scalar>::Vector;

template <typename Scalar>
using RowMatrixOf = typename Tensor<Scalar>::RowMatrix;

template <typename Scalar>
bool any_requires_grad(std::initializer_list<const Tensor<Scalar>*> inputs) {
  if (!grad_enabled()) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor<Scalar>* t) { return t->requires_grad(); });
}

// Wraps a freshly computed value; attaches history when any input needs grad.
template <typename Scalar, typename Backward>
Tensor<Scalar> make_result(Shape dims, VectorOf<Scalar> value,
                           std::initializer_list<const Tensor<Scalar>*> inputs, Backward&& backward) {
  Tensor<Scalar> out(std::move(dims), std::move(value));
  if (any_requires_grad<Scalar>(inputs)) {
    auto& node = *out.node();
    node.requires_grad = true;
    for (const Tensor<Scalar>* in : inputs) node.parents.push_back(in->node());
    node.backward_fn = std::forward<Backward>(backward);
  }
  return out;
}

struct ConvGeometry {
  Index batch, in_channels, height, width;
  Index out_channels, kernel, stride, padding;
  Index out_height, out_width;
  bool batched;

  Index patch_rows() const { return in_channels * kernel * kernel; }
  Index out_pixels() const { return out_height * out_width; }
  Index in_sample() const { return in_channels * height * width; }
  Index out_sample() const { return out_channels * out_pixels(); }
};

template <typename Scalar>
ConvGeometry conv_geometry(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                           const Tensor<Scalar>& bias, int stride, int padding) {
  if (stride < 1) throw ConfigError("conv2d stride must be >= 1");
  if (padding < 0) throw ConfigError("conv2d padding must be >= 0");
  const bool batched = input.rank() == 4;
  if (input.rank() != 3 && !batched) {
    throw ShapeError("conv2d input must be [C,H,W] or [B,C,H,W], got " + shape_string(input.dims()));
  }
  if (weights.rank() != 4 || weights.dim(2) != weights.dim(3)) {
    throw ShapeError("conv2d weights must be [C_out,C_in,k,k], got " + shape_string(weights.dims()));
  }
  const std::size_t off = batched ? 1 : 0;
  ConvGeometry g{};
  g.batched = batched;
  g.batch = batched ? input.dim(0) : 1;
  g.in_channels = input.dim(off);
  g.height = input.dim(off + 1);
  g.width = input.dim(off + 2);
  g.out_channels = weights.dim(0);
  g.kernel = weights.dim(2);
  g.stride = stride;
  g.padding = padding;
  if (weights.dim(1) != g.in_channels) {
    throw ShapeError("conv2d input has " + std::to_string(g.in_channels) + " channels but weights expect " +
                     std::to_string(weights.dim(1)));
  }
  if (bias.size() != g.out_channels) {
    throw ShapeError("conv2d bias length " + std::to_string(bias.size()) + " != C_out " +
                     std::to_string(g.out_channels));
  }
  if (g.height + 2 * padding < g.kernel || g.width + 2 * padding < g.kernel) {
    throw ShapeError("conv2d kernel does not fit padded input " + shape_string(input.dims()));
  }
  g.out_height = (g.height + 2 * padding - g.kernel) / stride + 1;
  g.out_width = (g.width + 2 * padding - g.kernel) / stride + 1;
  return g;
}

// col is [C_in*k*k, OH*OW] row-major.
template <typename Scalar>
void im2col(const Scalar* x, const ConvGeometry& g, Scalar* col) {
  const Index pixels = g.out_pixels();
  for (Index c = 0; c < g.in_channels; ++c) {
    const Scalar* plane = x + c * g.height * g.width;
    for (Index ky = 0; ky < g.kernel; ++ky) {
      for (Index kx = 0; kx < g.kernel; ++kx) {
        Scalar* row = col + ((c * g.kernel + ky) * g.kernel + kx) * pixels;
        for (Index oy = 0; oy < g.out_height; ++oy) {
          const Index iy = oy * g.stride - g.padding + ky;
          Scalar* dst = row + oy * g.out_width;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_width, Scalar(0));
            continue;
          }
          const Scalar* src = plane + iy * g.width;
          for (Index ox = 0; ox < g.out_width; ++ox) {
            const Index ix = ox * g.stride - g.padding + kx;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const Scalar* col, const ConvGeometry& g, Scalar* dx) {
  const Index pixels = g.out_pixels();
  for (Index c = 0; c < g.in_channels; ++c) {
    Scalar* plane = dx + c * g.height * g.width;
    for (Index ky = 0; ky < g.kernel; ++ky) {
      for (Index kx = 0; kx < g.kernel; ++kx) {
        const Scalar* row = col + ((c * g.kernel + ky) * g.kernel + kx) * pixels;
        for (Index oy = 0; oy < g.out_height; ++oy) {
          const Index iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          const Scalar* src = row + oy * g.out_width;
          Scalar* dst = plane + iy * g.width;
          for (Index ox = 0; ox < g.out_width; ++ox) {
            const Index ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                      const Tensor<Scalar>& bias, int stride, int padding) {
  using Matrix = RowMatrixOf<Scalar>;
  using CMap = Eigen::Map<const Matrix>;
  using Map = Eigen::Map<Matrix>;

  const ConvGeometry g = conv_geometry(input, weights, bias, stride, padding);
  const Index k_rows = g.patch_rows();
  const Index pixels = g.out_pixels();

  VectorOf<Scalar> out(g.batch * g.out_sample());
  Matrix col(k_rows, pixels);
  CMap w(weights.data(), g.out_channels, k_rows);
  const auto b = bias.values();
  for (Index n = 0; n < g.batch; ++n) {
    im2col(input.data() + n * g.in_sample(), g, col.data());
    Map y(out.data() + n * g.out_sample(), g.out_channels, pixels);
    y.noalias() = w * col;
    y.colwise() += b;
  }

  Shape dims = g.batched ? Shape{g.batch, g.out_channels, g.out_height, g.out_width}
                         : Shape{g.out_channels, g.out_height, g.out_width};
  return make_result<Scalar>(std::move(dims), std::move(out), {&input, &weights, &bias},
                             [g](NodeOf<Scalar>& self) {
    auto& x = *self.parents[0];
    auto& wn = *self.parents[1];
    auto& bn = *self.parents[2];
    const Index k_rows = g.patch_rows();
    const Index pixels = g.out_pixels();
    CMap w(wn.value.data(), g.out_channels, k_rows);
    Matrix col(k_rows, pixels);
    Matrix dcol;
    for (Index n = 0; n < g.batch; ++n) {
      CMap dy(self.grad.data() + n * g.out_sample(), g.out_channels, pixels);
      if (wn.requires_grad) {
        im2col(x.value.data() + n * g.in_sample(), g, col.data());
        Map dw(wn.ensure_grad().data(), g.out_channels, k_rows);
        dw.noalias() += dy * col.transpose();
      }
      if (bn.requires_grad) bn.ensure_grad() += dy.rowwise().sum();
      if (x.requires_grad) {
        dcol.noalias() = w.transpose() * dy;
        col2im_add(dcol.data(), g, x.ensure_grad().data() + n * g.in_sample());
      }
    }
  });
}

template <typename Scalar>
Tensor<Scalar> maxpool2d(const Tensor<Scalar>& input, int window, int stride) {
  if (window < 1 || stride < 1) throw ConfigError("maxpool2d window and stride must be >= 1");
  const bool batched = input.rank() == 4;
  if (input.rank() != 3 && !batched) {
    throw ShapeError("maxpool2d input must be [C,H,W] or [B,C,H,W], got " + shape_string(input.dims()));
  }
  const std::size_t off = batched ? 1 : 0;
  const Index planes = (batched ? input.dim(0) : 1) * input.dim(off);
  const Index h = input.dim(off + 1);
  const Index w = input.dim(off + 2);
  if (window > h || window > w) {
    throw ShapeError("maxpool2d window " + std::to_string(window) + " larger than input " +
                     shape_string(input.dims()));
  }
  const Index oh = (h - window) / stride + 1;
  const Index ow = (w - window) / stride + 1;

  VectorOf<Scalar> out(planes * oh * ow);
  auto argmax = std::make_shared<std::vector<Index>>(out.size());
  const Scalar* x = input.data();
  for (Index p = 0; p < planes; ++p) {
    const Scalar* plane = x + p * h * w;
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        Index best = (oy * stride) * w + ox * stride;
        for (Index dy = 0; dy < window; ++dy) {
          for (Index dx = 0; dx < window; ++dx) {
            const Index idx = (oy * stride + dy) * w + ox * stride + dx;
            if (plane[idx] > plane[best]) best = idx;
          }
        }
        const Index o = (p * oh + oy) * ow + ox;
        out[o] = plane[best];
        (*argmax)[o] = p * h * w + best;
      }
    }
  }

  Shape dims = input.dims();
  dims[off + 1] = oh;
  dims[off + 2] = ow;
  return make_result<Scalar>(std::move(dims), std::move(out), {&input}, [argmax](NodeOf<Scalar>& self) {
    auto& dx = self.parents[0]->ensure_grad();
    for (std::size_t o = 0; o < argmax->size(); ++o) dx[(*argmax)[o]] += self.grad[Index(o)];
  });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& input) {
  VectorOf<Scalar> out = input.values().cwiseMax(Scalar(0));
  return make_result<Scalar>(input.dims(), std::move(out), {&input}, [](NodeOf<Scalar>& self) {
    auto& x = *self.parents[0];
    x.ensure_grad().array() += (x.value.array() > Scalar(0)).select(self.grad.array(), Scalar(0));
  });
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& input) {
  VectorOf<Scalar> out = input.values().unaryExpr([](Scalar v) {
    // Split by sign so exp never overflows.
    if (v >= 0) return Scalar(1) / (Scalar(1) + std::exp(-v));
    const Scalar e = std::exp(v);
    return e / (Scalar(1) + e);
  });
  return make_result<Scalar>(input.dims(), std::move(out), {&input}, [](NodeOf<Scalar>& self) {
    auto& x = *self.parents[0];
    const auto& y = self.value.array();
    x.ensure_grad().array() += self.grad.array() * y * (Scalar(1) - y);
  });
}

template <typename Scalar>
Tensor<Scalar> dropout(const Tensor<Scalar>& input, double p, bool training, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must be in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return input;
  const Scalar keep_scale = Scalar(1.0 / (1.0 - p));
  auto mask = std::make_shared<VectorOf<Scalar>>(input.size());
  std::bernoulli_distribution drop(p);
  for (Index i = 0; i < mask->size(); ++i) (*mask)[i] = drop(rng) ? Scalar(0) : keep_scale;
  VectorOf<Scalar> out = input.values().cwiseProduct(*mask);
  return make_result<Scalar>(input.dims(), std::move(out), {&input}, [mask](NodeOf<Scalar>& self) {
    self.parents[0]->ensure_grad() += self.grad.cwiseProduct(*mask);
  });
}

template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& input, const Tensor<Scalar>& weights, const Tensor<Scalar>& bias) {
  using Matrix = RowMatrixOf<Scalar>;
  using CMap = Eigen::Map<const Matrix>;
  using Map = Eigen::Map<Matrix>;

  if (weights.rank() != 2) throw ShapeError("linear weights must be [N_out,N_in], got " + shape_string(weights.dims()));
  const bool batched = input.rank() == 2;
  if (input.rank() != 1 && !batched) {
    throw ShapeError("linear input must be [N_in] or [B,N_in], got " + shape_string(input.dims()));
  }
  const Index batch = batched ? input.dim(0) : 1;
  const Index n_in = batched ? input.dim(1) : input.dim(0);
  const Index n_out = weights.dim(0);
  if (weights.dim(1) != n_in) {
    throw ShapeError("linear input length " + std::to_string(n_in) + " != weights N_in " +
                     std::to_string(weights.dim(1)));
  }
  if (bias.size() != n_out) {
    throw ShapeError("linear bias length " + std::to_string(bias.size()) + " != N_out " + std::to_string(n_out));
  }

  VectorOf<Scalar> out(batch * n_out);
  {
    Map y(out.data(), batch, n_out);
    y.noalias() = CMap(input.data(), batch, n_in) * CMap(weights.data(), n_out, n_in).transpose();
    y.rowwise() += bias.values().transpose();
  }
  Shape dims = batched ? Shape{batch, n_out} : Shape{n_out};
  return make_result<Scalar>(std::move(dims), std::move(out), {&input, &weights, &bias},
                             [batch, n_in, n_out](NodeOf<Scalar>& self) {
    auto& x = *self.parents[0];
    auto& w = *self.parents[1];
    auto& b = *self.parents[2];
    CMap dy(self.grad.data(), batch, n_out);
    if (x.requires_grad) {
      Map(x.ensure_grad().data(), batch, n_in).noalias() += dy * CMap(w.value.data(), n_out, n_in);
    }
    if (w.requires_grad) {
      Map(w.ensure_grad().data(), n_out, n_in).noalias() += dy.transpose() * CMap(x.value.data(), batch, n_in);
    }
    if (b.requires_grad) b.ensure_grad() += dy.colwise().sum().transpose();
  });
}

template <typename Scalar>
Tensor<Scalar> flatten(const Tensor<Scalar>& input) {
  if (input.rank() < 1) throw ShapeError("flatten needs at least one axis");
  const Index batch = input.dim(0);
  return input.reshape(Shape{batch, batch == 0 ? 0 : input.size() / batch});
}

template <typename Scalar>
Tensor<Scalar> bce_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& target) {
  if (pred.dims() != target.dims()) {
    throw ShapeError("bce_loss shape mismatch: " + shape_string(pred.dims()) + " vs " + shape_string(target.dims()));
  }
  if (pred.size() == 0) throw ShapeError("bce_loss on empty tensors");
  const Scalar lo = Scalar(kBceClamp);
  const Scalar hi = Scalar(1) - Scalar(kBceClamp);
  const Index n = pred.size();
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double p = std::clamp(pred.values()[i], lo, hi);
    const double t = target.values()[i];
    total -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  VectorOf<Scalar> out(1);
  out[0] = Scalar(total / double(n));
  return make_result<Scalar>(Shape{1}, std::move(out), {&pred, &target}, [lo, hi, n](NodeOf<Scalar>& self) {
    auto& p = *self.parents[0];
    auto& t = *self.parents[1];
    const Scalar g = self.grad[0] / Scalar(n);
    if (p.requires_grad) {
      auto& dp = p.ensure_grad();
      for (Index i = 0; i < n; ++i) {
        const Scalar raw = p.value[i];
        if (raw < lo || raw > hi) continue;
        const Scalar tv = t.value[i];
        dp[i] += g * (raw - tv) / (raw * (Scalar(1) - raw));
      }
    }
    if (t.requires_grad) {
      auto& dt = t.ensure_grad();
      for (Index i = 0; i < n; ++i) {
        const Scalar pc = std::clamp(p.value[i], lo, hi);
        dt[i] += g * (std::log(Scalar(1) - pc) - std::log(pc));
      }
    }
  });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& input) {
  VectorOf<Scalar> out(1);
  out[0] = input.values().sum();
  return make_result<Scalar>(Shape{1}, std::move(out), {&input}, [](NodeOf<Scalar>& self) {
    self.parents[0]->ensure_grad().array() += self.grad[0];
  });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& input, Scalar factor) {
  VectorOf<Scalar> out = input.values() * factor;
  return make_result<Scalar>(input.dims(), std::move(out), {&input}, [factor](NodeOf<Scalar>& self) {
    self.parents[0]->ensure_grad() += self.grad * factor;
  });
}

#define AUPT_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);     \
  template Tensor<T> maxpool2d(const Tensor<T>&, int, int);                                      \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                  \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, std::mt19937_64&);                  \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> flatten(const Tensor<T>&);                                                  \
  template Tensor<T> bce_loss(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> scale(const Tensor<T>&, T);

AUPT_INSTANTIATE_OPS(float)
AUPT_INSTANTIATE_OPS(double)

#undef AUPT_INSTANTIATE_OPS

}  // namespace aupt
