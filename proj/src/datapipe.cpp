#include "aupt/datapipe.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "aupt/random.hpp"

namespace aupt {

Image pad_to_square(const Image& image) {
  const int side = std::max(image.width, image.height);
  if (image.width == side && image.height == side) return image;
  Image out(side, side, image.channels);
  const int x0 = (side - image.width) / 2;
  const int y0 = (side - image.height) / 2;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) out.at(x + x0, y + y0, c) = image.at(x, y, c);
    }
  }
  return out;
}

Plane to_grayscale(const Image& image) {
  Plane out(image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (image.channels == 1) {
        out(y, x) = float(image.at(x, y));
      } else {
        out(y, x) = float(0.299 * image.at(x, y, 0) + 0.587 * image.at(x, y, 1) + 0.114 * image.at(x, y, 2));
      }
    }
  }
  return out;
}

Plane resize_bilinear(const Plane& src, Index out_rows, Index out_cols) {
  if (src.rows() == 0 || src.cols() == 0) throw ContractError("resize_bilinear on an empty plane");
  auto coord = [](Index i, Index in, Index out) {
    return out > 1 ? double(i) * double(in - 1) / double(out - 1) : double(in - 1) / 2.0;
  };
  Plane out(out_rows, out_cols);
  for (Index r = 0; r < out_rows; ++r) {
    const double sy = coord(r, src.rows(), out_rows);
    const Index y0 = std::min<Index>(Index(std::floor(sy)), src.rows() - 1);
    const Index y1 = std::min<Index>(y0 + 1, src.rows() - 1);
    const double fy = sy - double(y0);
    for (Index c = 0; c < out_cols; ++c) {
      const double sx = coord(c, src.cols(), out_cols);
      const Index x0 = std::min<Index>(Index(std::floor(sx)), src.cols() - 1);
      const Index x1 = std::min<Index>(x0 + 1, src.cols() - 1);
      const double fx = sx - double(x0);
      const double top = (1 - fx) * src(y0, x0) + fx * src(y0, x1);
      const double bottom = (1 - fx) * src(y1, x0) + fx * src(y1, x1);
      out(r, c) = float((1 - fy) * top + fy * bottom);
    }
  }
  return out;
}

Tensor<float> preprocess(const Image& image, const PreprocessConfig& config) {
  if (image.width <= 0 || image.height <= 0) throw ContractError("preprocess requires a non-empty image");
  if (config.channels != 1 && config.channels != 3) throw ConfigError("preprocess channels must be 1 or 3");
  const Image padded = config.pad_square ? pad_to_square(image) : image;
  const Index n = config.size;

  std::vector<Plane> planes;
  if (config.channels == 1) {
    planes.push_back(to_grayscale(padded));
  } else {
    for (int c = 0; c < 3; ++c) {
      Plane p(padded.height, padded.width);
      const int src_c = padded.channels == 3 ? c : 0;
      for (int y = 0; y < padded.height; ++y) {
        for (int x = 0; x < padded.width; ++x) p(y, x) = float(padded.at(x, y, src_c));
      }
      planes.push_back(std::move(p));
    }
  }

  Tensor<float> out({Index(config.channels), n, n});
  for (std::size_t c = 0; c < planes.size(); ++c) {
    Eigen::Map<Plane>(out.data() + Index(c) * n * n, n, n) = resize_bilinear(planes[c], n, n) / 255.0f;
  }
  const double mean = out.values().cast<double>().mean();
  out.values().array() -= float(mean);
  return out;
}

void AugmentConfig::validate() const {
  auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip_prob must be in [0,1]");
  if (!finite_nonneg(max_rotation_deg)) throw ConfigError("max_rotation_deg must be finite and >= 0");
  if (!finite_nonneg(max_shear)) throw ConfigError("max_shear must be finite and >= 0");
  if (!(std::isfinite(scale_lo) && std::isfinite(scale_hi) && scale_lo > 0.0 && scale_lo <= 1.0 && scale_hi >= 1.0)) {
    throw ConfigError("scale range must satisfy 0 < lo <= 1 <= hi");
  }
}

AugmentDraw sample_augmentation(const AugmentConfig& config, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentDraw d;
  d.flip = unit(rng) < config.flip_prob;
  d.rotation_deg = (2.0 * unit(rng) - 1.0) * config.max_rotation_deg;
  d.shear = (2.0 * unit(rng) - 1.0) * config.max_shear;
  d.scale = config.scale_lo + unit(rng) * (config.scale_hi - config.scale_lo);
  return d;
}

Tensor<float> horizontal_flip(const Tensor<float>& sample) {
  if (sample.rank() != 3) throw ShapeError("horizontal_flip expects [C,H,W], got " + shape_string(sample.dims()));
  const Index channels = sample.dim(0), h = sample.dim(1), w = sample.dim(2);
  Tensor<float> out(sample.dims());
  for (Index c = 0; c < channels; ++c) {
    Eigen::Map<const Plane> src(sample.data() + c * h * w, h, w);
    Eigen::Map<Plane>(out.data() + c * h * w, h, w) = src.rowwise().reverse();
  }
  return out;
}

Tensor<float> warp_affine(const Tensor<float>& sample, double rotation_deg, double shear, double scale) {
  if (sample.rank() != 3) throw ShapeError("warp_affine expects [C,H,W], got " + shape_string(sample.dims()));
  if (!(scale > 0.0)) throw ConfigError("warp scale must be positive");
  const Index channels = sample.dim(0), h = sample.dim(1), w = sample.dim(2);
  const double theta = rotation_deg * std::numbers::pi / 180.0;
  Eigen::Matrix2d rotation;
  rotation << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  Eigen::Matrix2d shear_m;
  shear_m << 1.0, shear, 0.0, 1.0;
  const Eigen::Matrix2d inverse = (scale * rotation * shear_m).inverse();
  const double cx = double(w - 1) / 2.0;
  const double cy = double(h - 1) / 2.0;

  Tensor<float> out(sample.dims());
  for (Index c = 0; c < channels; ++c) {
    Eigen::Map<const Plane> src(sample.data() + c * h * w, h, w);
    Eigen::Map<Plane> dst(out.data() + c * h * w, h, w);
    auto at = [&](Index y, Index x) -> double { return (y >= 0 && y < h && x >= 0 && x < w) ? src(y, x) : 0.0; };
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        const Eigen::Vector2d s = inverse * Eigen::Vector2d(double(x) - cx, double(y) - cy);
        const double sx = s.x() + cx, sy = s.y() + cy;
        const Index x0 = Index(std::floor(sx)), y0 = Index(std::floor(sy));
        const double fx = sx - double(x0), fy = sy - double(y0);
        const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                         fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
        dst(y, x) = float(v);
      }
    }
  }
  return out;
}

Tensor<float> apply_augmentation(const Tensor<float>& sample, const AugmentDraw& draw) {
  Tensor<float> out = draw.flip ? horizontal_flip(sample) : sample.clone();
  if (draw.rotation_deg != 0.0 || draw.shear != 0.0 || draw.scale != 1.0) {
    out = warp_affine(out, draw.rotation_deg, draw.shear, draw.scale);
  }
  return out;
}

std::pair<Tensor<float>, std::vector<int>> augment(const Tensor<float>& sample, std::vector<int> labels,
                                                   const AugmentConfig& config, std::mt19937_64& rng) {
  return {apply_augmentation(sample, sample_augmentation(config, rng)), std::move(labels)};
}

std::mt19937_64 augmentation_rng(std::uint64_t seed, std::int64_t epoch, std::size_t index) {
  return keyed_rng(seed, {0x617567ULL, std::uint64_t(epoch), std::uint64_t(index)});
}

SampleStore::SampleStore(PreprocessConfig config, ImageLoader loader, bool cache)
    : config_(config), loader_(std::move(loader)), cache_enabled_(cache) {
  if (!loader_) loader_ = [](const std::filesystem::path& p) { return read_image(p); };
}

Tensor<float> SampleStore::get(const Manifest& manifest, std::size_t index) {
  const auto path = manifest.resolve(manifest.records.at(index));
  const Shape dims{Index(config_.channels), config_.size, config_.size};
  const std::string key = path.string();
  if (cache_enabled_) {
    if (auto it = cache_.find(key); it != cache_.end()) return Tensor<float>(dims, it->second);
  }
  ++decodes_;
  Tensor<float> t = preprocess(loader_(path), config_);
  if (cache_enabled_) cache_.emplace(key, t.values());
  return t;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::int64_t epoch, bool shuffle) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    auto rng = keyed_rng(seed, {0x73687566ULL, std::uint64_t(epoch)});
    std::shuffle(order.begin(), order.end(), rng);
  }
  return order;
}

BatchStream::BatchStream(const Manifest& manifest, SampleStore& store, BatchOptions options, std::int64_t epoch)
    : manifest_(manifest), store_(store), options_(options), epoch_(epoch) {
  if (options_.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (manifest_.empty()) throw ConfigError("cannot iterate an empty manifest");
  if (options_.training && options_.augment) options_.augment_config.validate();
  order_ = epoch_order(manifest_.size(), options_.seed, epoch_, options_.training);
}

std::size_t BatchStream::batch_count() const {
  const auto b = std::size_t(options_.batch_size);
  return (order_.size() + b - 1) / b;
}

bool BatchStream::next(Batch& out) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(order_.size(), cursor_ + std::size_t(options_.batch_size));
  const Index count = Index(end - cursor_);
  const Index side = store_.config().size;
  const Index channels = store_.config().channels;
  const Index per_sample = channels * side * side;
  const Index width = Index(manifest_.label_width());
  const bool binarize = manifest_.label_kind == LabelKind::Intensity;

  out.images = Tensor<float>({count, channels, side, side});
  out.labels = Tensor<float>({count, width});
  out.indices.assign(order_.begin() + Index(cursor_), order_.begin() + Index(end));
  for (Index b = 0; b < count; ++b) {
    const std::size_t idx = out.indices[b];
    Tensor<float> sample = store_.get(manifest_, idx);
    if (options_.training && options_.augment) {
      auto rng = augmentation_rng(options_.seed, epoch_, idx);
      sample = apply_augmentation(sample, sample_augmentation(options_.augment_config, rng));
    }
    out.images.values().segment(b * per_sample, per_sample) = sample.values();
    const auto& labels = manifest_.records[idx].labels;
    for (Index l = 0; l < width; ++l) {
      out.labels.values()[b * width + l] = float(binarize ? binarize_intensity(labels[l]) : labels[l]);
    }
  }
  cursor_ = end;
  return true;
}

BatchStream iterate_batches(const Manifest& manifest, SampleStore& store, const BatchOptions& options,
                            std::int64_t epoch) {
  return BatchStream(manifest, store, options, epoch);
}

}  // namespace aupt
