#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "aupt/image.hpp"
#include "aupt/manifest.hpp"
#include "aupt/tensor.hpp"

namespace aupt {

/// Single image plane, row-major.
using Plane = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Preprocessing

struct PreprocessConfig {
  int channels = 1;        // 1 = grayscale, 3 = RGB
  bool pad_square = true;  // centered zero padding to a square before resizing
  Index size = kDefaultInputSize;

  static constexpr Index kDefaultInputSize = 64;
};

/// Centers the image on a zero canvas whose side is max(width, height).
Image pad_to_square(const Image& image);

/// Luma 0.299 R + 0.587 G + 0.114 B, values kept in 0..255.
Plane to_grayscale(const Image& image);

/// Bilinear resize with corner-aligned sampling: output pixel i maps to
/// source coordinate i * (in - 1) / (out - 1), so samples never leave the
/// source grid.
Plane resize_bilinear(const Plane& src, Index out_rows, Index out_cols);

/// pad (optional) -> grayscale (when channels == 1) -> bilinear resize ->
/// scale to [0,1] -> subtract the per-image mean. Returns [C,size,size].
/// Throws ContractError on a zero-sized image.
Tensor<float> preprocess(const Image& image, const PreprocessConfig& config = {});

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentConfig {
  double flip_prob = 0.5;
  double max_rotation_deg = 10.0;
  double max_shear = 0.1;
  double scale_lo = 0.9;
  double scale_hi = 1.1;

  /// Throws ConfigError unless flip_prob in [0,1], scale_lo <= 1 <= scale_hi,
  /// and every magnitude is finite and non-negative.
  void validate() const;
};

/// One sampled transform.
struct AugmentDraw {
  bool flip = false;
  double rotation_deg = 0.0;
  double shear = 0.0;
  double scale = 1.0;
};

/// flip ~ Bernoulli(flip_prob); rotation ~ U(-max, max); shear ~ U(-max, max);
/// scale ~ U(lo, hi). Always consumes the same number of draws.
AugmentDraw sample_augmentation(const AugmentConfig& config, std::mt19937_64& rng);

/// Mirrors every plane left-right. Exact: applying it twice is the identity.
Tensor<float> horizontal_flip(const Tensor<float>& sample);

/// Rotation, horizontal shear, and isotropic scale about the image center,
/// resampled bilinearly with zero fill outside the source.
Tensor<float> warp_affine(const Tensor<float>& sample, double rotation_deg, double shear, double scale);

Tensor<float> apply_augmentation(const Tensor<float>& sample, const AugmentDraw& draw);

/// Samples one draw from `rng` and applies it. Labels pass through unchanged.
std::pair<Tensor<float>, std::vector<int>> augment(const Tensor<float>& sample, std::vector<int> labels,
                                                   const AugmentConfig& config, std::mt19937_64& rng);

/// Generator for the augmentation of manifest record `index` in `epoch`.
std::mt19937_64 augmentation_rng(std::uint64_t seed, std::int64_t epoch, std::size_t index);

// ---------------------------------------------------------------------------
// Sample access and batching

using ImageLoader = std::function<Image(const std::filesystem::path&)>;

/// Decodes and preprocesses manifest images, caching the preprocessed
/// result by resolved path.
class SampleStore {
 public:
  explicit SampleStore(PreprocessConfig config = {}, ImageLoader loader = {}, bool cache = true);

  /// Preprocessed [C,size,size] tensor for manifest.records[index].
  Tensor<float> get(const Manifest& manifest, std::size_t index);

  const PreprocessConfig& config() const { return config_; }
  /// Number of decode+preprocess operations performed (cache misses).
  std::size_t decode_count() const { return decodes_; }

 private:
  PreprocessConfig config_;
  ImageLoader loader_;
  bool cache_enabled_;
  std::unordered_map<std::string, Tensor<float>::Vector> cache_;
  std::size_t decodes_ = 0;
};

struct BatchOptions {
  Index batch_size = 32;
  std::uint64_t seed = 0;
  bool training = false;  // shuffle and augment
  bool augment = true;    // augmentation switch, only consulted when training
  AugmentConfig augment_config;
};

struct Batch {
  Tensor<float> images;               // [B,C,size,size]
  Tensor<float> labels;               // [B,L] in {0,1}
  std::vector<std::size_t> indices;   // manifest record indices, row-aligned
};

/// Record visiting order for one epoch: a permutation keyed by (seed, epoch)
/// when shuffling, otherwise 0..n-1.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::int64_t epoch, bool shuffle);

/// Yields every record of the manifest exactly once per epoch in batches of
/// batch_size (the last may be short). Intensity labels are binarized.
class BatchStream {
 public:
  BatchStream(const Manifest& manifest, SampleStore& store, BatchOptions options, std::int64_t epoch);

  std::size_t batch_count() const;
  /// Fills `out` with the next batch; false once the epoch is exhausted.
  bool next(Batch& out);

 private:
  const Manifest& manifest_;
  SampleStore& store_;
  BatchOptions options_;
  std::int64_t epoch_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Throws ConfigError on an empty manifest or batch_size < 1.
BatchStream iterate_batches(const Manifest& manifest, SampleStore& store, const BatchOptions& options,
                            std::int64_t epoch);

}  // namespace aupt
