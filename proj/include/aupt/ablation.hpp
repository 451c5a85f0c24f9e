#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "aupt/metrics.hpp"
#include "aupt/trainer.hpp"

namespace aupt {

enum class AblationAxis { Images, Subjects };
std::string_view to_string(AblationAxis axis);
AblationAxis parse_axis(std::string_view text);

/// Grid value meaning "the whole pool".
inline constexpr std::size_t kAll = std::numeric_limits<std::size_t>::max();

/// {1000, 2000, 10000, all} for images; {12, 200, 600, 1000, all} for subjects.
std::vector<std::size_t> default_grid(AblationAxis axis);
/// Comma-separated sizes; "all" maps to kAll and 0 to a randomly initialized network.
std::vector<std::size_t> parse_grid(std::string_view text);
std::string grid_label(std::size_t size);

struct AblationSetup {
  TrainConfig pretrain = pretrain_defaults();
  TrainConfig finetune = finetune_defaults();
  int folds = 3;
  int in_channels = 1;
  int width_divisor = 1;
  bool gender_balanced = true;
  // Subjects axis: images drawn from the chosen subjects; 0 keeps all of them.
  std::size_t subject_axis_images = 0;
  std::string config_hash;
};

struct AblationPoint {
  AblationAxis axis = AblationAxis::Images;
  std::size_t requested = 0;
  std::uint64_t seed = 0;
  std::size_t images = 0;    // pre-training images actually used
  std::size_t subjects = 0;  // distinct pre-training subjects
  int pretrain_epochs = 0;
  MetricsReport report;
};

/// Pre-training subset for one grid point (empty for size 0).
Manifest ablation_subset(const Manifest& pool, AblationAxis axis, std::size_t size, const AblationSetup& setup,
                         std::uint64_t seed);

/// Fresh pre-training on the subset (or random init for size 0), then the
/// shared fine-tune protocol on `target` with subject k-fold CV keyed by seed.
AblationPoint run_ablation_point(const Manifest& pool, const Manifest& target, AblationAxis axis, std::size_t size,
                                 const AblationSetup& setup, std::uint64_t seed, SampleStore& pool_store,
                                 SampleStore& target_store);

using AblationProgress = std::function<void(const AblationPoint&)>;

std::vector<AblationPoint> run_ablation(const Manifest& pool, const Manifest& target, AblationAxis axis,
                                        const std::vector<std::size_t>& grid, const AblationSetup& setup,
                                        const std::vector<std::uint64_t>& seeds, SampleStore& pool_store,
                                        SampleStore& target_store, const AblationProgress& progress = {});

/// One row per (point, seed): axis,size,seed,images,subjects,f1,roc_auc,pr_auc.
std::string render_series_csv(const std::vector<AblationPoint>& points, const std::string& config_hash);

struct SeriesSummary {
  std::size_t size = 0;
  double mean_f1 = 0.0;
  double median_f1 = 0.0;
  std::vector<double> f1;  // per seed, in run order
};

/// Per grid size, in first-seen order.
std::vector<SeriesSummary> summarize_series(const std::vector<AblationPoint>& points);

}  // namespace aupt
