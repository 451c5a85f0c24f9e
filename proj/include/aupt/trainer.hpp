#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aupt/adam.hpp"
#include "aupt/datapipe.hpp"
#include "aupt/manifest.hpp"
#include "aupt/metrics.hpp"
#include "aupt/network.hpp"
#include "aupt/splits.hpp"

namespace aupt {

using Net = Network<float>;

struct TrainConfig {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 32;
  int max_epochs = 500;
  std::optional<int> early_stop_patience;
  double convergence_tol = 1e-4;
  int convergence_window = 5;
  // Pre-training: image-level test split. Fine-tuning: subject-level validation slice.
  double val_fraction = 0.05;
  std::uint64_t seed = 0;
  bool augment = true;
  // Off only for reduced-width runs, where 0.5 FC dropout stalls learning.
  bool dropout = true;
  AugmentConfig augment_config;

  AdamConfig adam() const { return {lr, beta1, beta2, eps}; }
  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// lr 0.005, batch 32, at most 500 epochs, stop on convergence, 95/5 image split.
TrainConfig pretrain_defaults();
/// lr 1e-4, batch 32, patience 10 on a 5% subject-held-out validation slice.
TrainConfig finetune_defaults();

enum class StopReason { Converged, MaxEpochs, EarlyStopped };
std::string_view to_string(StopReason r);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_loss;
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  StopReason stop_reason = StopReason::MaxEpochs;
  int best_epoch = 0;  // 0 when no validation was monitored
};

/// Patience counter on a loss that should decrease. A value counts as an
/// improvement only if strictly below the best seen so far.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);

  /// Records one epoch's loss; returns true if it is a new best.
  bool update(double loss);
  bool should_stop() const { return stale_ >= patience_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }
  int stale_epochs() const { return stale_; }

 private:
  int patience_;
  int seen_ = 0;
  int stale_ = 0;
  int best_epoch_ = 0;
  double best_ = 0.0;
};

/// Relative train-loss improvement over the last `window` epochs is below `tol`.
bool has_converged(const std::vector<EpochRecord>& epochs, int window, double tol);

enum class Phase { Train, Validate, Evaluate };
std::string_view to_string(Phase p);

/// Instrumentation callbacks; any may be empty.
struct TrainHooks {
  std::function<void(Phase, int fold, const Manifest&, const Batch&)> on_batch;
  std::function<void(int fold, const EpochRecord&)> on_epoch;
};

/// One optimization pass over `data` (shuffled, augmented per cfg). Returns
/// the sample-weighted mean training BCE.
double train_epoch(Net& net, AdamState<float>& opt, const Manifest& data, SampleStore& store, const TrainConfig& cfg,
                   int epoch, const TrainHooks& hooks = {}, int fold = -1);

/// Eval-mode mean BCE over `data` without augmentation or graph recording.
double evaluate_loss(const Net& net, const Manifest& data, SampleStore& store, int batch_size,
                     const TrainHooks& hooks = {}, int fold = -1, Phase phase = Phase::Validate);

struct PretrainResult {
  Net network;
  TrainHistory history;
  Manifest train;     // 95% split actually trained on
  Manifest held_out;  // 5% test split, loss reported per epoch
};

/// Adam/BCE training with online augmentation until convergence or max_epochs.
/// Throws ConfigError if the manifest's label width differs from the network's.
PretrainResult pretrain(const Net& net, const Manifest& data, const TrainConfig& cfg, SampleStore& store,
                        const TrainHooks& hooks = {});

struct FinetuneOptions {
  std::uint64_t head_seed = 0;
  std::optional<std::filesystem::path> checkpoint_dir;  // fold<k>.aupt at best validation
  std::optional<std::filesystem::path> history_dir;     // fold<k>.jsonl
  std::string config_hash;
};

struct FinetuneResult {
  std::vector<Net> networks;
  std::vector<TrainHistory> histories;
};

/// Per fold: train on the fold's train subjects minus a subject-held-out
/// validation slice, early-stop on validation loss and restore the best
/// weights. The head is replaced first when its width differs from the data.
/// Throws ConfigError if folds do not cover the manifest's subjects.
FinetuneResult finetune(const Net& pretrained, const Manifest& data, const FoldAssignment& folds,
                        const TrainConfig& cfg, SampleStore& store, const FinetuneOptions& options = {},
                        const TrainHooks& hooks = {});

/// Eval-mode scores for every record of `test`, in manifest order, with
/// binarized labels aligned by row.
ScoreMatrix evaluate_model(const Net& net, const Manifest& test, SampleStore& store, int batch_size = 32,
                           const TrainHooks& hooks = {}, int fold = -1);

/// Evaluates each fold network on its own test subjects.
std::vector<ScoreMatrix> evaluate_folds(const FinetuneResult& result, const Manifest& data,
                                        const FoldAssignment& folds, SampleStore& store, int batch_size = 32,
                                        const TrainHooks& hooks = {});

/// Line-delimited JSON: one header line, one line per epoch, one summary line.
void write_history_jsonl(const TrainHistory& history, const std::filesystem::path& path,
                         const std::string& config_hash, int fold = -1);

}  // namespace aupt
