#include "aupt/trainer.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "aupt/checkpoint.hpp"
#include "aupt/errors.hpp"
#include "aupt/ops.hpp"
#include "aupt/random.hpp"

namespace aupt {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void require_width(const Net& net, const Manifest& data, const char* what) {
  if (std::size_t(net.num_outputs()) != data.label_width()) {
    throw ConfigError(std::string(what) + ": network has " + std::to_string(net.num_outputs()) +
                      " outputs but the manifest has " + std::to_string(data.label_width()) + " label columns");
  }
}

BatchOptions batch_options(const TrainConfig& cfg, bool training) {
  BatchOptions o;
  o.batch_size = cfg.batch_size;
  o.seed = cfg.seed;
  o.training = training;
  o.augment = cfg.augment;
  o.augment_config = cfg.augment_config;
  return o;
}

std::uint64_t fold_key(int fold) { return std::uint64_t(std::int64_t(fold) + 1); }

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0.0 && std::isfinite(lr))) throw ConfigError("lr must be finite and >= 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must be in (0,1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must be in (0,1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (early_stop_patience && *early_stop_patience < 1) throw ConfigError("patience must be >= 1");
  if (!(convergence_tol > 0.0)) throw ConfigError("convergence_tol must be positive");
  if (convergence_window < 1) throw ConfigError("convergence_window must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must be in (0,1)");
  if (augment) augment_config.validate();
}

TrainConfig pretrain_defaults() { return TrainConfig{}; }

TrainConfig finetune_defaults() {
  TrainConfig c;
  c.lr = 1e-4;
  c.max_epochs = 200;
  c.early_stop_patience = 10;
  return c;
}

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::Converged: return "converged";
    case StopReason::MaxEpochs: return "max_epochs";
    case StopReason::EarlyStopped: return "early_stopped";
  }
  return "?";
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Train: return "train";
    case Phase::Validate: return "validate";
    case Phase::Evaluate: return "evaluate";
  }
  return "?";
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

bool EarlyStopping::update(double loss) {
  ++seen_;
  if (seen_ == 1 || loss < best_) {
    best_ = loss;
    best_epoch_ = seen_;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

bool has_converged(const std::vector<EpochRecord>& epochs, int window, double tol) {
  if (epochs.size() <= std::size_t(window)) return false;
  const double before = epochs[epochs.size() - 1 - std::size_t(window)].train_loss;
  const double now = epochs.back().train_loss;
  if (before <= 0.0) return true;
  return (before - now) / before < tol;
}

double train_epoch(Net& net, AdamState<float>& opt, const Manifest& data, SampleStore& store, const TrainConfig& cfg,
                   int epoch, const TrainHooks& hooks, int fold) {
  require_width(net, data, "train_epoch");
  auto params = net.parameters();
  BatchStream stream(data, store, batch_options(cfg, true), epoch);
  Batch batch;
  double total = 0.0;
  std::size_t seen = 0;
  std::uint64_t b = 0;
  while (stream.next(batch)) {
    if (hooks.on_batch) hooks.on_batch(Phase::Train, fold, data, batch);
    auto rng = keyed_rng(cfg.seed, {0x64726f70ULL, fold_key(fold), std::uint64_t(epoch), b++});
    net.zero_grad();
    auto loss = bce_loss(net.forward(batch.images, cfg.dropout, rng), batch.labels);
    loss.backward();
    adam_step<float>(params, opt);
    const auto n = batch.indices.size();
    total += double(loss.item()) * double(n);
    seen += n;
  }
  net.zero_grad();
  return total / double(seen);
}

double evaluate_loss(const Net& net, const Manifest& data, SampleStore& store, int batch_size,
                     const TrainHooks& hooks, int fold, Phase phase) {
  require_width(net, data, "evaluate_loss");
  BatchOptions o;
  o.batch_size = batch_size;
  BatchStream stream(data, store, o, 0);
  Batch batch;
  double total = 0.0;
  std::size_t seen = 0;
  while (stream.next(batch)) {
    if (hooks.on_batch) hooks.on_batch(phase, fold, data, batch);
    NoGradGuard guard;
    const auto loss = bce_loss(net.predict(batch.images), batch.labels);
    total += double(loss.item()) * double(batch.indices.size());
    seen += batch.indices.size();
  }
  return total / double(seen);
}

PretrainResult pretrain(const Net& net, const Manifest& data, const TrainConfig& cfg, SampleStore& store,
                        const TrainHooks& hooks) {
  cfg.validate();
  require_width(net, data, "pretrain");
  auto split = image_holdout(data, cfg.val_fraction, cfg.seed);
  PretrainResult result{net, {}, std::move(split.train), std::move(split.test)};
  result.network.set_requires_grad(true);
  const auto params = result.network.parameters();
  auto opt = make_adam_state<float>(params, cfg.adam());

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto start = Clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_epoch(result.network, opt, result.train, store, cfg, epoch, hooks);
    rec.val_loss = evaluate_loss(result.network, result.held_out, store, cfg.batch_size, hooks, -1, Phase::Evaluate);
    rec.wall_seconds = seconds_since(start);
    result.history.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(-1, rec);
    if (has_converged(result.history.epochs, cfg.convergence_window, cfg.convergence_tol)) {
      result.history.stop_reason = StopReason::Converged;
      return result;
    }
  }
  result.history.stop_reason = StopReason::MaxEpochs;
  return result;
}

FinetuneResult finetune(const Net& pretrained, const Manifest& data, const FoldAssignment& folds,
                        const TrainConfig& cfg, SampleStore& store, const FinetuneOptions& options,
                        const TrainHooks& hooks) {
  cfg.validate();
  if (folds.k < 2) throw ConfigError("fold assignment has k < 2");
  for (const auto& s : data.subjects()) {
    if (!folds.fold_of_subject.contains(s)) throw ConfigError("subject '" + s + "' has no fold assignment");
  }
  const int width = int(data.label_width());
  const int patience = cfg.early_stop_patience.value_or(std::numeric_limits<int>::max());

  FinetuneResult result;
  for (int fold = 0; fold < folds.k; ++fold) {
    auto split = fold_split(data, folds, fold);
    auto tv = subject_holdout(split.train, cfg.val_fraction, splitmix64(cfg.seed ^ fold_key(fold)));
    const Manifest& train = tv.train;
    const Manifest& val = tv.test;

    Net net = pretrained.num_outputs() == width ? pretrained
                                                : replace_head(pretrained, width, options.head_seed + fold_key(fold));
    net.set_requires_grad(true);
    const auto params = net.parameters();
    auto opt = make_adam_state<float>(params, cfg.adam());
    EarlyStopping stopper(patience);
    Net best = net;
    TrainHistory history;
    history.stop_reason = StopReason::MaxEpochs;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
      const auto start = Clock::now();
      EpochRecord rec;
      rec.epoch = epoch;
      rec.train_loss = train_epoch(net, opt, train, store, cfg, epoch, hooks, fold);
      rec.val_loss = evaluate_loss(net, val, store, cfg.batch_size, hooks, fold, Phase::Validate);
      rec.wall_seconds = seconds_since(start);
      history.epochs.push_back(rec);
      if (hooks.on_epoch) hooks.on_epoch(fold, rec);
      if (stopper.update(*rec.val_loss)) {
        best = net;
        history.best_epoch = epoch;
        if (options.checkpoint_dir) {
          std::filesystem::create_directories(*options.checkpoint_dir);
          CheckpointMetadata meta{options.config_hash, cfg.seed, epoch, {{"fold", std::to_string(fold)}}};
          save_checkpoint(best, *options.checkpoint_dir / ("fold" + std::to_string(fold) + ".aupt"), meta);
        }
      }
      if (stopper.should_stop()) {
        history.stop_reason = StopReason::EarlyStopped;
        break;
      }
    }
    best.set_requires_grad(false);
    if (options.history_dir) {
      std::filesystem::create_directories(*options.history_dir);
      write_history_jsonl(history, *options.history_dir / ("fold" + std::to_string(fold) + ".jsonl"),
                          options.config_hash, fold);
    }
    result.networks.push_back(std::move(best));
    result.histories.push_back(std::move(history));
  }
  return result;
}

ScoreMatrix evaluate_model(const Net& net, const Manifest& test, SampleStore& store, int batch_size,
                           const TrainHooks& hooks, int fold) {
  require_width(net, test, "evaluate_model");
  const auto n = Eigen::Index(test.size());
  const auto width = Eigen::Index(test.label_width());
  ScoreMatrix out;
  out.fold = fold < 0 ? 0 : fold;
  out.scores.resize(n, width);
  out.labels.resize(n, width);
  if (n == 0) return out;

  BatchOptions o;
  o.batch_size = batch_size;
  BatchStream stream(test, store, o, 0);
  Batch batch;
  while (stream.next(batch)) {
    if (hooks.on_batch) hooks.on_batch(Phase::Evaluate, fold, test, batch);
    const auto pred = net.predict(batch.images);
    const auto probs = pred.matrix(pred.dim(0), pred.dim(1));
    const auto labels = batch.labels.matrix(batch.labels.dim(0), batch.labels.dim(1));
    for (std::size_t b = 0; b < batch.indices.size(); ++b) {
      const auto row = Eigen::Index(batch.indices[b]);
      out.scores.row(row) = probs.row(Eigen::Index(b)).cast<double>();
      out.labels.row(row) = labels.row(Eigen::Index(b)).cast<int>();
    }
  }
  for (const auto& r : test.records) {
    out.subject_ids.push_back(r.subject_id);
    out.image_refs.push_back(r.image_ref);
  }
  return out;
}

std::vector<ScoreMatrix> evaluate_folds(const FinetuneResult& result, const Manifest& data,
                                        const FoldAssignment& folds, SampleStore& store, int batch_size,
                                        const TrainHooks& hooks) {
  if (result.networks.size() != std::size_t(folds.k)) {
    throw ConfigError("have " + std::to_string(result.networks.size()) + " fold networks for k=" +
                      std::to_string(folds.k));
  }
  std::vector<ScoreMatrix> out;
  for (int fold = 0; fold < folds.k; ++fold) {
    const auto split = fold_split(data, folds, fold);
    out.push_back(evaluate_model(result.networks[std::size_t(fold)], split.test, store, batch_size, hooks, fold));
  }
  return out;
}

void write_history_jsonl(const TrainHistory& history, const std::filesystem::path& path,
                         const std::string& config_hash, int fold) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write history log " + path.string());
  using nlohmann::json;
  const auto now_ms = [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
  out << json{{"config_hash", config_hash}, {"fold", fold}}.dump() << '\n';
  for (const auto& e : history.epochs) {
    json line{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"wall_seconds", e.wall_seconds},
              {"timestamp_ms", now_ms()}};
    line["val_loss"] = e.val_loss ? json(*e.val_loss) : json(nullptr);
    out << line.dump() << '\n';
  }
  out << json{{"stop_reason", to_string(history.stop_reason)}, {"best_epoch", history.best_epoch},
              {"epochs", history.epochs.size()}}
             .dump()
      << '\n';
}

}  // namespace aupt
