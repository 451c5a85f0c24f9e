#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aupt {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Per-sample scores and ground truth for one evaluation split, row-aligned.
struct ScoreMatrix {
  Eigen::MatrixXd scores;  // [N, L] in [0,1]
  Eigen::MatrixXi labels;  // [N, L] in {0,1}
  std::vector<std::string> subject_ids;
  std::vector<std::string> image_refs;
  int fold = 0;

  Eigen::Index rows() const { return scores.rows(); }
};

inline constexpr double kDecisionThreshold = 0.5;

/// Per-column counts; a prediction is positive iff score >= threshold.
/// Throws ContractError on shape mismatch or non-binary labels.
std::vector<ConfusionCounts> confusion_counts(const Eigen::MatrixXd& scores, const Eigen::MatrixXi& labels,
                                              double threshold = kDecisionThreshold);

/// 2 tp / (2 tp + fp + fn); 0 when the denominator is 0.
double f1_score(const ConfusionCounts& c);

/// Area under the ROC curve as the Mann-Whitney statistic
/// P(s+ > s-) + P(s+ == s-)/2, via midranks. nullopt when a class is missing.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Average precision: sum over distinct thresholds (descending) of
/// (recall_k - recall_{k-1}) * precision_k. nullopt without positives.
std::optional<double> pr_auc(std::span<const double> scores, std::span<const int> labels);

struct AuMetrics {
  std::string name;
  ConfusionCounts counts;
  double f1 = 0.0;
  std::optional<double> roc_auc;
  std::optional<double> pr_auc;
};

struct MetricSummary {
  std::vector<AuMetrics> per_au;
  double macro_f1 = 0.0;
  std::optional<double> macro_roc_auc;  // mean over AUs where defined
  std::optional<double> macro_pr_auc;
};

MetricSummary summarize(const ScoreMatrix& m, const std::vector<std::string>& au_names,
                        double threshold = kDecisionThreshold);

struct Provenance {
  std::vector<int> folds;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string source;
};

struct MetricsReport {
  std::vector<std::string> au_names;
  MetricSummary pooled;         // canonical: metrics over concatenated fold predictions
  MetricSummary fold_averaged;  // per-AU metric averaged over folds
  std::vector<MetricSummary> per_fold;
  Provenance provenance;
};

/// Pools the fold score matrices and computes per-AU and macro metrics.
/// Throws ContractError if two folds share a subject or widths disagree.
MetricsReport build_report(std::span<const ScoreMatrix> folds, const std::vector<std::string>& au_names,
                           Provenance provenance = {});

/// Aligned text table: one row per metric, per-AU columns plus Avg, values x100 to one decimal.
std::string render_table(const MetricsReport& report);
std::string render_csv(const MetricsReport& report);

/// Formats a [0,1] metric as x100 with one decimal; "NA" when absent.
std::string percent(std::optional<double> value);

// Predictions file: `fold,subject_id,image_path,score:<AU>...,label:<AU>...`,
// optionally preceded by `# key=value` lines.

void save_predictions(std::span<const ScoreMatrix> folds, const std::vector<std::string>& au_names,
                      const std::filesystem::path& path, const std::string& config_hash = {});

struct PredictionSet {
  std::vector<std::string> au_names;
  std::vector<ScoreMatrix> folds;  // ordered by fold id
};

PredictionSet load_predictions(const std::filesystem::path& path);

// Score tables: rows of per-AU values already in percent, as printed in
// published result tables. The Avg column is always recomputed.

struct ScoreTable {
  std::string title;
  std::vector<std::string> columns;
  std::vector<std::string> row_names;
  std::vector<std::vector<double>> rows;

  double row_mean(std::size_t row) const;
};

/// CSV with header `<title>,<col>...`; an `Avg` column, if present, is ignored.
ScoreTable load_score_table(const std::filesystem::path& path);
std::string render_score_table(const ScoreTable& table);

}  // namespace aupt
