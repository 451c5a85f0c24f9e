#include "aupt/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "aupt/csv.hpp"
#include "aupt/errors.hpp"

namespace aupt {
namespace {

void check_binary_labels(std::span<const int> labels) {
  for (int l : labels) {
    if (l != 0 && l != 1) throw ContractError("labels must be binary, found " + std::to_string(l));
  }
}

std::optional<double> mean_defined(const std::vector<std::optional<double>>& values) {
  double total = 0.0;
  int n = 0;
  for (const auto& v : values) {
    if (v) {
      total += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return total / n;
}

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

// Aligned table: first column left-aligned, the rest right-aligned.
std::string align(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> widths;
  for (const auto& row : cells) {
    if (widths.size() < row.size()) widths.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  std::string out;
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) line += " | ";
      line += c == 0 ? pad_right(row[c], widths[c]) : pad_left(row[c], widths[c]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  }
  return out;
}

std::vector<std::string> summary_row(const MetricSummary& s, const std::string& metric) {
  std::vector<std::string> row;
  for (const auto& au : s.per_au) {
    if (metric == "F1") row.push_back(percent(au.f1));
    else if (metric == "ROC-AUC") row.push_back(percent(au.roc_auc));
    else row.push_back(percent(au.pr_auc));
  }
  if (metric == "F1") row.push_back(percent(s.macro_f1));
  else if (metric == "ROC-AUC") row.push_back(percent(s.macro_roc_auc));
  else row.push_back(percent(s.macro_pr_auc));
  return row;
}

}  // namespace

std::vector<ConfusionCounts> confusion_counts(const Eigen::MatrixXd& scores, const Eigen::MatrixXi& labels,
                                              double threshold) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols()) {
    throw ContractError("score matrix and label matrix shapes differ");
  }
  std::vector<ConfusionCounts> out(std::size_t(scores.cols()));
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    auto& k = out[std::size_t(c)];
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
      const int truth = labels(r, c);
      if (truth != 0 && truth != 1) throw ContractError("labels must be binary");
      const bool predicted = scores(r, c) >= threshold;
      if (predicted && truth) ++k.tp;
      else if (predicted) ++k.fp;
      else if (truth) ++k.fn;
      else ++k.tn;
    }
  }
  return out;
}

double f1_score(const ConfusionCounts& c) {
  const std::int64_t denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 0.0 : double(2 * c.tp) / double(denom);
}

std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ContractError("roc_auc: scores and labels differ in length");
  check_binary_labels(labels);
  const auto n = scores.size();
  const auto positives = std::size_t(std::count(labels.begin(), labels.end(), 1));
  const auto negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * double(i + j) + 1.0;  // 1-based
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[order[t]] == 1) positive_rank_sum += midrank;
    }
    i = j + 1;
  }
  const double p = double(positives), q = double(negatives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

std::optional<double> pr_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ContractError("pr_auc: scores and labels differ in length");
  check_binary_labels(labels);
  const auto n = scores.size();
  const auto positives = std::size_t(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp)++;
      ++j;
    }
    const double recall = double(tp) / double(positives);
    const double precision = double(tp) / double(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

MetricSummary summarize(const ScoreMatrix& m, const std::vector<std::string>& au_names, double threshold) {
  if (std::size_t(m.scores.cols()) != au_names.size()) {
    throw ContractError("score matrix has " + std::to_string(m.scores.cols()) + " columns for " +
                        std::to_string(au_names.size()) + " AU names");
  }
  MetricSummary s;
  const auto counts = confusion_counts(m.scores, m.labels, threshold);
  std::vector<std::optional<double>> rocs, prs;
  double f1_total = 0.0;
  for (std::size_t c = 0; c < au_names.size(); ++c) {
    const Eigen::VectorXd scores = m.scores.col(Eigen::Index(c));
    const Eigen::VectorXi labels = m.labels.col(Eigen::Index(c));
    std::span<const double> sv(scores.data(), std::size_t(scores.size()));
    std::span<const int> lv(labels.data(), std::size_t(labels.size()));
    AuMetrics au{au_names[c], counts[c], f1_score(counts[c]), roc_auc(sv, lv), pr_auc(sv, lv)};
    f1_total += au.f1;
    rocs.push_back(au.roc_auc);
    prs.push_back(au.pr_auc);
    s.per_au.push_back(std::move(au));
  }
  s.macro_f1 = au_names.empty() ? 0.0 : f1_total / double(au_names.size());
  s.macro_roc_auc = mean_defined(rocs);
  s.macro_pr_auc = mean_defined(prs);
  return s;
}

MetricsReport build_report(std::span<const ScoreMatrix> folds, const std::vector<std::string>& au_names,
                           Provenance provenance) {
  if (folds.empty()) throw ContractError("build_report needs at least one fold");
  std::map<std::string, int> owner;
  Eigen::Index total = 0;
  for (const auto& f : folds) {
    if (std::size_t(f.scores.cols()) != au_names.size() || f.labels.cols() != f.scores.cols() ||
        f.labels.rows() != f.scores.rows()) {
      throw ContractError("fold " + std::to_string(f.fold) + " has inconsistent score/label shapes");
    }
    for (const auto& s : std::set<std::string>(f.subject_ids.begin(), f.subject_ids.end())) {
      auto [it, fresh] = owner.emplace(s, f.fold);
      if (!fresh) {
        throw ContractError("subject '" + s + "' appears in folds " + std::to_string(it->second) + " and " +
                            std::to_string(f.fold));
      }
    }
    total += f.rows();
  }

  ScoreMatrix pooled;
  pooled.scores.resize(total, Eigen::Index(au_names.size()));
  pooled.labels.resize(total, Eigen::Index(au_names.size()));
  Eigen::Index row = 0;
  for (const auto& f : folds) {
    pooled.scores.middleRows(row, f.rows()) = f.scores;
    pooled.labels.middleRows(row, f.rows()) = f.labels;
    row += f.rows();
  }

  MetricsReport report;
  report.au_names = au_names;
  report.pooled = summarize(pooled, au_names);
  for (const auto& f : folds) report.per_fold.push_back(summarize(f, au_names));

  // Fold average: mean of each per-AU metric across folds.
  auto& avg = report.fold_averaged;
  std::vector<std::optional<double>> macro_roc, macro_pr;
  for (std::size_t c = 0; c < au_names.size(); ++c) {
    AuMetrics au;
    au.name = au_names[c];
    std::vector<std::optional<double>> rocs, prs;
    for (const auto& s : report.per_fold) {
      au.counts += s.per_au[c].counts;
      au.f1 += s.per_au[c].f1 / double(report.per_fold.size());
      rocs.push_back(s.per_au[c].roc_auc);
      prs.push_back(s.per_au[c].pr_auc);
    }
    au.roc_auc = mean_defined(rocs);
    au.pr_auc = mean_defined(prs);
    avg.macro_f1 += au.f1 / double(au_names.size());
    macro_roc.push_back(au.roc_auc);
    macro_pr.push_back(au.pr_auc);
    avg.per_au.push_back(std::move(au));
  }
  avg.macro_roc_auc = mean_defined(macro_roc);
  avg.macro_pr_auc = mean_defined(macro_pr);

  if (provenance.folds.empty()) {
    for (const auto& f : folds) provenance.folds.push_back(f.fold);
  }
  report.provenance = std::move(provenance);
  return report;
}

std::string percent(std::optional<double> value) { return value ? fixed1(*value * 100.0) : "NA"; }

std::string render_table(const MetricsReport& report) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {"Metric"};
  header.insert(header.end(), report.au_names.begin(), report.au_names.end());
  header.push_back("Avg");
  cells.push_back(header);
  for (const std::string metric : {"F1", "ROC-AUC", "PR-AUC"}) {
    std::vector<std::string> row = {metric};
    auto values = summary_row(report.pooled, metric);
    row.insert(row.end(), values.begin(), values.end());
    cells.push_back(std::move(row));
  }
  std::ostringstream out;
  out << align(cells);
  out << "pooled over folds";
  for (int f : report.provenance.folds) out << ' ' << f;
  out << "; config " << (report.provenance.config_hash.empty() ? "-" : report.provenance.config_hash) << "; seed "
      << report.provenance.seed << '\n';
  return out.str();
}

std::string render_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "# config_hash=" << report.provenance.config_hash << '\n';
  out << "# seed=" << report.provenance.seed << '\n';
  out << "# folds=";
  for (std::size_t i = 0; i < report.provenance.folds.size(); ++i) {
    out << (i ? ";" : "") << report.provenance.folds[i];
  }
  out << '\n';
  if (!report.provenance.source.empty()) out << "# source=" << report.provenance.source << '\n';

  std::vector<std::string> header = {"scope", "metric"};
  header.insert(header.end(), report.au_names.begin(), report.au_names.end());
  header.push_back("Avg");
  out << csv::join(header) << '\n';
  auto emit = [&](const std::string& scope, const MetricSummary& s) {
    for (const std::string metric : {"F1", "ROC-AUC", "PR-AUC"}) {
      std::vector<std::string> row = {scope, metric};
      auto values = summary_row(s, metric);
      row.insert(row.end(), values.begin(), values.end());
      out << csv::join(row) << '\n';
    }
  };
  emit("pooled", report.pooled);
  emit("fold_mean", report.fold_averaged);
  for (std::size_t i = 0; i < report.per_fold.size(); ++i) {
    const int id = i < report.provenance.folds.size() ? report.provenance.folds[i] : int(i);
    emit("fold" + std::to_string(id), report.per_fold[i]);
  }
  return out.str();
}

void save_predictions(std::span<const ScoreMatrix> folds, const std::vector<std::string>& au_names,
                      const std::filesystem::path& path, const std::string& config_hash) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write predictions " + path.string());
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  std::vector<std::string> header = {"fold", "subject_id", "image_path"};
  for (const auto& a : au_names) header.push_back("score:" + a);
  for (const auto& a : au_names) header.push_back("label:" + a);
  out << csv::join(header) << '\n';
  char buf[40];
  for (const auto& f : folds) {
    for (Eigen::Index r = 0; r < f.rows(); ++r) {
      std::vector<std::string> row = {std::to_string(f.fold),
                                      std::size_t(r) < f.subject_ids.size() ? f.subject_ids[std::size_t(r)] : "",
                                      std::size_t(r) < f.image_refs.size() ? f.image_refs[std::size_t(r)] : ""};
      for (Eigen::Index c = 0; c < f.scores.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", f.scores(r, c));
        row.push_back(buf);
      }
      for (Eigen::Index c = 0; c < f.labels.cols(); ++c) row.push_back(std::to_string(f.labels(r, c)));
      out << csv::join(row) << '\n';
    }
  }
}

PredictionSet load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open predictions " + path.string(), 0);
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') {
      have_header = true;
      break;
    }
  }
  if (!have_header) throw ParseError("predictions file " + path.string() + " is empty", 0);
  const auto header = csv::split_line(line);
  if (header.size() < 5 || header[0] != "fold" || header[1] != "subject_id" || header[2] != "image_path" ||
      (header.size() - 3) % 2 != 0) {
    throw ParseError("predictions header must be fold,subject_id,image_path,score:<AU>...,label:<AU>...", 0);
  }
  const std::size_t width = (header.size() - 3) / 2;
  PredictionSet set;
  for (std::size_t c = 0; c < width; ++c) {
    const auto& s = header[3 + c];
    const auto& l = header[3 + width + c];
    if (s.rfind("score:", 0) != 0 || l != "label:" + s.substr(6)) {
      throw ParseError("predictions header column mismatch at '" + s + "'", 0);
    }
    set.au_names.push_back(s.substr(6));
  }

  std::map<int, std::vector<std::vector<std::string>>> rows_by_fold;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    auto fields = csv::split_line(line);
    if (fields.size() != header.size()) throw ParseError("row " + std::to_string(row) + ": wrong field count", row);
    try {
      rows_by_fold[std::stoi(fields[0])].push_back(std::move(fields));
    } catch (const std::logic_error&) {
      throw ParseError("row " + std::to_string(row) + ": bad fold id", row);
    }
  }
  for (auto& [fold, rows] : rows_by_fold) {
    ScoreMatrix m;
    m.fold = fold;
    m.scores.resize(Eigen::Index(rows.size()), Eigen::Index(width));
    m.labels.resize(Eigen::Index(rows.size()), Eigen::Index(width));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      m.subject_ids.push_back(rows[r][1]);
      m.image_refs.push_back(rows[r][2]);
      for (std::size_t c = 0; c < width; ++c) {
        try {
          m.scores(Eigen::Index(r), Eigen::Index(c)) = std::stod(rows[r][3 + c]);
          m.labels(Eigen::Index(r), Eigen::Index(c)) = std::stoi(rows[r][3 + width + c]);
        } catch (const std::logic_error&) {
          throw ParseError("fold " + std::to_string(fold) + ": non-numeric score or label", 0);
        }
      }
    }
    set.folds.push_back(std::move(m));
  }
  return set;
}

double ScoreTable::row_mean(std::size_t row) const {
  const auto& v = rows.at(row);
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

ScoreTable load_score_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open score table " + path.string(), 0);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("score table " + path.string() + " is empty", 0);
  const auto header = csv::split_line(line);
  if (header.size() < 2) throw ParseError("score table needs a title column and at least one value column", 0);
  ScoreTable table;
  table.title = header[0];
  std::vector<std::size_t> keep;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c] == "Avg") continue;
    keep.push_back(c);
    table.columns.push_back(header[c]);
  }
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    const auto fields = csv::split_line(line);
    if (fields.size() != header.size()) throw ParseError("row " + std::to_string(row) + ": wrong field count", row);
    table.row_names.push_back(fields[0]);
    std::vector<double> values;
    for (std::size_t c : keep) {
      try {
        values.push_back(std::stod(fields[c]));
      } catch (const std::logic_error&) {
        throw ParseError("row " + std::to_string(row) + ", column '" + header[c] + "': not a number", row);
      }
    }
    table.rows.push_back(std::move(values));
  }
  return table;
}

std::string render_score_table(const ScoreTable& table) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {table.title};
  header.insert(header.end(), table.columns.begin(), table.columns.end());
  header.push_back("Avg");
  cells.push_back(std::move(header));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    std::vector<std::string> row = {table.row_names[r]};
    for (double v : table.rows[r]) row.push_back(fixed1(v));
    row.push_back(fixed1(table.row_mean(r)));
    cells.push_back(std::move(row));
  }
  return align(cells);
}

}  // namespace aupt
