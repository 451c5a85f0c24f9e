#include "aupt/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "aupt/csv.hpp"
#include "aupt/errors.hpp"
#include "aupt/random.hpp"

namespace aupt {

std::string_view to_string(AblationAxis axis) { return axis == AblationAxis::Images ? "images" : "subjects"; }

AblationAxis parse_axis(std::string_view text) {
  if (text == "images") return AblationAxis::Images;
  if (text == "subjects") return AblationAxis::Subjects;
  throw ConfigError("unknown ablation axis '" + std::string(text) + "' (expected images or subjects)");
}

std::vector<std::size_t> default_grid(AblationAxis axis) {
  if (axis == AblationAxis::Images) return {1000, 2000, 10000, kAll};
  return {12, 200, 600, 1000, kAll};
}

std::vector<std::size_t> parse_grid(std::string_view text) {
  std::vector<std::size_t> grid;
  for (const auto& field : csv::split_line(text)) {
    if (field == "all") {
      grid.push_back(kAll);
      continue;
    }
    try {
      std::size_t used = 0;
      const long long v = std::stoll(field, &used);
      if (used != field.size() || v < 0) throw std::invalid_argument(field);
      grid.push_back(std::size_t(v));
    } catch (const std::logic_error&) {
      throw ConfigError("bad grid value '" + field + "'");
    }
  }
  if (grid.empty()) throw ConfigError("empty ablation grid");
  return grid;
}

std::string grid_label(std::size_t size) { return size == kAll ? "all" : std::to_string(size); }

Manifest ablation_subset(const Manifest& pool, AblationAxis axis, std::size_t size, const AblationSetup& setup,
                         std::uint64_t seed) {
  if (size == 0) return pool.subset({});
  if (axis == AblationAxis::Images) {
    if (size == kAll) return pool;
    return sample_by_images(pool, size, setup.gender_balanced, seed);
  }
  const std::size_t n_subjects = size == kAll ? pool.subjects().size() : size;
  const std::size_t target = setup.subject_axis_images;
  if (target == 0) return sample_by_subjects(pool, n_subjects, setup.gender_balanced, seed);
  // Spread the fixed image budget evenly over the chosen subjects.
  const std::size_t cap = (target + n_subjects - 1) / n_subjects;
  Manifest chosen = sample_by_subjects(pool, n_subjects, setup.gender_balanced, seed, cap);
  if (chosen.size() < target) {
    throw ConfigError(std::to_string(n_subjects) + " subjects provide " + std::to_string(chosen.size()) +
                      " images, fewer than the fixed budget of " + std::to_string(target));
  }
  return sample_by_images(chosen, target, setup.gender_balanced, splitmix64(seed));
}

AblationPoint run_ablation_point(const Manifest& pool, const Manifest& target, AblationAxis axis, std::size_t size,
                                 const AblationSetup& setup, std::uint64_t seed, SampleStore& pool_store,
                                 SampleStore& target_store) {
  AblationPoint point;
  point.axis = axis;
  point.requested = size;
  point.seed = seed;

  Net net = build_vgg13<float>(setup.in_channels, int(pool.label_width()), seed, setup.width_divisor);
  if (size != 0) {
    const Manifest subset = ablation_subset(pool, axis, size, setup, seed);
    point.images = subset.size();
    point.subjects = subset.subjects().size();
    TrainConfig cfg = setup.pretrain;
    cfg.seed = seed;
    auto pre = pretrain(net, subset, cfg, pool_store);
    point.pretrain_epochs = int(pre.history.epochs.size());
    net = std::move(pre.network);
  }

  TrainConfig ft = setup.finetune;
  ft.seed = seed;
  const auto folds = subject_kfold(target, setup.folds, seed);
  FinetuneOptions opts;
  opts.head_seed = splitmix64(seed ^ 0x68656164ULL);
  opts.config_hash = setup.config_hash;
  const auto tuned = finetune(net, target, folds, ft, target_store, opts);
  const auto scores = evaluate_folds(tuned, target, folds, target_store, ft.batch_size);
  Provenance prov;
  prov.config_hash = setup.config_hash;
  prov.seed = seed;
  prov.source = std::string(to_string(axis)) + "=" + grid_label(size);
  point.report = build_report(scores, target.au_columns, prov);
  return point;
}

std::vector<AblationPoint> run_ablation(const Manifest& pool, const Manifest& target, AblationAxis axis,
                                        const std::vector<std::size_t>& grid, const AblationSetup& setup,
                                        const std::vector<std::uint64_t>& seeds, SampleStore& pool_store,
                                        SampleStore& target_store, const AblationProgress& progress) {
  std::vector<AblationPoint> out;
  for (const auto seed : seeds) {
    for (const auto size : grid) {
      out.push_back(run_ablation_point(pool, target, axis, size, setup, seed, pool_store, target_store));
      if (progress) progress(out.back());
    }
  }
  return out;
}

std::string render_series_csv(const std::vector<AblationPoint>& points, const std::string& config_hash) {
  std::ostringstream out;
  out << "# config_hash=" << config_hash << '\n';
  out << "axis,size,seed,images,subjects,pretrain_epochs,f1,roc_auc,pr_auc\n";
  char buf[32];
  auto num = [&](std::optional<double> v) -> std::string {
    if (!v) return "NA";
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
  };
  for (const auto& p : points) {
    out << csv::join({std::string(to_string(p.axis)), grid_label(p.requested), std::to_string(p.seed),
                      std::to_string(p.images), std::to_string(p.subjects), std::to_string(p.pretrain_epochs),
                      num(p.report.pooled.macro_f1), num(p.report.pooled.macro_roc_auc),
                      num(p.report.pooled.macro_pr_auc)})
        << '\n';
  }
  return out.str();
}

std::vector<SeriesSummary> summarize_series(const std::vector<AblationPoint>& points) {
  std::vector<SeriesSummary> out;
  for (const auto& p : points) {
    auto it = std::find_if(out.begin(), out.end(), [&](const SeriesSummary& s) { return s.size == p.requested; });
    if (it == out.end()) {
      out.push_back({p.requested, 0.0, 0.0, {}});
      it = out.end() - 1;
    }
    it->f1.push_back(p.report.pooled.macro_f1);
  }
  for (auto& s : out) {
    double total = 0.0;
    for (double v : s.f1) total += v;
    s.mean_f1 = total / double(s.f1.size());
    auto sorted = s.f1;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    s.median_f1 = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  }
  return out;
}

}  // namespace aupt
