// aupt: command-line driver for synthetic data, pre-training, fine-tuning,
// evaluation, ablation sweeps and report rendering.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aupt/ablation.hpp"
#include "aupt/checkpoint.hpp"
#include "aupt/config.hpp"
#include "aupt/csv.hpp"
#include "aupt/errors.hpp"
#include "aupt/metrics.hpp"
#include "aupt/synthgen.hpp"
#include "aupt/trainer.hpp"

namespace fs = std::filesystem;
using namespace aupt;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string data_root;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out) {
  cmd->add_option("-c,--config", c.config_file, "key = value config file");
  cmd->add_option("-s,--set", c.overrides, "config override key=value (repeatable)");
  cmd->add_option("--data-root", c.data_root, "base for relative input paths (default: $AUPT_DATA_ROOT)");
  auto* out = cmd->add_option("-o,--out", c.out, "output directory");
  if (needs_out) out->required();
}

RunConfig make_config(const Common& c) {
  RunConfig cfg;
  if (!c.config_file.empty()) cfg.load(c.config_file);
  cfg.apply(c.overrides);
  std::cout << "# effective config (hash " << cfg.hash() << ")\n";
  std::istringstream lines(cfg.echo());
  for (std::string line; std::getline(lines, line);) std::cout << "#   " << line << '\n';
  std::cout << std::flush;
  return cfg;
}

fs::path input_path(const Common& c, const std::string& p) {
  fs::path path(p);
  if (path.is_absolute() || fs::exists(path)) return path;
  std::string root = c.data_root;
  if (root.empty()) {
    if (const char* env = std::getenv("AUPT_DATA_ROOT")) root = env;
  }
  return root.empty() ? path : fs::path(root) / path;
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Marks an output directory incomplete until the command finishes.
class OutputDir {
 public:
  OutputDir(const fs::path& dir, const RunConfig& cfg) : dir_(dir) {
    fs::create_directories(dir_);
    write_text(marker(), "incomplete run, config " + cfg.hash() + "\n");
    write_text(dir_ / "config.txt", "# config_hash=" + cfg.hash() + "\n" + cfg.echo());
  }
  void commit() { fs::remove(marker()); }
  const fs::path& path() const { return dir_; }

 private:
  fs::path marker() const { return dir_ / "INCOMPLETE"; }
  fs::path dir_;
};

SampleStore make_store(const RunConfig& cfg) {
  PreprocessConfig p;
  p.channels = int(cfg.integer("model.in_channels"));
  return SampleStore(p);
}

CheckpointMetadata metadata(const RunConfig& cfg, std::int64_t epoch) {
  return {cfg.hash(), std::uint64_t(cfg.integer("seed")), epoch, {}};
}

void write_report(const fs::path& dir, const std::vector<ScoreMatrix>& folds, const std::vector<std::string>& aus,
                  const RunConfig& cfg, const std::string& source) {
  save_predictions(folds, aus, dir / "predictions.csv", cfg.hash());
  Provenance prov;
  prov.config_hash = cfg.hash();
  prov.seed = std::uint64_t(cfg.integer("seed"));
  prov.source = source;
  const auto report = build_report(folds, aus, prov);
  write_text(dir / "report.csv", render_csv(report));
  write_text(dir / "report.txt", render_table(report));
  std::cout << render_table(report);
}

void write_folds(const fs::path& path, const FoldAssignment& folds, const std::string& hash) {
  std::string text = "# config_hash=" + hash + "\nsubject_id,fold\n";
  for (const auto& [subject, f] : folds.fold_of_subject) text += csv::join({subject, std::to_string(f)}) + "\n";
  write_text(path, text);
}

FoldAssignment read_folds(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fold assignment " + path.string());
  FoldAssignment folds;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto f = csv::split_line(line);
    if (f.size() != 2) throw ParseError("bad fold assignment line '" + line + "'", 0);
    const int fold = std::stoi(f[1]);
    folds.fold_of_subject[f[0]] = fold;
    folds.k = std::max(folds.k, fold + 1);
  }
  return folds;
}

int run_synth(const Common& c) {
  const auto cfg = make_config(c);
  OutputDir out(c.out, cfg);
  const auto ds = generate_dataset(cfg.synth_spec(), out.path());
  std::cout << "wrote " << ds.recorded.size() << " images of " << ds.recorded.subjects().size()
            << " subjects to " << out.path() << "\n";
  out.commit();
  return 0;
}

int run_pretrain(const Common& c, const std::string& manifest_path) {
  const auto cfg = make_config(c);
  const auto data = load_manifest(input_path(c, manifest_path), cfg.label_kind());
  const auto tc = cfg.pretrain_config();
  OutputDir out(c.out, cfg);
  auto net = build_vgg13<float>(int(cfg.integer("model.in_channels")), int(data.label_width()), tc.seed,
                                int(cfg.integer("model.width_divisor")));
  auto store = make_store(cfg);
  TrainHooks hooks;
  hooks.on_epoch = [](int, const EpochRecord& e) {
    std::cout << "epoch " << e.epoch << " train_loss " << e.train_loss << " test_loss " << e.val_loss.value_or(0)
              << " (" << e.wall_seconds << " s)\n"
              << std::flush;
  };
  const auto result = pretrain(net, data, tc, store, hooks);
  write_history_jsonl(result.history, out.path() / "history.jsonl", cfg.hash());
  save_checkpoint(result.network, out.path() / "pretrained.aupt",
                  metadata(cfg, std::int64_t(result.history.epochs.size())));
  std::cout << "stopped: " << to_string(result.history.stop_reason) << " after " << result.history.epochs.size()
            << " epochs\n";
  out.commit();
  return 0;
}

int run_finetune(const Common& c, const std::string& manifest_path, const std::string& checkpoint) {
  const auto cfg = make_config(c);
  const auto data = load_manifest(input_path(c, manifest_path), cfg.label_kind());
  const auto tc = cfg.finetune_config();
  const auto loaded = load_checkpoint<float>(input_path(c, checkpoint));
  OutputDir out(c.out, cfg);
  const auto folds = subject_kfold(data, int(cfg.integer("cv.folds")), tc.seed);
  write_folds(out.path() / "folds.csv", folds, cfg.hash());
  auto store = make_store(cfg);
  FinetuneOptions opts;
  opts.head_seed = tc.seed;
  opts.checkpoint_dir = out.path() / "checkpoints";
  opts.history_dir = out.path() / "history";
  opts.config_hash = cfg.hash();
  TrainHooks hooks;
  hooks.on_epoch = [](int fold, const EpochRecord& e) {
    std::cout << "fold " << fold << " epoch " << e.epoch << " train_loss " << e.train_loss << " val_loss "
              << e.val_loss.value_or(0) << "\n"
              << std::flush;
  };
  const auto tuned = finetune(loaded.network, data, folds, tc, store, opts, hooks);
  const auto scores = evaluate_folds(tuned, data, folds, store, tc.batch_size);
  write_report(out.path(), scores, data.au_columns, cfg, "finetune");
  out.commit();
  return 0;
}

int run_eval(const Common& c, const std::string& manifest_path, const std::string& checkpoint,
             const std::string& folds_dir) {
  const auto cfg = make_config(c);
  const auto data = load_manifest(input_path(c, manifest_path), cfg.label_kind());
  if (checkpoint.empty() == folds_dir.empty()) throw ConfigError("eval needs exactly one of --checkpoint, --folds-dir");
  OutputDir out(c.out, cfg);
  auto store = make_store(cfg);
  std::vector<ScoreMatrix> scores;
  if (!checkpoint.empty()) {
    const auto loaded = load_checkpoint<float>(input_path(c, checkpoint));
    scores.push_back(evaluate_model(loaded.network, data, store));
  } else {
    const fs::path dir = input_path(c, folds_dir);
    const auto folds = read_folds(dir / "folds.csv");
    for (int fold = 0; fold < folds.k; ++fold) {
      const auto loaded =
          load_checkpoint<float>(dir / "checkpoints" / ("fold" + std::to_string(fold) + ".aupt"));
      scores.push_back(evaluate_model(loaded.network, fold_split(data, folds, fold).test, store, 32, {}, fold));
    }
  }
  write_report(out.path(), scores, data.au_columns, cfg, "eval");
  out.commit();
  return 0;
}

int run_ablate(const Common& c, const std::string& axis_text, const std::string& pool_path,
               const std::string& target_path, const std::string& grid_text) {
  const auto cfg = make_config(c);
  const auto axis = parse_axis(axis_text);
  const auto grid = grid_text.empty() ? default_grid(axis) : parse_grid(grid_text);
  const auto pool = load_manifest(input_path(c, pool_path), cfg.label_kind());
  const auto target = load_manifest(input_path(c, target_path), cfg.label_kind());
  const auto setup = cfg.ablation_setup();
  const auto seeds = cfg.seeds();
  std::cout << "# " << to_string(axis) << " grid:";
  for (auto g : grid) std::cout << ' ' << grid_label(g);
  std::cout << "\n";
  OutputDir out(c.out, cfg);
  fs::create_directories(out.path() / "points");
  auto pool_store = make_store(cfg);
  auto target_store = make_store(cfg);
  const auto points = run_ablation(pool, target, axis, grid, setup, seeds, pool_store, target_store,
                                   [&](const AblationPoint& p) {
    std::cout << to_string(p.axis) << "=" << grid_label(p.requested) << " seed " << p.seed << " images " << p.images
              << " subjects " << p.subjects << " F1 " << percent(p.report.pooled.macro_f1) << " ROC "
              << percent(p.report.pooled.macro_roc_auc) << " PR " << percent(p.report.pooled.macro_pr_auc) << "\n"
              << std::flush;
    const std::string name = std::string(to_string(p.axis)) + "_" + grid_label(p.requested) + "_seed" +
                             std::to_string(p.seed) + ".csv";
    write_text(out.path() / "points" / name, render_csv(p.report));
  });
  write_text(out.path() / "series.csv", render_series_csv(points, cfg.hash()));
  out.commit();
  return 0;
}

int run_report(const Common& c, const std::string& predictions, const std::string& table) {
  const auto cfg = make_config(c);
  if (predictions.empty() == table.empty()) throw ConfigError("report needs exactly one of --predictions, --table");
  std::string text;
  if (!table.empty()) {
    text = render_score_table(load_score_table(input_path(c, table)));
  } else {
    const auto set = load_predictions(input_path(c, predictions));
    Provenance prov;
    prov.config_hash = cfg.hash();
    prov.seed = std::uint64_t(cfg.integer("seed"));
    prov.source = predictions;
    const auto report = build_report(set.folds, set.au_names, prov);
    text = render_table(report);
    if (!c.out.empty()) {
      fs::create_directories(c.out);
      write_text(fs::path(c.out) / "report.csv", render_csv(report));
    }
  }
  std::cout << text;
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_text(fs::path(c.out) / "report.txt", text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noisy-label pre-training and subject-independent fine-tuning for facial action unit detection"};
  app.require_subcommand(1);
  app.footer(
      "Config keys (set in a --config file or with --set key=value):\n  " + [] {
        std::string s;
        for (const auto& k : RunConfig::keys()) s += k + " ";
        return s;
      }() + "\nRelative input paths are resolved against --data-root or $AUPT_DATA_ROOT when not found.");

  Common synth_c, pre_c, ft_c, eval_c, abl_c, rep_c;
  std::string manifest, checkpoint, folds_dir, axis = "images", pool, target, grid, predictions, table;

  auto* synth = app.add_subcommand("synth", "generate a synthetic labelled face dataset");
  add_common(synth, synth_c, true);

  auto* pre = app.add_subcommand("pretrain", "pre-train on a (noisy) multi-label manifest");
  add_common(pre, pre_c, true);
  pre->add_option("-m,--manifest", manifest, "training manifest CSV")->required();

  auto* ft = app.add_subcommand("finetune", "subject-independent k-fold fine-tuning from a checkpoint");
  add_common(ft, ft_c, true);
  ft->add_option("-m,--manifest", manifest, "fine-tuning manifest CSV")->required();
  ft->add_option("--checkpoint", checkpoint, "pre-trained checkpoint")->required();

  auto* ev = app.add_subcommand("eval", "score a checkpoint (or a finetune run's fold checkpoints)");
  add_common(ev, eval_c, true);
  ev->add_option("-m,--manifest", manifest, "evaluation manifest CSV")->required();
  ev->add_option("--checkpoint", checkpoint, "single checkpoint evaluated on every record");
  ev->add_option("--folds-dir", folds_dir, "finetune output directory (folds.csv + checkpoints/)");

  auto* abl = app.add_subcommand("ablate", "sweep pre-training set size and fine-tune each point");
  add_common(abl, abl_c, true);
  abl->add_option("--axis", axis, "images | subjects")->check(CLI::IsMember({"images", "subjects"}));
  abl->add_option("--pool", pool, "pre-training pool manifest")->required();
  abl->add_option("--target", target, "fine-tuning manifest")->required();
  abl->add_option("--grid", grid,
                  "comma-separated sizes, 'all' for the whole pool, 0 for random init "
                  "(default images: 1000,2000,10000,all; subjects: 12,200,600,1000,all)");

  auto* rep = app.add_subcommand("report", "render a metrics table from predictions or a stored score table");
  add_common(rep, rep_c, false);
  rep->add_option("--predictions", predictions, "predictions CSV");
  rep->add_option("--table", table, "per-AU score table CSV (values in percent)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return run_synth(synth_c);
    if (pre->parsed()) return run_pretrain(pre_c, manifest);
    if (ft->parsed()) return run_finetune(ft_c, manifest, checkpoint);
    if (ev->parsed()) return run_eval(eval_c, manifest, checkpoint, folds_dir);
    if (abl->parsed()) return run_ablate(abl_c, axis, pool, target, grid);
    if (rep->parsed()) return run_report(rep_c, predictions, table);
  } catch (const ConfigError& e) {
    std::cerr << "aupt: config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "aupt: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
