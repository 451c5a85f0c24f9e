#include "aupt/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "aupt/csv.hpp"
#include "aupt/errors.hpp"
#include "aupt/random.hpp"

namespace aupt {
namespace {

enum class Kind { Real, Int, Bool, Text };

struct KeySpec {
  const char* key;
  Kind kind;
  const char* value;
};

// clang-format off
const KeySpec kSchema[] = {
  {"seed", Kind::Int, "0"},
  {"seeds", Kind::Text, "0"},
  {"data.label_kind", Kind::Text, "binary"},
  {"model.in_channels", Kind::Int, "1"},
  {"model.width_divisor", Kind::Int, "1"},
  {"model.dropout", Kind::Bool, "true"},
  {"adam.beta1", Kind::Real, "0.9"},
  {"adam.beta2", Kind::Real, "0.999"},
  {"adam.eps", Kind::Real, "1e-08"},
  {"augment.flip_prob", Kind::Real, "0.5"},
  {"augment.max_rotation_deg", Kind::Real, "10"},
  {"augment.max_shear", Kind::Real, "0.1"},
  {"augment.scale_lo", Kind::Real, "0.9"},
  {"augment.scale_hi", Kind::Real, "1.1"},
  {"pretrain.lr", Kind::Real, "0.005"},
  {"pretrain.batch_size", Kind::Int, "32"},
  {"pretrain.max_epochs", Kind::Int, "500"},
  {"pretrain.convergence_tol", Kind::Real, "0.0001"},
  {"pretrain.convergence_window", Kind::Int, "5"},
  {"pretrain.test_fraction", Kind::Real, "0.05"},
  {"pretrain.augment", Kind::Bool, "true"},
  {"finetune.lr", Kind::Real, "0.0001"},
  {"finetune.batch_size", Kind::Int, "32"},
  {"finetune.max_epochs", Kind::Int, "200"},
  {"finetune.patience", Kind::Int, "10"},
  {"finetune.val_fraction", Kind::Real, "0.05"},
  {"finetune.augment", Kind::Bool, "true"},
  {"cv.folds", Kind::Int, "3"},
  {"synth.n_subjects", Kind::Int, "400"},
  {"synth.images_per_subject", Kind::Int, "20"},
  {"synth.n_labels", Kind::Int, "17"},
  {"synth.noise", Kind::Real, "0.2"},
  {"synth.image_size", Kind::Int, "64"},
  {"synth.positive_rate", Kind::Real, "0.5"},
  {"ablate.gender_balanced", Kind::Bool, "true"},
  {"ablate.subject_axis_images", Kind::Int, "0"},
};
// clang-format on

const KeySpec* find_spec(std::string_view key) {
  for (const auto& s : kSchema) {
    if (key == s.key) return &s;
  }
  return nullptr;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string canonical(const KeySpec& spec, const std::string& text) {
  const std::string where = "config key '" + std::string(spec.key) + "': ";
  switch (spec.kind) {
    case Kind::Real: {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(text, &used);
      } catch (const std::logic_error&) {
        used = 0;
      }
      if (used == 0 || used != text.size()) throw ConfigError(where + "expected a number, got '" + text + "'");
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      return buf;
    }
    case Kind::Int: {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(text, &used);
      } catch (const std::logic_error&) {
        used = 0;
      }
      if (used == 0 || used != text.size()) throw ConfigError(where + "expected an integer, got '" + text + "'");
      return std::to_string(v);
    }
    case Kind::Bool:
      if (text == "true" || text == "1" || text == "yes") return "true";
      if (text == "false" || text == "0" || text == "no") return "false";
      throw ConfigError(where + "expected true/false, got '" + text + "'");
    case Kind::Text:
      return text;
  }
  return text;
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& s : kSchema) values_[s.key] = canonical(s, s.value);
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> all = [] {
    std::vector<std::string> k;
    for (const auto& s : kSchema) k.emplace_back(s.key);
    return k;
  }();
  return all;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const auto* spec = find_spec(key);
  if (!spec) throw ConfigError("unknown config key '" + std::string(key) + "'");
  values_[spec->key] = canonical(*spec, trim(value));
}

void RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(row) + ": expected key = value");
    }
    set(trim(std::string_view(t).substr(0, eq)), std::string_view(t).substr(eq + 1));
  }
}

void RunConfig::apply(const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + a + "' is not key=value");
    set(trim(std::string_view(a).substr(0, eq)), std::string_view(a).substr(eq + 1));
  }
}

const std::string& RunConfig::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

double RunConfig::number(std::string_view key) const { return std::stod(get(key)); }
long long RunConfig::integer(std::string_view key) const { return std::stoll(get(key)); }
bool RunConfig::flag(std::string_view key) const { return get(key) == "true"; }

std::string RunConfig::echo() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
  return out.str();
}

std::string RunConfig::hash() const {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(echo())));
  return buf;
}

AugmentConfig RunConfig::augment_config() const {
  AugmentConfig a;
  a.flip_prob = number("augment.flip_prob");
  a.max_rotation_deg = number("augment.max_rotation_deg");
  a.max_shear = number("augment.max_shear");
  a.scale_lo = number("augment.scale_lo");
  a.scale_hi = number("augment.scale_hi");
  return a;
}

TrainConfig RunConfig::pretrain_config() const {
  TrainConfig c = pretrain_defaults();
  c.lr = number("pretrain.lr");
  c.beta1 = number("adam.beta1");
  c.beta2 = number("adam.beta2");
  c.eps = number("adam.eps");
  c.batch_size = int(integer("pretrain.batch_size"));
  c.max_epochs = int(integer("pretrain.max_epochs"));
  c.convergence_tol = number("pretrain.convergence_tol");
  c.convergence_window = int(integer("pretrain.convergence_window"));
  c.val_fraction = number("pretrain.test_fraction");
  c.seed = std::uint64_t(integer("seed"));
  c.augment = flag("pretrain.augment");
  c.dropout = flag("model.dropout");
  c.augment_config = augment_config();
  c.validate();
  return c;
}

TrainConfig RunConfig::finetune_config() const {
  TrainConfig c = finetune_defaults();
  c.lr = number("finetune.lr");
  c.beta1 = number("adam.beta1");
  c.beta2 = number("adam.beta2");
  c.eps = number("adam.eps");
  c.batch_size = int(integer("finetune.batch_size"));
  c.max_epochs = int(integer("finetune.max_epochs"));
  c.early_stop_patience = int(integer("finetune.patience"));
  c.val_fraction = number("finetune.val_fraction");
  c.seed = std::uint64_t(integer("seed"));
  c.augment = flag("finetune.augment");
  c.dropout = flag("model.dropout");
  c.augment_config = augment_config();
  c.validate();
  return c;
}

SynthSpec RunConfig::synth_spec() const {
  SynthSpec s;
  s.n_subjects = int(integer("synth.n_subjects"));
  s.images_per_subject = int(integer("synth.images_per_subject"));
  s.n_labels = int(integer("synth.n_labels"));
  s.label_noise_rate = number("synth.noise");
  s.image_size = int(integer("synth.image_size"));
  s.positive_rate = number("synth.positive_rate");
  s.seed = std::uint64_t(integer("seed"));
  s.validate();
  return s;
}

AblationSetup RunConfig::ablation_setup() const {
  AblationSetup a;
  a.pretrain = pretrain_config();
  a.finetune = finetune_config();
  a.folds = int(integer("cv.folds"));
  a.in_channels = int(integer("model.in_channels"));
  a.width_divisor = int(integer("model.width_divisor"));
  a.gender_balanced = flag("ablate.gender_balanced");
  const auto fixed = integer("ablate.subject_axis_images");
  if (fixed < 0) throw ConfigError("ablate.subject_axis_images must be >= 0");
  a.subject_axis_images = std::size_t(fixed);
  a.config_hash = hash();
  return a;
}

LabelKind RunConfig::label_kind() const { return parse_label_kind(get("data.label_kind")); }

std::vector<std::uint64_t> RunConfig::seeds() const {
  std::vector<std::uint64_t> out;
  for (const auto& field : csv::split_line(get("seeds"))) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(trim(field), &used);
      if (used != trim(field).size()) throw std::invalid_argument(field);
      out.push_back(v);
    } catch (const std::logic_error&) {
      throw ConfigError("config key 'seeds': bad seed '" + field + "'");
    }
  }
  if (out.empty()) throw ConfigError("config key 'seeds' is empty");
  return out;
}

}  // namespace aupt
