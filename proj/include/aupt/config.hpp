#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "aupt/ablation.hpp"
#include "aupt/manifest.hpp"
#include "aupt/synthgen.hpp"
#include "aupt/trainer.hpp"

namespace aupt {

/// Flat `key = value` run configuration. Every key has a default; setting an
/// unknown key or an unparsable value throws ConfigError.
class RunConfig {
 public:
  RunConfig();

  void set(std::string_view key, std::string_view value);
  /// `key = value` lines; `#` starts a comment, blank lines are skipped.
  void load(const std::filesystem::path& path);
  /// Applies `key=value` overrides in order.
  void apply(const std::vector<std::string>& assignments);

  const std::string& get(std::string_view key) const;
  double number(std::string_view key) const;
  long long integer(std::string_view key) const;
  bool flag(std::string_view key) const;

  /// Sorted `key = value` lines, the exact text the hash is computed over.
  std::string echo() const;
  /// 16 hex digits of FNV-1a 64 over echo().
  std::string hash() const;

  static const std::vector<std::string>& keys();

  TrainConfig pretrain_config() const;
  TrainConfig finetune_config() const;
  AugmentConfig augment_config() const;
  SynthSpec synth_spec() const;
  AblationSetup ablation_setup() const;
  LabelKind label_kind() const;
  std::vector<std::uint64_t> seeds() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

}  // namespace aupt
