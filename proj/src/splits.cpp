#include "aupt/splits.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "aupt/errors.hpp"
#include "aupt/random.hpp"

namespace aupt {
namespace {

// Uniform n-subset of `pool`, without replacement.
template <typename T>
std::vector<T> draw(std::vector<T> pool, std::size_t n, std::mt19937_64& rng) {
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(n);
  return pool;
}

// Splits n between two pools, larger half to the larger pool.
std::pair<std::size_t, std::size_t> balanced_halves(std::size_t n, std::size_t male_avail, std::size_t female_avail) {
  const std::size_t big = (n + 1) / 2, small = n / 2;
  return male_avail >= female_avail ? std::pair{big, small} : std::pair{small, big};
}

}  // namespace

std::vector<std::string> FoldAssignment::subjects_in(int fold) const {
  std::vector<std::string> out;
  for (const auto& [subject, f] : fold_of_subject) {
    if (f == fold) out.push_back(subject);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::fold_sizes() const {
  std::vector<std::size_t> sizes(std::size_t(std::max(k, 0)), 0);
  for (const auto& [subject, f] : fold_of_subject) ++sizes.at(std::size_t(f));
  return sizes;
}

FoldAssignment subject_kfold(const Manifest& manifest, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2, got " + std::to_string(k));
  auto subjects = manifest.subjects();
  if (subjects.size() < std::size_t(k)) {
    throw ConfigError("k-fold needs at least k=" + std::to_string(k) + " subjects, manifest has " +
                      std::to_string(subjects.size()));
  }
  auto rng = keyed_rng(seed, {0x6b666f6c64ULL});
  std::shuffle(subjects.begin(), subjects.end(), rng);
  FoldAssignment out;
  out.k = k;
  for (std::size_t i = 0; i < subjects.size(); ++i) out.fold_of_subject[subjects[i]] = int(i % std::size_t(k));
  return out;
}

FoldSplit fold_split(const Manifest& manifest, const FoldAssignment& folds, int fold) {
  if (fold < 0 || fold >= folds.k) throw ConfigError("fold index " + std::to_string(fold) + " out of range");
  FoldSplit out{Manifest{manifest.au_columns, manifest.label_kind, {}, manifest.base_dir},
                Manifest{manifest.au_columns, manifest.label_kind, {}, manifest.base_dir}};
  for (const auto& r : manifest.records) {
    auto it = folds.fold_of_subject.find(r.subject_id);
    if (it == folds.fold_of_subject.end()) {
      throw ConfigError("subject '" + r.subject_id + "' has no fold assignment");
    }
    (it->second == fold ? out.test : out.train).records.push_back(r);
  }
  return out;
}

Manifest sample_by_images(const Manifest& manifest, std::size_t n_images, bool gender_balanced, std::uint64_t seed) {
  auto rng = keyed_rng(seed, {0x696d67ULL});
  std::vector<std::size_t> picked;
  if (!gender_balanced) {
    if (n_images > manifest.size()) {
      throw ConfigError("requested " + std::to_string(n_images) + " images, manifest has " +
                        std::to_string(manifest.size()));
    }
    std::vector<std::size_t> all(manifest.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    picked = draw(std::move(all), n_images, rng);
  } else {
    std::vector<std::size_t> male, female;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
      const Gender g = manifest.records[i].gender;
      if (g == Gender::Male) male.push_back(i);
      else if (g == Gender::Female) female.push_back(i);
    }
    const auto [n_m, n_f] = balanced_halves(n_images, male.size(), female.size());
    if (n_m > male.size() || n_f > female.size()) {
      throw ConfigError("gender-balanced sample of " + std::to_string(n_images) + " images needs " +
                        std::to_string(n_m) + " M / " + std::to_string(n_f) + " F, available " +
                        std::to_string(male.size()) + " M / " + std::to_string(female.size()) + " F");
    }
    picked = draw(std::move(male), n_m, rng);
    auto f = draw(std::move(female), n_f, rng);
    picked.insert(picked.end(), f.begin(), f.end());
  }
  std::sort(picked.begin(), picked.end());
  return manifest.subset(picked);
}

Manifest sample_by_subjects(const Manifest& manifest, std::size_t n_subjects, bool gender_balanced,
                            std::uint64_t seed, std::optional<std::size_t> per_subject_cap) {
  if (per_subject_cap && *per_subject_cap == 0) throw ConfigError("per-subject cap must be >= 1");
  auto rng = keyed_rng(seed, {0x737562ULL});
  const auto subjects = manifest.subjects();
  std::vector<std::string> chosen;
  if (!gender_balanced) {
    if (n_subjects > subjects.size()) {
      throw ConfigError("requested " + std::to_string(n_subjects) + " subjects, manifest has " +
                        std::to_string(subjects.size()));
    }
    chosen = draw(subjects, n_subjects, rng);
  } else {
    std::unordered_map<std::string, Gender> gender_of;
    for (const auto& r : manifest.records) gender_of.emplace(r.subject_id, r.gender);
    std::vector<std::string> male, female;
    for (const auto& s : subjects) {
      if (gender_of[s] == Gender::Male) male.push_back(s);
      else if (gender_of[s] == Gender::Female) female.push_back(s);
    }
    const auto [n_m, n_f] = balanced_halves(n_subjects, male.size(), female.size());
    if (n_m > male.size() || n_f > female.size()) {
      throw ConfigError("gender-balanced sample of " + std::to_string(n_subjects) + " subjects needs " +
                        std::to_string(n_m) + " M / " + std::to_string(n_f) + " F, available " +
                        std::to_string(male.size()) + " M / " + std::to_string(female.size()) + " F");
    }
    chosen = draw(std::move(male), n_m, rng);
    auto f = draw(std::move(female), n_f, rng);
    chosen.insert(chosen.end(), f.begin(), f.end());
  }

  Manifest out = manifest.filter_subjects(chosen);
  if (per_subject_cap) {
    std::unordered_map<std::string, std::vector<std::size_t>> by_subject;
    for (std::size_t i = 0; i < out.size(); ++i) by_subject[out.records[i].subject_id].push_back(i);
    std::vector<std::size_t> keep;
    for (const auto& s : out.subjects()) {
      auto& rows = by_subject[s];
      if (rows.size() > *per_subject_cap) rows = draw(std::move(rows), *per_subject_cap, rng);
      keep.insert(keep.end(), rows.begin(), rows.end());
    }
    std::sort(keep.begin(), keep.end());
    out = out.subset(keep);
  }
  return out;
}

FoldSplit subject_holdout(const Manifest& manifest, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must be in (0,1)");
  auto subjects = manifest.subjects();
  if (subjects.size() < 2) throw ConfigError("subject holdout needs at least 2 subjects");
  auto n = std::size_t(std::lround(fraction * double(subjects.size())));
  n = std::clamp<std::size_t>(n, 1, subjects.size() - 1);
  auto rng = keyed_rng(seed, {0x686f6c64ULL});
  const auto held = draw(std::move(subjects), n, rng);
  std::vector<std::string> rest;
  for (const auto& s : manifest.subjects()) {
    if (std::find(held.begin(), held.end(), s) == held.end()) rest.push_back(s);
  }
  return {manifest.filter_subjects(rest), manifest.filter_subjects(held)};
}

FoldSplit image_holdout(const Manifest& manifest, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must be in (0,1)");
  if (manifest.size() < 2) throw ConfigError("image holdout needs at least 2 records");
  auto n = std::size_t(std::lround(fraction * double(manifest.size())));
  n = std::clamp<std::size_t>(n, 1, manifest.size() - 1);
  std::vector<std::size_t> all(manifest.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  auto rng = keyed_rng(seed, {0x696d686fULL});
  std::shuffle(all.begin(), all.end(), rng);
  std::vector<std::size_t> held(all.begin(), all.begin() + std::ptrdiff_t(n));
  std::vector<std::size_t> rest(all.begin() + std::ptrdiff_t(n), all.end());
  std::sort(held.begin(), held.end());
  std::sort(rest.begin(), rest.end());
  return {manifest.subset(rest), manifest.subset(held)};
}

}  // namespace aupt
