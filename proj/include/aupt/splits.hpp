#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aupt/manifest.hpp"

namespace aupt {

/// Subject-level fold assignment for k-fold cross-validation.
struct FoldAssignment {
  int k = 0;
  std::map<std::string, int> fold_of_subject;

  std::vector<std::string> subjects_in(int fold) const;
  /// Subjects per fold, indexed by fold.
  std::vector<std::size_t> fold_sizes() const;
};

struct FoldSplit {
  Manifest train;
  Manifest test;
};

/// Shuffles the distinct subjects with `seed` and deals them round-robin into
/// k folds, so fold sizes differ by at most one subject.
/// Throws ConfigError if k < 2 or there are fewer subjects than k.
FoldAssignment subject_kfold(const Manifest& manifest, int k, std::uint64_t seed);

/// Test = all images of the fold's subjects; train = everything else.
/// Throws ConfigError if the assignment does not cover the manifest's subjects.
FoldSplit fold_split(const Manifest& manifest, const FoldAssignment& folds, int fold);

/// Uniform image-level subset without replacement (subjects are ignored).
/// When gender_balanced, ceil(n/2) and floor(n/2) images are drawn from the
/// two genders (the larger half going to whichever gender has more images);
/// records of unknown gender are then excluded. Output keeps manifest order.
Manifest sample_by_images(const Manifest& manifest, std::size_t n_images, bool gender_balanced, std::uint64_t seed);

/// Uniformly selects n_subjects subjects (split across genders as above when
/// balanced) and keeps their images, at most `per_subject_cap` each when given.
Manifest sample_by_subjects(const Manifest& manifest, std::size_t n_subjects, bool gender_balanced,
                            std::uint64_t seed, std::optional<std::size_t> per_subject_cap = std::nullopt);

/// Holds out a subject-disjoint slice: round(fraction * subjects) subjects,
/// at least one, never all. Returns {remaining, held_out}.
FoldSplit subject_holdout(const Manifest& manifest, double fraction, std::uint64_t seed);

/// Image-level random split: round(fraction * n) images held out (at least one
/// when n > 1). Returns {remaining, held_out}.
FoldSplit image_holdout(const Manifest& manifest, double fraction, std::uint64_t seed);

}  // namespace aupt
