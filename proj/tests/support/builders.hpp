#pragma once

// In-memory manifests and images for tests.

#include <cstdio>
#include <random>
#include <string>

#include "aupt/datapipe.hpp"
#include "aupt/manifest.hpp"
#include "aupt/random.hpp"

namespace build {

inline std::string subject_name(std::size_t s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "P%05zu", s);
  return buf;
}

/// `subjects` people with `per_subject` images each; gender alternates M/F
/// starting with M. Labels are pseudo-random in {0,1} (or 0..5).
inline aupt::Manifest manifest(std::size_t subjects, std::size_t per_subject, std::size_t labels = 3,
                               std::uint64_t seed = 0, aupt::LabelKind kind = aupt::LabelKind::Binary) {
  aupt::Manifest m;
  m.label_kind = kind;
  for (std::size_t l = 0; l < labels; ++l) m.au_columns.push_back("AU" + std::to_string(l + 1));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> value(0, kind == aupt::LabelKind::Binary ? 1 : 5);
  for (std::size_t s = 0; s < subjects; ++s) {
    for (std::size_t i = 0; i < per_subject; ++i) {
      aupt::SampleRecord r;
      r.subject_id = subject_name(s);
      r.image_ref = r.subject_id + "/" + std::to_string(i) + ".png";
      r.gender = s % 2 == 0 ? aupt::Gender::Male : aupt::Gender::Female;
      for (std::size_t l = 0; l < labels; ++l) r.labels.push_back(value(rng));
      m.records.push_back(std::move(r));
    }
  }
  return m;
}

/// Deterministic noise image keyed by the file name, for loaders that must
/// not touch the filesystem.
inline aupt::Image noise_image(const std::filesystem::path& path, int w = 48, int h = 40) {
  std::mt19937_64 rng(aupt::fnv1a64(path.generic_string()));
  std::uniform_int_distribution<int> px(0, 255);
  aupt::Image img(w, h, 1);
  for (auto& p : img.pixels) p = std::uint8_t(px(rng));
  return img;
}

}  // namespace build
