#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "aupt/image.hpp"
#include "aupt/manifest.hpp"

namespace aupt {

struct SynthSpec {
  int n_subjects = 400;
  int images_per_subject = 20;
  int n_labels = 17;
  double label_noise_rate = 0.2;  // independent flip probability of each recorded label
  int image_size = 64;
  std::uint64_t seed = 0;
  double positive_rate = 0.5;  // P(true label = 1)

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
};

/// Persistent per-subject appearance: a textured elliptical face blob.
struct SubjectFactors {
  std::string id;
  Gender gender = Gender::Unknown;
  double background = 0.0;
  double face_level = 0.0;
  double face_cx = 0.0, face_cy = 0.0;  // fractions of the image side
  double face_rx = 0.0, face_ry = 0.0;
  double texture_amp = 0.0;
  double texture_freq_x = 0.0, texture_freq_y = 0.0;
  double texture_phase = 0.0;
};

/// Deterministic in (spec.seed, index). Genders alternate, even indices male.
SubjectFactors make_subject(const SynthSpec& spec, int index);

/// Glyph cell of label `label`: labels tile the subject's face box on a
/// near-square grid, so glyph placement follows face geometry.
struct GlyphCell {
  int x0, y0, width, height;
};
GlyphCell glyph_cell(const SubjectFactors& subject, int label, int n_labels, int image_size);

/// Grayscale raster of one face. The glyph of label l is drawn iff
/// true_labels[l] == 1, inside glyph_cell(subject, l). The rng is consumed identically
/// whatever the labels, so rasters differing in one label differ only in that
/// label's cell.
Image render_image(const SubjectFactors& subject, const std::vector<int>& true_labels, int image_size,
                   std::mt19937_64& rng);

std::vector<std::string> synth_label_names(int n_labels);

struct SynthDataset {
  Manifest recorded;  // labels after noise, as written to manifest.csv
  Manifest truth;     // noise-free labels, as written to true_labels.csv
};

/// Writes images/<subject>/<k>.png, manifest.csv and true_labels.csv under out_dir.
/// Throws std::runtime_error when out_dir is not writable.
SynthDataset generate_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace aupt
