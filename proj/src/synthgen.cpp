#include "aupt/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "aupt/errors.hpp"
#include "aupt/random.hpp"

namespace aupt {
namespace {

constexpr double kGlyphAmp = 90.0;
constexpr double kPixelNoise = 3.0;
constexpr double kMinRadius = 0.32;
constexpr double kCentreJitter = 0.08;
constexpr std::uint64_t kSubjectKey = 0x7375626aULL;
constexpr std::uint64_t kLabelKey = 0x6c61626cULL;
constexpr std::uint64_t kNoiseKey = 0x6e6f6973ULL;
constexpr std::uint64_t kRenderKey = 0x726e6472ULL;

// Shape of glyph `kind` in box coordinates u, v in [-1, 1].
bool glyph_hit(int kind, double u, double v) {
  const double r = std::hypot(u, v);
  switch (kind % 8) {
    case 0: return std::abs(v) < 0.3;
    case 1: return std::abs(u) < 0.3;
    case 2: return std::abs(u - v) < 0.4;
    case 3: return std::abs(u + v) < 0.4;
    case 4: return std::abs(r - 0.7) < 0.25;
    case 5: return r < 0.55;
    case 6: return std::abs(u) < 0.22 || std::abs(v) < 0.22;
    default: return v > -0.1 && std::abs(r - 0.7) < 0.25;
  }
}

std::string subject_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "S%04d", index + 1);
  return buf;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_subjects < 1) throw ConfigError("n_subjects must be >= 1");
  if (images_per_subject < 1) throw ConfigError("images_per_subject must be >= 1");
  if (n_labels < 1) throw ConfigError("n_labels must be >= 1");
  if (!(label_noise_rate >= 0.0 && label_noise_rate < 0.5)) throw ConfigError("label_noise_rate must be in [0, 0.5)");
  if (image_size < 16) throw ConfigError("image_size must be >= 16");
  if (!(positive_rate > 0.0 && positive_rate < 1.0)) throw ConfigError("positive_rate must be in (0,1)");
  const int cols = int(std::ceil(std::sqrt(double(n_labels))));
  if (int(2 * kMinRadius * image_size) / cols < 6) {
    throw ConfigError("image_size too small for " + std::to_string(n_labels) + " glyphs");
  }
}

SubjectFactors make_subject(const SynthSpec& spec, int index) {
  auto rng = keyed_rng(spec.seed, {kSubjectKey, std::uint64_t(index)});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SubjectFactors f;
  f.id = subject_name(index);
  f.gender = index % 2 == 0 ? Gender::Male : Gender::Female;
  f.background = 20.0 + 30.0 * u(rng);
  f.face_level = 90.0 + 60.0 * u(rng);
  f.face_rx = kMinRadius + 0.1 * u(rng);
  f.face_ry = kMinRadius + 0.1 * u(rng);
  f.face_cx = 0.5 + kCentreJitter * (2.0 * u(rng) - 1.0);
  f.face_cy = 0.5 + kCentreJitter * (2.0 * u(rng) - 1.0);
  f.texture_amp = 5.0 + 15.0 * u(rng);
  f.texture_freq_x = 0.1 + 0.4 * u(rng);
  f.texture_freq_y = 0.1 + 0.4 * u(rng);
  f.texture_phase = 2.0 * std::numbers::pi * u(rng);
  return f;
}

GlyphCell glyph_cell(const SubjectFactors& s, int label, int n_labels, int image_size) {
  const int cols = int(std::ceil(std::sqrt(double(n_labels))));
  const int rows = (n_labels + cols - 1) / cols;
  const int bx = int(std::lround((s.face_cx - s.face_rx) * image_size));
  const int by = int(std::lround((s.face_cy - s.face_ry) * image_size));
  const int bw = int(2.0 * s.face_rx * image_size), bh = int(2.0 * s.face_ry * image_size);
  const int w = bw / cols, h = bh / rows;
  const int ox = std::clamp(bx + (bw - w * cols) / 2, 0, image_size - w * cols);
  const int oy = std::clamp(by + (bh - h * rows) / 2, 0, image_size - h * rows);
  return {ox + (label % cols) * w, oy + (label / cols) * h, w, h};
}

Image render_image(const SubjectFactors& s, const std::vector<int>& true_labels, int image_size,
                   std::mt19937_64& rng) {
  const int n = image_size;
  const int n_labels = int(true_labels.size());
  std::uniform_int_distribution<int> shift(-1, 1);
  std::normal_distribution<double> noise(0.0, kPixelNoise);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Nuisance draws first, in a fixed order, so labels never change consumption.
  const double gain = 0.9 + 0.2 * unit(rng);
  std::vector<std::pair<int, int>> offsets(static_cast<std::size_t>(n_labels));
  for (auto& o : offsets) o = {shift(rng), shift(rng)};
  std::vector<double> pixel_noise(std::size_t(n) * std::size_t(n));
  for (auto& p : pixel_noise) p = noise(rng);

  std::vector<double> canvas(std::size_t(n) * std::size_t(n));
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double fx = (x + 0.5) / n - s.face_cx, fy = (y + 0.5) / n - s.face_cy;
      const bool inside = (fx * fx) / (s.face_rx * s.face_rx) + (fy * fy) / (s.face_ry * s.face_ry) <= 1.0;
      double v = s.background;
      if (inside) {
        v = s.face_level + s.texture_amp * std::sin(s.texture_freq_x * x + s.texture_freq_y * y + s.texture_phase);
      }
      canvas[std::size_t(y * n + x)] = v * gain;
    }
  }

  for (int l = 0; l < n_labels; ++l) {
    if (true_labels[std::size_t(l)] != 1) continue;
    const auto cell = glyph_cell(s, l, n_labels, n);
    const double sign = (l / 8) % 2 == 0 ? 1.0 : -1.0;
    const int margin_x = std::max(1, cell.width / 6), margin_y = std::max(1, cell.height / 6);
    const int bx0 = cell.x0 + margin_x + offsets[std::size_t(l)].first;
    const int by0 = cell.y0 + margin_y + offsets[std::size_t(l)].second;
    const int bw = cell.width - 2 * margin_x, bh = cell.height - 2 * margin_y;
    for (int y = 0; y < bh; ++y) {
      for (int x = 0; x < bw; ++x) {
        const double u = 2.0 * (x + 0.5) / bw - 1.0, v = 2.0 * (y + 0.5) / bh - 1.0;
        const int px = bx0 + x, py = by0 + y;
        if (px < 0 || py < 0 || px >= n || py >= n) continue;
        if (glyph_hit(l, u, v)) canvas[std::size_t(py * n + px)] += sign * kGlyphAmp;
      }
    }
  }

  Image out(n, n, 1);
  for (std::size_t i = 0; i < canvas.size(); ++i) {
    out.pixels[i] = std::uint8_t(std::clamp(std::lround(canvas[i] + pixel_noise[i]), 0L, 255L));
  }
  return out;
}

std::vector<std::string> synth_label_names(int n_labels) {
  std::vector<std::string> names;
  char buf[16];
  for (int l = 0; l < n_labels; ++l) {
    std::snprintf(buf, sizeof buf, "L%02d", l + 1);
    names.emplace_back(buf);
  }
  return names;
}

SynthDataset generate_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw std::runtime_error("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  SynthDataset ds;
  for (Manifest* m : {&ds.recorded, &ds.truth}) {
    m->au_columns = synth_label_names(spec.n_labels);
    m->label_kind = LabelKind::Binary;
    m->base_dir = out_dir;
  }
  std::bernoulli_distribution positive(spec.positive_rate);
  std::bernoulli_distribution flip(spec.label_noise_rate);
  char name[32];
  for (int s = 0; s < spec.n_subjects; ++s) {
    const auto subject = make_subject(spec, s);
    fs::create_directories(out_dir / "images" / subject.id, ec);
    if (ec) throw std::runtime_error("cannot create image directory: " + ec.message());
    for (int k = 0; k < spec.images_per_subject; ++k) {
      const std::uint64_t sk = std::uint64_t(s), kk = std::uint64_t(k);
      auto label_rng = keyed_rng(spec.seed, {kLabelKey, sk, kk});
      auto noise_rng = keyed_rng(spec.seed, {kNoiseKey, sk, kk});
      auto render_rng = keyed_rng(spec.seed, {kRenderKey, sk, kk});
      std::vector<int> truth(std::size_t(spec.n_labels)), recorded(std::size_t(spec.n_labels));
      for (int l = 0; l < spec.n_labels; ++l) {
        truth[std::size_t(l)] = positive(label_rng) ? 1 : 0;
        recorded[std::size_t(l)] = flip(noise_rng) ? 1 - truth[std::size_t(l)] : truth[std::size_t(l)];
      }
      std::snprintf(name, sizeof name, "%04d.png", k);
      const std::string ref = "images/" + subject.id + "/" + name;
      write_png(render_image(subject, truth, spec.image_size, render_rng), out_dir / ref);
      ds.truth.records.push_back({ref, subject.id, subject.gender, "synthetic", truth, 0});
      ds.recorded.records.push_back({ref, subject.id, subject.gender, "synthetic", recorded, 0});
    }
  }
  save_manifest(ds.recorded, out_dir / "manifest.csv");
  save_manifest(ds.truth, out_dir / "true_labels.csv");
  return ds;
}

}  // namespace aupt
