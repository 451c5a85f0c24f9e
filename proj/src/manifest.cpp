#include "aupt/manifest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <unordered_set>

#include "aupt/csv.hpp"
#include "aupt/errors.hpp"

namespace aupt {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return out;
}

int max_label(LabelKind kind) { return kind == LabelKind::Binary ? 1 : 5; }

}  // namespace

std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::Male: return "M";
    case Gender::Female: return "F";
    case Gender::Unknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(LabelKind k) { return k == LabelKind::Binary ? "binary" : "intensity"; }

Gender parse_gender(std::string_view text) {
  const auto s = lower(text);
  if (s == "m" || s == "male") return Gender::Male;
  if (s == "f" || s == "female") return Gender::Female;
  return Gender::Unknown;
}

LabelKind parse_label_kind(std::string_view text) {
  const auto s = lower(text);
  if (s == "binary") return LabelKind::Binary;
  if (s == "intensity") return LabelKind::Intensity;
  throw ConfigError("label kind must be 'binary' or 'intensity', got '" + std::string(text) + "'");
}

std::vector<std::string> Manifest::subjects() const {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.subject_id);
  return {ids.begin(), ids.end()};
}

std::filesystem::path Manifest::resolve(const SampleRecord& record) const {
  std::filesystem::path p(record.image_ref);
  return p.is_absolute() ? p : base_dir / p;
}

Manifest Manifest::subset(std::span<const std::size_t> indices) const {
  Manifest out{au_columns, label_kind, {}, base_dir};
  out.records.reserve(indices.size());
  for (std::size_t i : indices) out.records.push_back(records.at(i));
  return out;
}

Manifest Manifest::filter_subjects(std::span<const std::string> subject_ids) const {
  std::unordered_set<std::string> keep(subject_ids.begin(), subject_ids.end());
  Manifest out{au_columns, label_kind, {}, base_dir};
  for (const auto& r : records) {
    if (keep.count(r.subject_id)) out.records.push_back(r);
  }
  return out;
}

Manifest Manifest::select_columns(std::span<const std::string> names) const {
  std::vector<std::size_t> cols;
  for (const auto& name : names) {
    auto it = std::find(au_columns.begin(), au_columns.end(), name);
    if (it == au_columns.end()) throw ConfigError("manifest has no AU column '" + name + "'");
    cols.push_back(std::size_t(it - au_columns.begin()));
  }
  Manifest out{{names.begin(), names.end()}, label_kind, records, base_dir};
  for (auto& r : out.records) {
    std::vector<int> picked;
    for (std::size_t c : cols) picked.push_back(r.labels[c]);
    r.labels = std::move(picked);
  }
  return out;
}

Manifest Manifest::binarized() const {
  Manifest out = *this;
  if (label_kind == LabelKind::Binary) return out;
  out.label_kind = LabelKind::Binary;
  for (auto& r : out.records) {
    for (int& v : r.labels) v = binarize_intensity(v);
  }
  return out;
}

void Manifest::validate() const {
  if (au_columns.empty()) throw ContractError("manifest has no AU columns");
  std::unordered_set<std::string> seen;
  for (const auto& c : au_columns) {
    if (c.empty()) throw ContractError("manifest has an empty AU column name");
    if (!seen.insert(c).second) throw ContractError("duplicate AU column '" + c + "'");
  }
  const int hi = max_label(label_kind);
  for (const auto& r : records) {
    if (r.subject_id.empty()) throw ContractError("record for '" + r.image_ref + "' has an empty subject id");
    if (r.labels.size() != au_columns.size()) {
      throw ContractError("record for '" + r.image_ref + "' has " + std::to_string(r.labels.size()) +
                          " labels, manifest declares " + std::to_string(au_columns.size()));
    }
    for (int v : r.labels) {
      if (v < 0 || v > hi) throw ContractError("label " + std::to_string(v) + " out of range for " + r.image_ref);
    }
  }
}

int binarize_intensity(int intensity) {
  if (intensity < 0 || intensity > 5) {
    throw ContractError("AU intensity must be in 0..5, got " + std::to_string(intensity));
  }
  return intensity >= 2 ? 1 : 0;
}

Manifest load_manifest(const std::filesystem::path& path, LabelKind kind) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open manifest " + path.string(), 0);

  std::string line;
  if (!std::getline(in, line) || line.find_first_not_of(" \t\r") == std::string::npos) {
    throw ParseError("manifest " + path.string() + " is empty (no header row)", 0);
  }
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const auto header = csv::split_line(line);

  int col_image = -1, col_subject = -1, col_gender = -1, col_region = -1;
  std::vector<int> au_cols;
  Manifest m;
  m.label_kind = kind;
  m.base_dir = path.parent_path();
  std::unordered_set<std::string> seen;
  for (int i = 0; i < int(header.size()); ++i) {
    const auto& name = header[i];
    if (!seen.insert(name).second) throw ParseError("duplicate column '" + name + "' in header", 0);
    if (name == "image_path") col_image = i;
    else if (name == "subject_id") col_subject = i;
    else if (name == "gender") col_gender = i;
    else if (name == "region") col_region = i;
    else if (name.empty()) throw ParseError("empty column name at header position " + std::to_string(i + 1), 0);
    else {
      au_cols.push_back(i);
      m.au_columns.push_back(name);
    }
  }
  if (col_image < 0) throw ParseError("missing column 'image_path'", 0);
  if (col_subject < 0) throw ParseError("missing column 'subject_id'", 0);
  if (au_cols.empty()) throw ParseError("manifest declares no AU columns", 0);

  const int hi = max_label(kind);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = csv::split_line(line);
    if (fields.size() != header.size()) {
      throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       row);
    }
    SampleRecord r;
    r.row = row;
    r.image_ref = fields[col_image];
    r.subject_id = fields[col_subject];
    if (r.image_ref.empty()) throw ParseError("row " + std::to_string(row) + ": empty image_path", row);
    if (r.subject_id.empty()) throw ParseError("row " + std::to_string(row) + ": empty subject_id", row);
    if (col_gender >= 0) r.gender = parse_gender(fields[col_gender]);
    if (col_region >= 0) r.region = fields[col_region];
    r.labels.reserve(au_cols.size());
    for (std::size_t a = 0; a < au_cols.size(); ++a) {
      const std::string& cell = fields[au_cols[a]];
      int value = -1;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || value < 0 || value > hi) {
        throw ParseError("row " + std::to_string(row) + ", column '" + m.au_columns[a] + "': label '" + cell +
                             "' outside " + std::string(to_string(kind)) + " range 0.." + std::to_string(hi),
                         row);
      }
      r.labels.push_back(value);
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  const fs::path out_dir = fs::absolute(path).parent_path();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  std::vector<std::string> header = {"image_path", "subject_id", "gender", "region"};
  header.insert(header.end(), manifest.au_columns.begin(), manifest.au_columns.end());
  out << csv::join(header) << '\n';
  for (const auto& r : manifest.records) {
    const fs::path abs = fs::absolute(manifest.resolve(r)).lexically_normal();
    std::string ref = abs.lexically_relative(out_dir).generic_string();
    if (ref.empty()) ref = abs.generic_string();
    std::vector<std::string> fields = {ref, r.subject_id, std::string(to_string(r.gender)), r.region};
    for (int v : r.labels) fields.push_back(std::to_string(v));
    out << csv::join(fields) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

}  // namespace aupt
