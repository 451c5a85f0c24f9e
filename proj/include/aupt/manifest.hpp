#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aupt {

enum class Gender { Male, Female, Unknown };
enum class LabelKind { Binary, Intensity };

std::string_view to_string(Gender g);
std::string_view to_string(LabelKind k);
/// Accepts M/F/male/female (any case); anything else, including empty, is Unknown.
Gender parse_gender(std::string_view text);
LabelKind parse_label_kind(std::string_view text);

struct SampleRecord {
  std::string image_ref;  // path relative to the manifest's base_dir, or absolute
  std::string subject_id;
  Gender gender = Gender::Unknown;
  std::string region;
  std::vector<int> labels;
  std::size_t row = 0;  // 1-based data row in the source file, 0 when built in memory
};

/// Tabular dataset description: one record per image, one label column per AU.
struct Manifest {
  std::vector<std::string> au_columns;
  LabelKind label_kind = LabelKind::Binary;
  std::vector<SampleRecord> records;
  std::filesystem::path base_dir;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  std::size_t label_width() const { return au_columns.size(); }

  /// Sorted distinct subject ids.
  std::vector<std::string> subjects() const;
  std::filesystem::path resolve(const SampleRecord& record) const;

  /// Records at `indices`, in the given order.
  Manifest subset(std::span<const std::size_t> indices) const;
  /// Records whose subject is in `subject_ids`, preserving manifest order.
  Manifest filter_subjects(std::span<const std::string> subject_ids) const;
  /// Keeps only the named AU columns, in the given order.
  Manifest select_columns(std::span<const std::string> names) const;
  /// Intensity labels mapped through binarize_intensity; binary manifests are returned unchanged.
  Manifest binarized() const;

  /// Throws ContractError if any invariant (unique non-empty AU columns,
  /// label widths, label ranges, non-empty subject ids) is violated.
  void validate() const;
};

/// 1 iff intensity >= 2. Throws ContractError outside 0..5.
int binarize_intensity(int intensity);

/// Parses a UTF-8 CSV manifest with header
/// `image_path,subject_id[,gender][,region],<AU columns...>`.
/// Throws ParseError naming the row and column on any defect.
Manifest load_manifest(const std::filesystem::path& path, LabelKind kind);

/// Writes the same schema; image paths are rewritten relative to the output directory.
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

}  // namespace aupt
