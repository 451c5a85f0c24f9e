#include <gtest/gtest.h>

#include <fstream>

#include "aupt/errors.hpp"
#include "aupt/manifest.hpp"
#include "builders.hpp"
#include "oracles.hpp"

using namespace aupt;
namespace fs = std::filesystem;

namespace {

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(Manifest, LargePretrainingManifestCounts) {
  // 17 AU columns, 162,070 rows over 1,995 subjects.
  const auto dir = oracle::temp_dir("manifest_large");
  const std::size_t rows = 162070, subjects = 1995;
  {
    std::ofstream out(dir / "pool.csv");
    out << "image_path,subject_id,gender,region";
    for (int a = 1; a <= 17; ++a) out << ",AU" << a;
    out << "\n";
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t s = r % subjects;
      out << "img/" << r << ".png," << build::subject_name(s) << "," << (s % 2 ? "F" : "M") << ",eu";
      for (int a = 0; a < 17; ++a) out << "," << ((r + std::size_t(a)) % 3 == 0);
      out << "\n";
    }
  }
  const auto m = load_manifest(dir / "pool.csv", LabelKind::Binary);
  EXPECT_EQ(m.size(), rows);
  EXPECT_EQ(m.label_width(), 17u);
  EXPECT_EQ(m.subjects().size(), subjects);
  EXPECT_EQ(m.records.back().row, rows);
}

TEST(Manifest, EmptyFileIsParseError) {
  const auto dir = oracle::temp_dir("manifest_empty");
  write(dir / "e.csv", "");
  EXPECT_THROW(load_manifest(dir / "e.csv", LabelKind::Binary), ParseError);
}

TEST(Manifest, HeaderOnlyIsAnEmptyManifest) {
  const auto dir = oracle::temp_dir("manifest_header");
  write(dir / "h.csv", "image_path,subject_id,AU1\n");
  const auto m = load_manifest(dir / "h.csv", LabelKind::Binary);
  EXPECT_TRUE(m.empty());
}

TEST(Manifest, IntensityOutOfRangeNamesRowAndColumn) {
  const auto dir = oracle::temp_dir("manifest_range");
  write(dir / "i.csv", "image_path,subject_id,AU1,AU2\na.png,S1,0,5\nb.png,S1,7,1\n");
  try {
    load_manifest(dir / "i.csv", LabelKind::Intensity);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("row 2"), std::string::npos) << what;
    EXPECT_NE(what.find("AU1"), std::string::npos) << what;
  }
}

TEST(Manifest, BinaryRejectsIntensityValues) {
  const auto dir = oracle::temp_dir("manifest_binary");
  write(dir / "b.csv", "image_path,subject_id,AU1\na.png,S1,2\n");
  EXPECT_THROW(load_manifest(dir / "b.csv", LabelKind::Binary), ParseError);
}

TEST(Manifest, StructuralDefectsAreParseErrors) {
  const auto dir = oracle::temp_dir("manifest_defects");
  write(dir / "dup.csv", "image_path,subject_id,AU1,AU1\na.png,S1,0,1\n");
  write(dir / "nosubj.csv", "image_path,AU1\na.png,1\n");
  write(dir / "noau.csv", "image_path,subject_id\na.png,S1\n");
  write(dir / "short.csv", "image_path,subject_id,AU1,AU2\na.png,S1,1\n");
  write(dir / "blank.csv", "image_path,subject_id,AU1\na.png,,1\n");
  write(dir / "text.csv", "image_path,subject_id,AU1\na.png,S1,yes\n");
  for (const char* f : {"dup.csv", "nosubj.csv", "noau.csv", "short.csv", "blank.csv", "text.csv"}) {
    EXPECT_THROW(load_manifest(dir / f, LabelKind::Binary), ParseError) << f;
  }
}

TEST(Manifest, OptionalColumnsAndQuoting) {
  const auto dir = oracle::temp_dir("manifest_quote");
  write(dir / "q.csv", "image_path,subject_id,gender,region,AU1\n\"a, b.png\",S1,female,\"N. America\",1\n");
  const auto m = load_manifest(dir / "q.csv", LabelKind::Binary);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.records[0].image_ref, "a, b.png");
  EXPECT_EQ(m.records[0].gender, Gender::Female);
  EXPECT_EQ(m.records[0].region, "N. America");
  EXPECT_EQ(m.resolve(m.records[0]), dir / "a, b.png");
}

TEST(Manifest, SaveLoadRoundTrip) {
  const auto dir = oracle::temp_dir("manifest_roundtrip");
  auto m = build::manifest(5, 3, 4, 1, LabelKind::Intensity);
  m.base_dir = dir;
  save_manifest(m, dir / "m.csv");
  const auto back = load_manifest(dir / "m.csv", LabelKind::Intensity);
  ASSERT_EQ(back.size(), m.size());
  EXPECT_EQ(back.au_columns, m.au_columns);
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(back.records[i].labels, m.records[i].labels);
    EXPECT_EQ(back.records[i].subject_id, m.records[i].subject_id);
    EXPECT_EQ(back.records[i].gender, m.records[i].gender);
    EXPECT_EQ(back.resolve(back.records[i]), m.resolve(m.records[i]));
  }
}

TEST(BinarizeIntensity, ThresholdAtTwo) {
  EXPECT_EQ(binarize_intensity(2), 1);
  EXPECT_EQ(binarize_intensity(0), 0);
  EXPECT_EQ(binarize_intensity(5), 1);
  EXPECT_EQ(binarize_intensity(1), 0);
  EXPECT_THROW(binarize_intensity(6), ContractError);
  EXPECT_THROW(binarize_intensity(-1), ContractError);
}

TEST(Manifest, BinarizedIntensityManifest) {
  const auto m = build::manifest(3, 4, 5, 2, LabelKind::Intensity);
  const auto b = m.binarized();
  EXPECT_EQ(b.label_kind, LabelKind::Binary);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t l = 0; l < 5; ++l) EXPECT_EQ(b.records[i].labels[l], m.records[i].labels[l] >= 2 ? 1 : 0);
}

TEST(Manifest, SubsetFilterAndSelect) {
  const auto m = build::manifest(4, 2, 3);
  const std::vector<std::size_t> idx{5, 1};
  const auto s = m.subset(idx);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.records[0].image_ref, m.records[5].image_ref);
  const std::vector<std::string> keep{build::subject_name(2)};
  EXPECT_EQ(m.filter_subjects(keep).size(), 2u);
  const std::vector<std::string> cols{"AU3", "AU1"};
  const auto c = m.select_columns(cols);
  EXPECT_EQ(c.au_columns, cols);
  EXPECT_EQ(c.records[0].labels, (std::vector<int>{m.records[0].labels[2], m.records[0].labels[0]}));
  const std::vector<std::string> missing{"AU9"};
  EXPECT_ANY_THROW(m.select_columns(missing));
}

TEST(Manifest, ValidateCatchesBrokenInvariants) {
  auto m = build::manifest(2, 2, 3);
  EXPECT_NO_THROW(m.validate());
  m.records[1].labels.pop_back();
  EXPECT_THROW(m.validate(), ContractError);
  m = build::manifest(2, 2, 3);
  m.records[0].subject_id.clear();
  EXPECT_THROW(m.validate(), ContractError);
}

TEST(Manifest, GenderParsing) {
  EXPECT_EQ(parse_gender("M"), Gender::Male);
  EXPECT_EQ(parse_gender("female"), Gender::Female);
  EXPECT_EQ(parse_gender("MALE"), Gender::Male);
  EXPECT_EQ(parse_gender(""), Gender::Unknown);
  EXPECT_EQ(parse_gender("x"), Gender::Unknown);
}
