#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "aupt/errors.hpp"
#include "aupt/splits.hpp"
#include "builders.hpp"

using namespace aupt;

namespace {

std::set<std::string> subjects_of(const Manifest& m) {
  std::set<std::string> s;
  for (const auto& r : m.records) s.insert(r.subject_id);
  return s;
}

std::multiset<std::string> refs_of(const Manifest& m) {
  std::multiset<std::string> s;
  for (const auto& r : m.records) s.insert(r.image_ref);
  return s;
}

std::map<Gender, std::size_t> gender_counts(const Manifest& m) {
  std::map<Gender, std::size_t> c;
  for (const auto& r : m.records) ++c[r.gender];
  return c;
}

}  // namespace

TEST(SubjectKfold, TwentySevenSubjectsThreeFolds) {
  const auto m = build::manifest(27, 5);
  const auto f = subject_kfold(m, 3, 1);
  EXPECT_EQ(f.fold_sizes(), (std::vector<std::size_t>{9, 9, 9}));
}

TEST(SubjectKfold, TestSplitsPartitionManifest) {
  const auto m = build::manifest(27, 5);
  const auto f = subject_kfold(m, 3, 2);
  std::multiset<std::string> all;
  for (int k = 0; k < 3; ++k) {
    const auto split = fold_split(m, f, k);
    for (const auto& r : split.test.records) all.insert(r.image_ref);
    EXPECT_EQ(split.train.size() + split.test.size(), m.size());
    for (int j = k + 1; j < 3; ++j) {
      const auto other = subjects_of(fold_split(m, f, j).test);
      for (const auto& s : subjects_of(split.test)) EXPECT_FALSE(other.count(s));
    }
  }
  EXPECT_EQ(all, refs_of(m));
}

TEST(SubjectKfold, SeedDeterminism) {
  const auto m = build::manifest(27, 2);
  EXPECT_EQ(subject_kfold(m, 3, 5).fold_of_subject, subject_kfold(m, 3, 5).fold_of_subject);
  int distinct = 0;
  const auto base = subject_kfold(m, 3, 0).fold_of_subject;
  for (std::uint64_t s = 1; s <= 100; ++s) distinct += subject_kfold(m, 3, s).fold_of_subject != base;
  EXPECT_EQ(distinct, 100);
}

TEST(SubjectKfold, TooFewSubjectsIsConfigError) {
  EXPECT_THROW(subject_kfold(build::manifest(2, 3), 3, 0), ConfigError);
  EXPECT_THROW(subject_kfold(build::manifest(5, 3), 1, 0), ConfigError);
}

TEST(SubjectKfold, UncoveredSubjectIsConfigError) {
  const auto m = build::manifest(6, 2);
  auto f = subject_kfold(m, 3, 0);
  f.fold_of_subject.erase(f.fold_of_subject.begin());
  EXPECT_THROW(fold_split(m, f, 0), ConfigError);
}

// Property over many random manifests: no subject leaks and fold sizes are
// within one subject of each other.
TEST(SubjectKfold, NoLeakageAndBalancedOverRandomManifests) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t subjects = 3 + rng() % 60;
    const int k = 2 + int(rng() % std::min<std::size_t>(subjects - 1, 5));
    auto m = build::manifest(subjects, 1 + rng() % 4, 2, rng());
    const auto f = subject_kfold(m, k, rng());
    const auto sizes = f.fold_sizes();
    EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()), 1u);
    for (int fold = 0; fold < k; ++fold) {
      const auto split = fold_split(m, f, fold);
      const auto train = subjects_of(split.train);
      for (const auto& s : subjects_of(split.test)) ASSERT_FALSE(train.count(s));
    }
  }
}

TEST(SampleByImages, GenderBalancedThousand) {
  const auto m = build::manifest(100, 20);
  const auto s = sample_by_images(m, 1000, true, 3);
  EXPECT_EQ(s.size(), 1000u);
  const auto c = gender_counts(s);
  EXPECT_EQ(c.at(Gender::Male), 500u);
  EXPECT_EQ(c.at(Gender::Female), 500u);
}

TEST(SampleByImages, OddBalancedDiffersByOne) {
  const auto s = sample_by_images(build::manifest(10, 10), 7, true, 1);
  const auto c = gender_counts(s);
  EXPECT_EQ(s.size(), 7u);
  EXPECT_LE(std::max(c.at(Gender::Male), c.at(Gender::Female)) - std::min(c.at(Gender::Male), c.at(Gender::Female)),
            1u);
}

TEST(SampleByImages, FullSizeIsIdentity) {
  const auto m = build::manifest(10, 7);
  EXPECT_EQ(refs_of(sample_by_images(m, m.size(), false, 4)), refs_of(m));
}

TEST(SampleByImages, InsufficientImagesIsConfigError) {
  const auto m = build::manifest(4, 5);
  EXPECT_THROW(sample_by_images(m, 21, false, 0), ConfigError);
  EXPECT_THROW(sample_by_images(m, 22, true, 0), ConfigError);
}

TEST(SampleByImages, Deterministic) {
  const auto m = build::manifest(30, 10);
  EXPECT_EQ(refs_of(sample_by_images(m, 50, true, 8)), refs_of(sample_by_images(m, 50, true, 8)));
  EXPECT_NE(refs_of(sample_by_images(m, 50, true, 8)), refs_of(sample_by_images(m, 50, true, 9)));
}

// Each record's inclusion count over many seeds must fall inside the 99%
// binomial band; allow the expected 1% of records (plus slack) outside it.
TEST(SampleByImages, InclusionFrequencyIsUniform) {
  const auto m = build::manifest(1000, 160);  // 160,000 records
  const std::size_t n = 1000;
  const int seeds = 1000;
  std::vector<int> hits(m.size(), 0);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < m.size(); ++i) index[m.records[i].image_ref] = i;
  for (int s = 0; s < seeds; ++s)
    for (const auto& r : sample_by_images(m, n, false, std::uint64_t(s)).records) ++hits[index.at(r.image_ref)];
  const double p = double(n) / double(m.size());
  const double mean = seeds * p, sd = std::sqrt(seeds * p * (1 - p));
  // Poisson-like regime (mean 6.25): use exact binomial tail bounds.
  auto binom_cdf = [&](int k) {
    double term = std::pow(1 - p, seeds), cdf = 0;
    for (int i = 0; i <= k; ++i) {
      cdf += term;
      term *= double(seeds - i) / double(i + 1) * p / (1 - p);
    }
    return cdf;
  };
  int lo = 0, hi = int(mean + 10 * sd);
  while (binom_cdf(lo) < 0.005) ++lo;
  while (binom_cdf(hi - 1) > 0.995) --hi;
  std::size_t outside = 0;
  double total = 0;
  for (int h : hits) {
    outside += h < lo || h > hi;
    total += h;
  }
  EXPECT_DOUBLE_EQ(total, double(seeds) * double(n));
  EXPECT_LT(double(outside) / double(m.size()), 0.015) << "band [" << lo << "," << hi << "]";
}

TEST(SampleBySubjects, TwelveBalanced) {
  const auto m = build::manifest(40, 5);
  const auto s = sample_by_subjects(m, 12, true, 1);
  std::map<Gender, int> c;
  for (const auto& id : subjects_of(s)) {
    c[std::find_if(m.records.begin(), m.records.end(), [&](const auto& r) { return r.subject_id == id; })->gender]++;
  }
  EXPECT_EQ(c[Gender::Male], 6);
  EXPECT_EQ(c[Gender::Female], 6);
  EXPECT_EQ(s.size(), 60u);
}

TEST(SampleBySubjects, ExactSubjectCountAndAllImages) {
  const auto m = build::manifest(50, 4);
  for (std::size_t n : {1u, 7u, 25u, 50u}) {
    const auto s = sample_by_subjects(m, n, false, n);
    EXPECT_EQ(subjects_of(s).size(), n);
    EXPECT_EQ(s.size(), n * 4);
  }
  EXPECT_EQ(refs_of(sample_by_subjects(m, 50, false, 3)), refs_of(m));
}

TEST(SampleBySubjects, PerSubjectCap) {
  const auto m = build::manifest(20, 10);
  const auto s = sample_by_subjects(m, 8, true, 2, 3);
  EXPECT_EQ(subjects_of(s).size(), 8u);
  EXPECT_EQ(s.size(), 24u);
}

TEST(SampleBySubjects, InsufficientSubjectsIsConfigError) {
  EXPECT_THROW(sample_by_subjects(build::manifest(10, 2), 11, false, 0), ConfigError);
  EXPECT_THROW(sample_by_subjects(build::manifest(10, 2), 12, true, 0), ConfigError);
}

TEST(Holdout, SubjectHoldoutIsDisjoint) {
  const auto m = build::manifest(40, 3);
  const auto h = subject_holdout(m, 0.05, 1);
  EXPECT_EQ(subjects_of(h.test).size(), 2u);
  for (const auto& s : subjects_of(h.test)) EXPECT_FALSE(subjects_of(h.train).count(s));
  EXPECT_EQ(h.train.size() + h.test.size(), m.size());
  EXPECT_EQ(subjects_of(subject_holdout(build::manifest(3, 1), 0.01, 0).test).size(), 1u);
}

TEST(Holdout, ImageHoldoutFraction) {
  const auto m = build::manifest(20, 10);
  const auto h = image_holdout(m, 0.05, 1);
  EXPECT_EQ(h.test.size(), 10u);
  EXPECT_EQ(h.train.size(), 190u);
  auto all = refs_of(h.train);
  for (const auto& r : h.test.records) all.insert(r.image_ref);
  EXPECT_EQ(all, refs_of(m));
}
