#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "featedit/featedit.hpp"
#include "featedit/oracles.hpp"
#include "support/fixtures.hpp"

using namespace featedit;

namespace {

std::vector<std::uint32_t> labels_of(const Dataset& d) {
  std::vector<std::uint32_t> out;
  for (const auto& s : d) out.push_back(s.class_id);
  return out;
}

VarianceProfile seeded_profile(std::uint64_t seed, std::size_t T, std::size_t C) {
  Rng rng(seed);
  std::exponential_distribution<double> e(1.0);
  VarianceProfile p;
  p.intra = Matrix(T, C);
  p.class_means = Matrix(T, C);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < C; ++i) p.intra(t, i) = e(rng);
  for (std::size_t i = 0; i < C; ++i) {
    p.grand_mean.push_back(0);
    p.inter.push_back(e(rng));
  }
  return p;
}

std::set<std::size_t> as_set(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(VarianceProfileTest, HandComputedTwoClassCase) {
  Matrix stats(4, 2, {0, 1, 0, 1, 2, 1, 2, 1});
  const std::vector<std::uint32_t> labels{0, 0, 1, 1};
  const auto p = variance_profile(stats, labels, 2);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(p.intra(t, i), 0.0);
  EXPECT_EQ(p.inter[0], 1.0);
  EXPECT_EQ(p.inter[1], 0.0);
  EXPECT_EQ(p.grand_mean[0], 1.0);
}

TEST(VarianceProfileTest, SingleClassIdenticalRowsIsAllZero) {
  Matrix stats(3, 4, 0.7);
  const std::vector<std::uint32_t> labels{0, 0, 0};
  const auto p = variance_profile(stats, labels, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(p.intra(0, i), 0.0);
    EXPECT_EQ(p.inter[i], 0.0);
  }
}

TEST(VarianceProfileTest, MatchesNaiveOracle) {
  const auto d = fixtures::random_dataset(33, 5, 12, 4, 100);
  const auto stats = stats_matrix(d);
  const auto labels = labels_of(d);
  const auto p = variance_profile(stats, labels, 5);
  const auto o = oracle::profile(fixtures::rows_of(stats), labels, 5);
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t i = 0; i < 12; ++i) {
      EXPECT_TRUE(close(p.intra(t, i), o.intra[t][i]));
      EXPECT_TRUE(close(p.class_means(t, i), o.class_means[t][i]));
    }
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_TRUE(close(p.inter[i], o.inter[i]));
    EXPECT_TRUE(close(p.grand_mean[i], o.grand_mean[i]));
  }
}

TEST(VarianceProfileTest, PermutationWithinClassInvariant) {
  const auto d = fixtures::random_dataset(4, 3, 8, 3, 60);
  const auto stats = stats_matrix(d);
  const auto labels = labels_of(d);
  std::vector<std::size_t> perm(d.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), Rng(1));
  Matrix shuffled(stats.rows(), stats.cols());
  std::vector<std::uint32_t> shuffled_labels;
  for (std::size_t r = 0; r < perm.size(); ++r) {
    std::copy(stats.row(perm[r]).begin(), stats.row(perm[r]).end(), shuffled.row(r).begin());
    shuffled_labels.push_back(labels[perm[r]]);
  }
  const auto a = variance_profile(stats, labels, 3);
  const auto b = variance_profile(shuffled, shuffled_labels, 3);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(a.intra(t, i), b.intra(t, i), 1e-12);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(a.inter[i], b.inter[i], 1e-12);
}

TEST(VarianceProfileTest, Errors) {
  Matrix stats(2, 2, 1.0);
  const std::vector<std::uint32_t> labels{0, 0};
  EXPECT_THROW(variance_profile(stats, labels, 2), MissingClassError);
  const std::vector<std::uint32_t> bad{0, 5};
  EXPECT_THROW(variance_profile(stats, bad, 2), ClassIdError);
  const std::vector<std::uint32_t> short_labels{0};
  EXPECT_THROW(variance_profile(stats, short_labels, 1), ShapeError);
}

TEST(DropDistribution, Examples) {
  const std::vector<double> ones{1, 1, 1, 1};
  EXPECT_EQ(drop_distribution(ones).p, (std::vector<double>{0.25, 0.25, 0.25, 0.25}));
  const std::vector<double> v{3, 1, 0, 0};
  EXPECT_EQ(drop_distribution(v).p, (std::vector<double>{0.75, 0.25, 0, 0}));
  const std::vector<double> zeros(5, 0.0);
  EXPECT_TRUE(drop_distribution(zeros).undefined);
  const std::vector<double> neg{1, -1};
  EXPECT_THROW(drop_distribution(neg), DomainError);
}

TEST(BuildMask, CardinalityAtC256) {
  const auto p = seeded_profile(1, 3, 256);
  for (std::uint32_t t = 0; t < 3; ++t) {
    const auto m = build_mask(p, t, {});
    EXPECT_EQ(m.dropped_intra.size(), 51u);
    EXPECT_EQ(m.dropped_inter.size(), 76u);
    EXPECT_GE(m.dropped_count(), 76u);
    EXPECT_LE(m.dropped_count(), 127u);
  }
}

TEST(BuildMask, TiesPreferLowerIndex) {
  VarianceProfile p;
  p.intra = Matrix(1, 10, 2.0);
  p.class_means = Matrix(1, 10);
  p.grand_mean.assign(10, 0.0);
  p.inter.assign(10, 1.0);
  const auto m = build_mask(p, 0, {});
  EXPECT_EQ(m.dropped_intra, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(m.dropped_inter, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(BuildMask, MatchesFullSortOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto d = fixtures::random_dataset(seed, 3, 16, 4, 60);
    const auto stats = stats_matrix(d);
    const auto labels = labels_of(d);
    const auto p = variance_profile(stats, labels, 3);
    const auto o = oracle::profile(fixtures::rows_of(stats), labels, 3);
    for (std::uint32_t t = 0; t < 3; ++t) {
      const auto m = build_mask(p, t, {});
      const auto om = oracle::mask(o, t, 0.2, 0.3);
      EXPECT_EQ(as_set(m.dropped_intra), om.intra);
      EXPECT_EQ(as_set(m.dropped_inter), om.inter);
    }
  }
}

TEST(BuildMask, InvariantsAcrossClasses) {
  const auto p = seeded_profile(7, 4, 40);
  const auto masks = build_masks(p, {});
  for (const auto& m : masks) {
    EXPECT_EQ(m.dropped_inter, masks[0].dropped_inter);
    for (std::size_t i = 0; i < 40; ++i) {
      const bool dropped = std::count(m.dropped_intra.begin(), m.dropped_intra.end(), i) ||
                           std::count(m.dropped_inter.begin(), m.dropped_inter.end(), i);
      EXPECT_EQ(m.keep[i] == 0, dropped);
    }
  }
}

TEST(BuildMask, DegenerateCriteria) {
  VarianceProfile p;
  p.intra = Matrix(2, 5, 0.0);
  p.class_means = Matrix(2, 5);
  p.grand_mean.assign(5, 0.0);
  p.inter = {0.1, 0.2, 0.3, 0.4, 0.5};
  auto m = build_mask(p, 0, {});
  EXPECT_TRUE(m.dropped_intra.empty());
  EXPECT_EQ(m.dropped_inter, (std::vector<std::size_t>{0}));

  p.intra(1, 3) = 1.0;
  p.inter.assign(5, 0.0);
  m = build_mask(p, 1, {});
  EXPECT_EQ(m.dropped_intra, (std::vector<std::size_t>{3}));
  EXPECT_TRUE(m.dropped_inter.empty());
  EXPECT_THROW(build_mask(p, 0, {}), DegenerateDatasetError);
  EXPECT_THROW(build_mask(p, 2, {}), ClassIdError);
}

TEST(BuildMask, ScaleInvariant) {
  const auto d = fixtures::random_dataset(12, 3, 16, 4, 90);
  const auto base = build_masks(variance_profile(d), {});
  for (float lambda : {1e-3f, 7.0f, 1e3f}) {
    Dataset scaled(d.num_classes(), d.channels(), d.spatial());
    for (auto s : d) {
      for (auto& v : s.feature.values()) v *= lambda;
      scaled.push_back(std::move(s));
    }
    const auto masks = build_masks(variance_profile(scaled), {});
    for (std::size_t t = 0; t < masks.size(); ++t) {
      EXPECT_EQ(masks[t].dropped_intra, base[t].dropped_intra) << lambda;
      EXPECT_EQ(masks[t].dropped_inter, base[t].dropped_inter) << lambda;
    }
  }
}

TEST(ApplyMask, IdentityAndSingleChannel) {
  const auto d = fixtures::random_dataset(3, 1, 6, 6, 1);
  const auto& m = d[0].feature;
  EXPECT_EQ(apply_mask(m, EditMask::keep_all(0, 6)), m);
  EditMask k = EditMask::keep_all(0, 6);
  k.keep[3] = 0;
  const auto out = apply_mask(m, k);
  for (auto v : out.channel(3)) EXPECT_EQ(v, 0.0f);
  for (std::size_t c = 0; c < 6; ++c) {
    if (c == 3) continue;
    for (std::size_t u = 0; u < 36; ++u) EXPECT_EQ(out.channel(c)[u], m.channel(c)[u]);
  }
  EXPECT_EQ(apply_mask(out, k), out);
  EXPECT_THROW(apply_mask(m, EditMask::keep_all(0, 5)), ShapeError);
}

TEST(ApplyMask, MatchesUnitLoop) {
  const auto d = fixtures::random_dataset(9, 1, 8, 3, 1);
  Rng rng(2);
  EditMask k = EditMask::keep_all(0, 8);
  for (auto& b : k.keep) b = static_cast<std::uint8_t>(rng() & 1);
  const auto out = apply_mask(d[0].feature, k);
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t col = 0; col < 3; ++col)
        EXPECT_EQ(out.at(c, r, col), k.keep[c] ? d[0].feature.at(c, r, col) : 0.0f);
}

TEST(RandomEdit, ExactZeroCount) {
  FeatureMap m(256, 6);
  for (auto& v : m.values()) v = 1.0f;
  Rng rng(1);
  const auto out = random_edit(m, 0.5, rng);
  EXPECT_EQ(std::count(out.values().begin(), out.values().end(), 0.0f), 3072);
  EXPECT_EQ(random_edit_count(9216, 0.5), 3072u);
}

TEST(RandomEdit, ZeroRatioIsIdentityAndSeedDeterministic) {
  const auto d = fixtures::random_dataset(3, 1, 4, 6, 1);
  Rng a(5), b(5);
  EXPECT_EQ(random_edit(d[0].feature, 0.0, a), d[0].feature);
  Rng c(9), e(9);
  EXPECT_EQ(random_edit(d[0].feature, 0.3, c), random_edit(d[0].feature, 0.3, e));
  Rng f(1);
  EXPECT_THROW(random_edit(d[0].feature, 1.0, f), ConfigError);
  EXPECT_EQ(random_edit_dataset(d, 0.4, 3), random_edit_dataset(d, 0.4, 3));
}

TEST(EditDataset, UsesOwnClassMaskAndKeepsFields) {
  const auto d = fixtures::random_dataset(6, 3, 8, 3, 30);
  const auto masks = build_masks(variance_profile(d), {});
  const auto e = edit_dataset(d, masks);
  ASSERT_EQ(e.size(), d.size());
  EXPECT_TRUE(e.same_geometry(d));
  for (std::size_t j = 0; j < d.size(); ++j) {
    EXPECT_EQ(e[j].feature, apply_mask(d[j].feature, masks[d[j].class_id]));
    EXPECT_EQ(e[j].box, d[j].box);
    EXPECT_EQ(e[j].image_id, d[j].image_id);
    EXPECT_EQ(e[j].class_id, d[j].class_id);
    EXPECT_EQ(e[j].difficult, d[j].difficult);
  }
  std::vector<EditMask> keep;
  for (std::uint32_t t = 0; t < 3; ++t) keep.push_back(EditMask::keep_all(t, 8));
  EXPECT_EQ(edit_dataset(d, keep), d);
  keep.pop_back();
  EXPECT_THROW(edit_dataset(d, keep), MissingClassError);
}

TEST(EditDataset, SingleClassDroppedChannelEverywhere) {
  const auto d = fixtures::random_dataset(6, 1, 4, 3, 10);
  EditMask k = EditMask::keep_all(0, 4);
  k.keep[2] = 0;
  k.dropped_intra = {2};
  const std::vector<EditMask> masks{k};
  for (const auto& s : edit_dataset(d, masks))
    for (auto v : s.feature.channel(2)) EXPECT_EQ(v, 0.0f);
}

TEST(Merge, OrderCountsAndErrors) {
  const auto a = fixtures::random_dataset(1, 2, 4, 3, 3);
  const auto b = fixtures::random_dataset(2, 2, 4, 3, 2);
  const auto m = merge_datasets(a, b);
  ASSERT_EQ(m.size(), 5u);
  EXPECT_EQ(m[0], a[0]);
  EXPECT_EQ(m[3], b[0]);
  const auto ca = a.class_counts(), cb = b.class_counts(), cm = m.class_counts();
  for (std::size_t t = 0; t < 2; ++t) EXPECT_EQ(cm[t], ca[t] + cb[t]);
  EXPECT_EQ(merge_datasets(a, Dataset(2, 4, 3)), a);
  EXPECT_THROW(merge_datasets(a, Dataset(2, 5, 3)), ShapeError);
}

TEST(MasksCsv, RoundTrip) {
  const auto masks = build_masks(seeded_profile(3, 3, 20), {});
  std::ostringstream s;
  write_masks_csv(s, masks);
  EXPECT_EQ(parse_masks_csv(s.str()), masks);
  EXPECT_THROW(parse_masks_csv("class_id,channel,keep,reason\n0,0,1,intra\n"), ParseError);
}
