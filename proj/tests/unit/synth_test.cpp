#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "featedit/featedit.hpp"
#include "featedit/oracles.hpp"
#include "support/fixtures.hpp"

using namespace featedit;

namespace {

SynthSpec small_spec(std::uint64_t seed) {
  auto spec = default_synth_spec(seed, 3, 24, 6, 3);
  spec.n_per_class = 60;
  return spec;
}

double mean_of(const VarianceProfile& p, const SynthSpec& spec, SynthSpec::Role role, bool intra) {
  double sum = 0;
  std::size_t n = 0;
  for (std::uint32_t c = 0; c < spec.num_classes; ++c)
    for (std::size_t i = 0; i < spec.channels; ++i)
      if (spec.role(c, i) == role) {
        sum += intra ? p.intra(c, i) : p.inter[i];
        ++n;
      }
  return sum / n;
}

}  // namespace

TEST(Synth, DeterministicPerSeed) {
  const auto a = generate(small_spec(5));
  const auto b = generate(small_spec(5));
  EXPECT_EQ(encode_dataset(a.train), encode_dataset(b.train));
  EXPECT_EQ(encode_dataset(a.test), encode_dataset(b.test));
  EXPECT_EQ(a.test_gt, b.test_gt);
  const auto c = generate(small_spec(6));
  EXPECT_NE(encode_dataset(a.train), encode_dataset(c.train));
}

TEST(Synth, ShapeAndLabels) {
  const auto spec = small_spec(1);
  const auto data = generate(spec);
  EXPECT_EQ(data.train.size(), 180u);
  EXPECT_EQ(data.test.size(), 180u);
  EXPECT_EQ(data.train.class_counts(), (std::vector<std::size_t>{60, 60, 60}));
  EXPECT_EQ(data.train.channels(), 24u);
  EXPECT_EQ(data.train.spatial(), 6u);
  EXPECT_EQ(data.train_gt.size(), data.train.size());
  for (std::size_t j = 0; j < data.train.size(); ++j) {
    EXPECT_EQ(data.train_gt[j].image_id, data.train[j].image_id);
    EXPECT_GE(iou(data.train_gt[j].box, data.train[j].box), 0.5);
  }
}

TEST(Synth, OverlappingRolesAreRejected) {
  auto spec = small_spec(1);
  spec.noisy[0].push_back(spec.flat[0]);
  EXPECT_THROW(spec.validate(), SpecError);
  EXPECT_THROW(generate(spec), SpecError);
  auto far = small_spec(1);
  far.flat.push_back(99);
  EXPECT_THROW(far.validate(), SpecError);
}

TEST(Synth, PlantedSemanticsAreMeasurable) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto spec = default_synth_spec(seed);
    spec.n_per_class = 100;
    const auto p = variance_profile(generate(spec).train);
    EXPECT_GT(mean_of(p, spec, SynthSpec::Role::noisy, true), mean_of(p, spec, SynthSpec::Role::friendly, true))
        << "seed " << seed;
    EXPECT_LT(mean_of(p, spec, SynthSpec::Role::flat, false), mean_of(p, spec, SynthSpec::Role::friendly, false))
        << "seed " << seed;
  }
}

TEST(Synth, NoDriftMeansMatchingDistributions) {
  auto spec = small_spec(2);
  spec.shift = 0.0;
  spec.n_per_class = 150;
  const auto data = generate(spec);
  const auto a = variance_profile(data.train), b = variance_profile(data.test);
  const double n = static_cast<double>(spec.n_per_class);
  for (std::uint32_t c = 0; c < spec.num_classes; ++c)
    for (std::size_t i = 0; i < spec.channels; ++i) {
      const double std_err = std::sqrt((a.intra(c, i) + b.intra(c, i)) / n);
      EXPECT_LE(std::abs(a.class_means(c, i) - b.class_means(c, i)), 5.0 * std_err + 1e-12)
          << "class " << c << " channel " << i;
    }
}

TEST(Synth, OnlyFriendlyChannelsStillDropFixedCounts) {
  auto spec = default_synth_spec(3, 3, 20, 0, 0);
  spec.n_per_class = 40;
  const auto masks = build_masks(variance_profile(generate(spec).train), {});
  for (const auto& m : masks) {
    EXPECT_GE(m.dropped_count(), 6u);
    for (std::size_t i = 0; i < 20; ++i)
      if (!m.keep[i]) EXPECT_EQ(spec.role(m.class_id, i), SynthSpec::Role::friendly);
  }
}

TEST(Synth, MasksAgreeWithOracleOnSeededSet) {
  auto spec = default_synth_spec(8, 3, 16, 4, 2);
  spec.n_per_class = 50;
  const auto d = generate(spec).train;
  const auto stats = stats_matrix(d);
  std::vector<std::uint32_t> labels;
  for (const auto& s : d) labels.push_back(s.class_id);
  const auto o = oracle::profile(oracle::stats(d), labels, 3);
  for (const auto& m : build_masks(variance_profile(stats, labels, 3), {})) {
    const auto om = oracle::mask(o, m.class_id, 0.2, 0.3);
    EXPECT_EQ(std::set<std::size_t>(m.dropped_intra.begin(), m.dropped_intra.end()), om.intra);
    EXPECT_EQ(std::set<std::size_t>(m.dropped_inter.begin(), m.dropped_inter.end()), om.inter);
  }
}

TEST(Synth, RecoveryScoring) {
  auto spec = default_synth_spec(0, 2, 10, 2, 1);
  std::vector<EditMask> masks;
  for (std::uint32_t c = 0; c < 2; ++c) {
    EditMask m = EditMask::keep_all(c, 10);
    m.dropped_intra = spec.noisy[c];
    m.dropped_inter = {spec.flat[0]};
    for (auto i : m.dropped_intra) m.keep[i] = 0;
    for (auto i : m.dropped_inter) m.keep[i] = 0;
    masks.push_back(m);
  }
  const auto r = score_recovery(spec, masks);
  EXPECT_EQ(r.noisy_recall(), 1.0);
  EXPECT_EQ(r.flat_recall(), 0.5);
  EXPECT_EQ(r.friendly_drop_rate(), 0.0);
}

TEST(Synth, JsonSidecarRoundTrip) {
  const auto spec = small_spec(4);
  const auto back = spec_from_json(nlohmann::json::parse(spec_to_json(spec).dump()));
  EXPECT_EQ(back.flat, spec.flat);
  EXPECT_EQ(back.noisy, spec.noisy);
  EXPECT_EQ(back.friendly, spec.friendly);
  EXPECT_EQ(back.seed, spec.seed);
  EXPECT_EQ(encode_dataset(generate(back).train), encode_dataset(generate(spec).train));
  EXPECT_THROW(spec_from_json(nlohmann::json{{"channels", 3}}), SpecError);
}

TEST(Oracles, RefuseLargeInputs) {
  std::vector<DetectionRecord> many(51, {0, 0, 0.5, {0, 0, 1, 1}});
  EXPECT_THROW(oracle::nms(many, 0.3), OracleScaleError);
  const std::vector<std::vector<double>> rows(1001, std::vector<double>(2, 0.0));
  const std::vector<std::uint32_t> labels(1001, 0);
  EXPECT_THROW(oracle::profile(rows, labels, 1), OracleScaleError);
}

TEST(Oracles, ConstantDatasetGivesZeroProfileOnBothPaths) {
  Dataset d(2, 3, 2);
  for (std::uint32_t j = 0; j < 6; ++j) {
    FeatureMap f(3, 2);
    for (auto& v : f.values()) v = 2.0f;
    d.push_back({f, j % 2, {0, 0, 1, 1}, j, false});
  }
  const auto p = variance_profile(d);
  std::vector<std::uint32_t> labels;
  for (const auto& s : d) labels.push_back(s.class_id);
  const auto o = oracle::profile(oracle::stats(d), labels, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(p.inter[i], 0.0);
    EXPECT_EQ(o.inter[i], 0.0);
    EXPECT_EQ(p.intra(0, i), 0.0);
    EXPECT_EQ(o.intra[1][i], 0.0);
  }
}
