#pragma once

// Seeded synthetic feature maps with planted channel roles.
//
// Every channel of every sample is a sparse non-negative plane: a fraction
// q of its S*S units are exactly zero (positions random) and the rest are
// amplitude * lognormal jitter. The zero fraction q controls the kurtosis of
// the channel, so the roles below differ in the statistic the edit
// algorithm looks at:
//   friendly  q is fixed per (class, channel) from well separated levels:
//             stable within a class, different between classes.
//   noisy     q is redrawn per sample over a wide range: unstable within
//             the class (large kurtosis variance).
//   flat      q is fixed per channel and shared by all classes: no
//             between-class signal.
// A per-sample gain multiplies every unit; kurtosis ignores it but a linear
// classifier does not. At test time `shift` perturbs noisy channels only,
// by a random per-sample gain in [1 - shift, 1 + shift].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "featedit/edit_mask.hpp"
#include "featedit/errors.hpp"
#include "featedit/rng.hpp"
#include "featedit/types.hpp"

namespace featedit {

struct SynthSpec {
  std::uint32_t num_classes = 3;
  std::size_t channels = 32;
  std::size_t spatial = 6;
  std::size_t n_per_class = 200;
  std::vector<std::vector<std::size_t>> friendly;  // per class
  std::vector<std::vector<std::size_t>> noisy;     // per class
  std::vector<std::size_t> flat;                   // shared
  std::uint64_t seed = 0;
  double shift = 1.0;

  // shape knobs
  std::vector<double> friendly_levels{0.20, 0.33, 0.46};  // zero fractions
  double level_jitter = 0.02;   // per-sample sd of q on friendly / flat channels
  double noisy_q_lo = 0.03;
  double noisy_q_hi = 0.50;
  double unit_sigma = 0.15;     // lognormal sd of non-zero units
  double gain_sigma = 0.35;     // lognormal sd of the per-sample gain

  /// Role of `channel` for class `c`; channels listed nowhere are "shared".
  enum class Role { friendly, noisy, flat, shared };
  Role role(std::uint32_t c, std::size_t channel) const {
    auto has = [&](const std::vector<std::size_t>& v) {
      return std::find(v.begin(), v.end(), channel) != v.end();
    };
    if (c < noisy.size() && has(noisy[c])) return Role::noisy;
    if (has(flat)) return Role::flat;
    if (c < friendly.size() && has(friendly[c])) return Role::friendly;
    return Role::shared;
  }

  void validate() const {
    if (num_classes == 0 || channels == 0 || spatial == 0 || n_per_class == 0)
      throw SpecError("T, C, S and n_per_class must be positive");
    if (noisy.size() > num_classes || friendly.size() > num_classes)
      throw SpecError("more per-class channel sets than classes");
    if (friendly_levels.empty()) throw SpecError("need at least one friendly level");
    if (!(shift >= 0.0 && shift <= 1.0)) throw SpecError("shift must lie in [0, 1]");
    auto check_range = [&](const std::vector<std::size_t>& v, const char* what) {
      std::set<std::size_t> seen;
      for (auto i : v) {
        if (i >= channels) throw SpecError(std::string(what) + " channel out of range");
        if (!seen.insert(i).second) throw SpecError(std::string(what) + " channel listed twice");
      }
    };
    check_range(flat, "flat");
    for (std::uint32_t c = 0; c < num_classes; ++c) {
      std::set<std::size_t> used(flat.begin(), flat.end());
      for (const auto* sets : {&noisy, &friendly}) {
        if (c >= sets->size()) continue;
        check_range((*sets)[c], "per-class");
        for (auto i : (*sets)[c])
          if (!used.insert(i).second)
            throw SpecError("channel " + std::to_string(i) + " has two roles in class " +
                            std::to_string(c));
      }
    }
  }
};

/// Default desk-scale layout: 10 shared flat channels and 4 noisy channels
/// per class (disjoint across classes), positions permuted by `seed`; every
/// other channel is friendly.
inline SynthSpec default_synth_spec(std::uint64_t seed, std::uint32_t num_classes = 3,
                                    std::size_t channels = 32, std::size_t n_flat = 10,
                                    std::size_t n_noisy = 4) {
  if (n_flat + num_classes * n_noisy > channels)
    throw SpecError("not enough channels for the requested roles");
  SynthSpec spec;
  spec.num_classes = num_classes;
  spec.channels = channels;
  spec.seed = seed;
  std::vector<std::size_t> perm(channels);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0xF1A7));
  for (std::size_t i = channels; i > 1; --i) std::swap(perm[i - 1], perm[uniform_below(rng, i)]);
  spec.flat.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_flat));
  std::sort(spec.flat.begin(), spec.flat.end());
  spec.noisy.resize(num_classes);
  spec.friendly.resize(num_classes);
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    auto first = perm.begin() + static_cast<std::ptrdiff_t>(n_flat + c * n_noisy);
    spec.noisy[c].assign(first, first + static_cast<std::ptrdiff_t>(n_noisy));
    std::sort(spec.noisy[c].begin(), spec.noisy[c].end());
    for (std::size_t i = 0; i < channels; ++i)
      if (spec.role(c, i) == SynthSpec::Role::shared) spec.friendly[c].push_back(i);
  }
  return spec;
}

struct SynthData {
  Dataset train, test;
  std::vector<GroundTruthRecord> train_gt, test_gt;
};

namespace detail {

struct ChannelPlan {
  // zero fraction per (class, channel) for friendly channels, per channel for flat/shared
  std::vector<std::vector<double>> class_level;
  std::vector<double> shared_level;
};

inline ChannelPlan plan_channels(const SynthSpec& spec) {
  ChannelPlan plan;
  Rng rng(mix_seed(spec.seed, 0x51A7));
  const auto& levels = spec.friendly_levels;
  plan.class_level.assign(spec.num_classes, std::vector<double>(spec.channels, 0.0));
  plan.shared_level.assign(spec.channels, 0.0);
  std::vector<std::size_t> idx(levels.size());
  for (std::size_t i = 0; i < spec.channels; ++i) {
    // Classes take distinct levels (cyclically when T exceeds the level count).
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t k = idx.size(); k > 1; --k) std::swap(idx[k - 1], idx[uniform_below(rng, k)]);
    for (std::uint32_t c = 0; c < spec.num_classes; ++c)
      plan.class_level[c][i] = levels[idx[c % idx.size()]];
    plan.shared_level[i] = levels.front() + (levels.back() - levels.front()) * uniform01(rng);
  }
  return plan;
}

inline void fill_channel(std::span<float> units, double zero_frac, double gain, double sigma,
                         Rng& rng) {
  const std::size_t n = units.size();
  const auto zeros = static_cast<std::size_t>(
      std::clamp(std::lround(zero_frac * static_cast<double>(n)), 0L, static_cast<long>(n) - 1));
  std::normal_distribution<double> jitter(0.0, sigma);
  for (auto& u : units) u = static_cast<float>(gain * std::exp(jitter(rng)));
  std::vector<std::size_t> pos(n);
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  for (std::size_t i = 0; i < zeros; ++i) {
    std::swap(pos[i], pos[i + uniform_below(rng, n - i)]);
    units[pos[i]] = 0.0f;
  }
}

inline LabeledSample draw_sample(const SynthSpec& spec, const ChannelPlan& plan, std::uint32_t c,
                                 std::uint32_t image_id, bool test, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  LabeledSample s;
  s.class_id = c;
  s.image_id = image_id;
  s.feature = FeatureMap(spec.channels, spec.spatial);
  const double gain = std::exp(spec.gain_sigma * normal(rng));
  for (std::size_t i = 0; i < spec.channels; ++i) {
    double q = 0.0, g = gain;
    switch (spec.role(c, i)) {
      case SynthSpec::Role::friendly:
        q = plan.class_level[c][i] + spec.level_jitter * normal(rng);
        break;
      case SynthSpec::Role::noisy:
        q = spec.noisy_q_lo + (spec.noisy_q_hi - spec.noisy_q_lo) * uniform01(rng);
        if (test) g *= 1.0 + spec.shift * (2.0 * uniform01(rng) - 1.0);
        break;
      case SynthSpec::Role::flat:
      case SynthSpec::Role::shared:
        q = plan.shared_level[i] + spec.level_jitter * normal(rng);
        break;
    }
    fill_channel(s.feature.channel(i), q, g, spec.unit_sigma, rng);
  }
  return s;
}

/// Object box inside a 500 x 375 image and a proposal jittered around it.
inline std::pair<Box, Box> draw_boxes(Rng& rng) {
  auto f = [](double v) { return static_cast<double>(static_cast<float>(std::round(v * 4) / 4)); };
  const double w = 80 + 170 * uniform01(rng), h = 80 + 170 * uniform01(rng);
  const double x1 = (500 - w) * uniform01(rng), y1 = (375 - h) * uniform01(rng);
  const Box gt{f(x1), f(y1), f(x1 + w), f(y1 + h)};
  auto jit = [&](double scale) { return 0.08 * scale * (2 * uniform01(rng) - 1); };
  const Box proposal{f(x1 + jit(w)), f(y1 + jit(h)), f(x1 + w + jit(w)), f(y1 + h + jit(h))};
  return {gt, proposal};
}

inline Dataset draw_split(const SynthSpec& spec, const ChannelPlan& plan, bool test,
                          std::vector<GroundTruthRecord>& gts) {
  Dataset d(spec.num_classes, spec.channels, spec.spatial);
  d.reserve(spec.num_classes * spec.n_per_class);
  const std::uint64_t stream = test ? 0x7E57 : 0x7A1;
  std::uint32_t image = test ? 1000000u : 0u;
  std::uint64_t index = 0;
  for (std::uint32_t c = 0; c < spec.num_classes; ++c)
    for (std::size_t k = 0; k < spec.n_per_class; ++k, ++image, ++index) {
      Rng rng(mix_seed(mix_seed(spec.seed, stream), index));
      auto sample = draw_sample(spec, plan, c, image, test, rng);
      auto [gt, proposal] = draw_boxes(rng);
      sample.box = proposal;
      gts.push_back({image, c, gt, false});
      d.push_back(std::move(sample));
    }
  return d;
}

}  // namespace detail

/// Train and test splits, classes in blocks of n_per_class samples. Each
/// sample is one image holding one object; the sample's box is a proposal
/// near the object and the ground truth lists the object box.
inline SynthData generate(const SynthSpec& spec) {
  spec.validate();
  const auto plan = detail::plan_channels(spec);
  SynthData out;
  out.train = detail::draw_split(spec, plan, false, out.train_gt);
  out.test = detail::draw_split(spec, plan, true, out.test_gt);
  return out;
}

struct RecoveryStats {
  std::size_t noisy_planted = 0, noisy_found = 0;        // noisy channels in dropped_intra
  std::size_t flat_planted = 0, flat_found = 0;          // flat channels in dropped_inter
  std::size_t friendly_total = 0, friendly_dropped = 0;  // friendly channels dropped at all

  double noisy_recall() const { return noisy_planted ? double(noisy_found) / noisy_planted : 1.0; }
  double flat_recall() const { return flat_planted ? double(flat_found) / flat_planted : 1.0; }
  double friendly_drop_rate() const {
    return friendly_total ? double(friendly_dropped) / friendly_total : 0.0;
  }
  RecoveryStats& operator+=(const RecoveryStats& o) {
    noisy_planted += o.noisy_planted;
    noisy_found += o.noisy_found;
    flat_planted += o.flat_planted;
    flat_found += o.flat_found;
    friendly_total += o.friendly_total;
    friendly_dropped += o.friendly_dropped;
    return *this;
  }
};

/// How well per-class masks recovered the planted roles, pooled over classes.
inline RecoveryStats score_recovery(const SynthSpec& spec, std::span<const EditMask> masks) {
  RecoveryStats r;
  for (const auto& m : masks) {
    const auto c = m.class_id;
    auto in = [](const std::vector<std::size_t>& v, std::size_t i) {
      return std::find(v.begin(), v.end(), i) != v.end();
    };
    if (c < spec.noisy.size())
      for (auto i : spec.noisy[c]) {
        ++r.noisy_planted;
        r.noisy_found += in(m.dropped_intra, i);
      }
    for (auto i : spec.flat) {
      ++r.flat_planted;
      r.flat_found += in(m.dropped_inter, i);
    }
    if (c < spec.friendly.size())
      for (auto i : spec.friendly[c]) {
        ++r.friendly_total;
        r.friendly_dropped += m.keep[i] == 0;
      }
  }
  return r;
}

inline nlohmann::json spec_to_json(const SynthSpec& spec) {
  return {{"num_classes", spec.num_classes},
          {"channels", spec.channels},
          {"spatial", spec.spatial},
          {"n_per_class", spec.n_per_class},
          {"seed", spec.seed},
          {"shift", spec.shift},
          {"flat", spec.flat},
          {"noisy", spec.noisy},
          {"friendly", spec.friendly},
          {"friendly_levels", spec.friendly_levels},
          {"level_jitter", spec.level_jitter},
          {"noisy_q_lo", spec.noisy_q_lo},
          {"noisy_q_hi", spec.noisy_q_hi},
          {"unit_sigma", spec.unit_sigma},
          {"gain_sigma", spec.gain_sigma}};
}

inline SynthSpec spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.num_classes = j.at("num_classes").get<std::uint32_t>();
    s.channels = j.at("channels").get<std::size_t>();
    s.spatial = j.at("spatial").get<std::size_t>();
    s.n_per_class = j.at("n_per_class").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.shift = j.at("shift").get<double>();
    s.flat = j.at("flat").get<std::vector<std::size_t>>();
    s.noisy = j.at("noisy").get<std::vector<std::vector<std::size_t>>>();
    s.friendly = j.at("friendly").get<std::vector<std::vector<std::size_t>>>();
    s.friendly_levels = j.value("friendly_levels", s.friendly_levels);
    s.level_jitter = j.value("level_jitter", s.level_jitter);
    s.noisy_q_lo = j.value("noisy_q_lo", s.noisy_q_lo);
    s.noisy_q_hi = j.value("noisy_q_hi", s.noisy_q_hi);
    s.unit_sigma = j.value("unit_sigma", s.unit_sigma);
    s.gain_sigma = j.value("gain_sigma", s.gain_sigma);
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("bad synth sidecar: ") + e.what());
  }
  s.validate();
  return s;
}

}  // namespace featedit
