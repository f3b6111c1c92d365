#pragma once

// Channel editing: variance profiles of per-channel kurtosis, drop
// distributions, per-class edit masks and their application to feature maps.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "featedit/channel_stats.hpp"
#include "featedit/edit_mask.hpp"
#include "featedit/errors.hpp"
#include "featedit/feature_io.hpp"
#include "featedit/matrix.hpp"
#include "featedit/rng.hpp"
#include "featedit/types.hpp"

namespace featedit {

struct VarianceProfile {
  Matrix intra;                     // T x C, variance of kurtosis within each class
  Matrix class_means;               // T x C, mean kurtosis per class
  std::vector<double> grand_mean;   // C, unweighted mean of class_means over classes
  std::vector<double> inter;        // C, variance of class_means around grand_mean

  std::size_t num_classes() const { return intra.rows(); }
  std::size_t channels() const { return intra.cols(); }
};

struct EditConfig {
  double intra_frac = 0.20;
  double inter_frac = 0.30;
  std::uint64_t seed = 0;  // random-edit baseline only

  void validate() const {
    if (!(intra_frac >= 0.0 && intra_frac <= 1.0) || !(inter_frac >= 0.0 && inter_frac <= 1.0))
      throw ConfigError("edit fractions must lie in [0, 1]");
  }
};

/// floor(frac * count), immune to representation error such as 0.29 * 100.
inline std::size_t fraction_count(double frac, std::size_t count) {
  return static_cast<std::size_t>(std::floor(frac * static_cast<double>(count) + 1e-9));
}

inline VarianceProfile variance_profile(const ChannelStatsMatrix& stats,
                                        std::span<const std::uint32_t> labels,
                                        std::size_t num_classes) {
  if (labels.size() != stats.rows())
    throw ShapeError("one label per stats row required (" + std::to_string(labels.size()) +
                     " labels, " + std::to_string(stats.rows()) + " rows)");
  const std::size_t c_count = stats.cols();
  std::vector<std::size_t> counts(num_classes, 0);
  for (auto l : labels) {
    if (l >= num_classes) throw ClassIdError("label " + std::to_string(l) + " >= T");
    ++counts[l];
  }
  for (std::size_t t = 0; t < num_classes; ++t)
    if (counts[t] == 0) throw MissingClassError("class " + std::to_string(t) + " has no samples");
  for (double v : stats.data())
    if (!std::isfinite(v)) throw ValueError("non-finite statistic");

  // Moments are taken about a pivot (the class's first row, or the first
  // class mean) so that identical values yield exactly zero variance.
  std::vector<std::size_t> pivot_row(num_classes, stats.rows());
  for (std::size_t j = stats.rows(); j-- > 0;) pivot_row[labels[j]] = j;

  VarianceProfile p;
  p.class_means = Matrix(num_classes, c_count);
  p.intra = Matrix(num_classes, c_count);
  Matrix shift_mean(num_classes, c_count);
  for (std::size_t j = 0; j < stats.rows(); ++j)
    for (std::size_t i = 0; i < c_count; ++i)
      shift_mean(labels[j], i) += stats(j, i) - stats(pivot_row[labels[j]], i);
  for (std::size_t t = 0; t < num_classes; ++t)
    for (std::size_t i = 0; i < c_count; ++i) {
      shift_mean(t, i) /= static_cast<double>(counts[t]);
      p.class_means(t, i) = stats(pivot_row[t], i) + shift_mean(t, i);
    }

  for (std::size_t j = 0; j < stats.rows(); ++j)
    for (std::size_t i = 0; i < c_count; ++i) {
      const std::size_t t = labels[j];
      const double d = (stats(j, i) - stats(pivot_row[t], i)) - shift_mean(t, i);
      p.intra(t, i) += d * d;
    }
  for (std::size_t t = 0; t < num_classes; ++t)
    for (std::size_t i = 0; i < c_count; ++i) p.intra(t, i) /= static_cast<double>(counts[t]);

  p.grand_mean.assign(c_count, 0.0);
  p.inter.assign(c_count, 0.0);
  for (std::size_t i = 0; i < c_count; ++i) {
    const double pivot = p.class_means(0, i);
    double m = 0.0;
    for (std::size_t t = 0; t < num_classes; ++t) m += p.class_means(t, i) - pivot;
    m /= static_cast<double>(num_classes);
    p.grand_mean[i] = pivot + m;
    for (std::size_t t = 0; t < num_classes; ++t) {
      const double d = (p.class_means(t, i) - pivot) - m;
      p.inter[i] += d * d;
    }
    p.inter[i] /= static_cast<double>(num_classes);
  }
  return p;
}

/// Profile of a whole dataset: kurtosis statistics grouped by class label.
inline VarianceProfile variance_profile(const Dataset& d) {
  std::vector<std::uint32_t> labels;
  labels.reserve(d.size());
  for (const auto& s : d) labels.push_back(s.class_id);
  return variance_profile(stats_matrix(d), labels, d.num_classes());
}

/// p_i = v_i / sum(v); flagged undefined when sum(v) == 0.
inline ProbabilityVector drop_distribution(std::span<const double> variances) {
  double total = 0.0;
  for (double v : variances) {
    if (!std::isfinite(v)) throw DomainError("non-finite variance");
    if (v < 0.0) throw DomainError("negative variance");
    total += v;
  }
  ProbabilityVector pv;
  pv.p.assign(variances.size(), 0.0);
  if (total == 0.0) {
    pv.undefined = true;
    return pv;
  }
  for (std::size_t i = 0; i < variances.size(); ++i) pv.p[i] = variances[i] / total;
  return pv;
}

namespace detail {

/// The `count` channels with the largest (or smallest) probability; equal
/// values prefer the lower channel index. Result in ascending channel order.
inline std::vector<std::size_t> select_channels(const ProbabilityVector& pv, std::size_t count,
                                                bool largest) {
  if (pv.undefined || count == 0) return {};
  std::vector<std::size_t> order(pv.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  count = std::min(count, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (pv.p[a] != pv.p[b]) return largest ? pv.p[a] > pv.p[b] : pv.p[a] < pv.p[b];
                      return a < b;
                    });
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace detail

/// Edit mask for one class: drops the intra_frac*C channels least stable
/// within the class and the inter_frac*C channels that vary least between
/// classes. A criterion whose variances are all zero drops nothing.
inline EditMask build_mask(const VarianceProfile& profile, std::uint32_t class_id,
                           const EditConfig& cfg) {
  cfg.validate();
  if (class_id >= profile.num_classes())
    throw ClassIdError("class " + std::to_string(class_id) + " >= T=" +
                       std::to_string(profile.num_classes()));
  const std::size_t c_count = profile.channels();
  const auto intra = drop_distribution(profile.intra.row(class_id));
  const auto inter = drop_distribution(profile.inter);
  if (intra.undefined && inter.undefined)
    throw DegenerateDatasetError("both intra (class " + std::to_string(class_id) +
                                 ") and inter variances are all zero");

  EditMask mask;
  mask.class_id = class_id;
  mask.dropped_intra = detail::select_channels(intra, fraction_count(cfg.intra_frac, c_count), true);
  mask.dropped_inter = detail::select_channels(inter, fraction_count(cfg.inter_frac, c_count), false);
  mask.keep.assign(c_count, 1);
  for (auto i : mask.dropped_intra) mask.keep[i] = 0;
  for (auto i : mask.dropped_inter) mask.keep[i] = 0;
  return mask;
}

inline std::vector<EditMask> build_masks(const VarianceProfile& profile, const EditConfig& cfg) {
  std::vector<EditMask> masks;
  masks.reserve(profile.num_classes());
  for (std::size_t t = 0; t < profile.num_classes(); ++t)
    masks.push_back(build_mask(profile, static_cast<std::uint32_t>(t), cfg));
  return masks;
}

/// Zeroes every unit of each dropped channel; kept channels are copied as is.
inline FeatureMap apply_mask(const FeatureMap& m, const EditMask& mask) {
  if (mask.keep.size() != m.channels())
    throw ShapeError("mask has " + std::to_string(mask.keep.size()) + " channels, map has " +
                     std::to_string(m.channels()));
  FeatureMap out = m;
  for (std::size_t c = 0; c < m.channels(); ++c)
    if (!mask.keep[c]) std::fill(out.channel(c).begin(), out.channel(c).end(), 0.0f);
  return out;
}

/// Number of units random_edit zeroes: floor(k * r / (1 + r)).
inline std::size_t random_edit_count(std::size_t units, double drop_ratio) {
  return static_cast<std::size_t>(
      std::floor(static_cast<double>(units) * drop_ratio / (1.0 + drop_ratio) + 1e-9));
}

/// Random-edit baseline: zeroes units at positions drawn uniformly without
/// replacement so that zeros : ones = drop_ratio up to flooring.
inline FeatureMap random_edit(const FeatureMap& m, double drop_ratio, Rng& rng) {
  if (!(drop_ratio >= 0.0 && drop_ratio < 1.0))
    throw ConfigError("drop ratio must lie in [0, 1)");
  FeatureMap out = m;
  const std::size_t k = m.size();
  const std::size_t zeros = random_edit_count(k, drop_ratio);
  if (zeros == 0) return out;
  std::vector<std::size_t> pos(k);
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  auto values = out.values();
  // Partial Fisher-Yates: the first `zeros` slots become a uniform sample.
  for (std::size_t i = 0; i < zeros; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, k - i));
    std::swap(pos[i], pos[j]);
    values[pos[i]] = 0.0f;
  }
  return out;
}

/// Random edit of every sample, each with its own stream derived from `seed`.
inline Dataset random_edit_dataset(const Dataset& d, double drop_ratio, std::uint64_t seed) {
  Dataset out(d.num_classes(), d.channels(), d.spatial());
  out.reserve(d.size());
  for (std::size_t j = 0; j < d.size(); ++j) {
    Rng rng(mix_seed(seed, j));
    LabeledSample s = d[j];
    s.feature = random_edit(s.feature, drop_ratio, rng);
    out.push_back(std::move(s));
  }
  return out;
}

namespace detail {
inline const EditMask& mask_for(std::span<const EditMask> masks, std::uint32_t class_id) {
  for (const auto& m : masks)
    if (m.class_id == class_id) return m;
  throw MissingClassError("no edit mask for class " + std::to_string(class_id));
}
}  // namespace detail

/// Applies each sample's own class mask.
inline Dataset edit_dataset(const Dataset& d, std::span<const EditMask> masks) {
  Dataset out(d.num_classes(), d.channels(), d.spatial());
  out.reserve(d.size());
  for (std::uint32_t t = 0; t < d.num_classes(); ++t) (void)detail::mask_for(masks, t);
  for (const auto& s : d) {
    LabeledSample e = s;
    e.feature = apply_mask(s.feature, detail::mask_for(masks, s.class_id));
    out.push_back(std::move(e));
  }
  return out;
}

/// Applies one mask to every sample regardless of label.
inline Dataset edit_dataset_with(const Dataset& d, const EditMask& mask) {
  Dataset out(d.num_classes(), d.channels(), d.spatial());
  out.reserve(d.size());
  for (const auto& s : d) {
    LabeledSample e = s;
    e.feature = apply_mask(s.feature, mask);
    out.push_back(std::move(e));
  }
  return out;
}

/// Concatenation: all of `a`, then all of `b`.
inline Dataset merge_datasets(const Dataset& a, const Dataset& b) {
  if (!a.same_geometry(b))
    throw ShapeError("cannot merge datasets with different (C, S, T)");
  Dataset out = a;
  out.reserve(a.size() + b.size());
  for (const auto& s : b) out.push_back(s);
  return out;
}

inline const char* drop_reason(const EditMask& mask, std::size_t channel) {
  const bool intra = std::binary_search(mask.dropped_intra.begin(), mask.dropped_intra.end(), channel);
  const bool inter = std::binary_search(mask.dropped_inter.begin(), mask.dropped_inter.end(), channel);
  if (intra && inter) return "both";
  if (intra) return "intra";
  if (inter) return "inter";
  return "kept";
}

/// CSV `class_id,channel,keep,reason`.
inline void write_masks_csv(std::ostream& out, std::span<const EditMask> masks) {
  out << "class_id,channel,keep,reason\n";
  for (const auto& m : masks)
    for (std::size_t c = 0; c < m.channels(); ++c)
      out << m.class_id << ',' << c << ',' << int(m.keep[c]) << ',' << drop_reason(m, c) << '\n';
}

/// Inverse of write_masks_csv.
inline std::vector<EditMask> parse_masks_csv(const std::string& text) {
  std::vector<EditMask> masks;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != "class_id,channel,keep,reason") throw ParseError("masks: missing header");
      continue;
    }
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string f[4];
    for (auto& x : f) std::getline(row, x, ',');
    std::uint32_t cls = 0;
    std::size_t ch = 0;
    int keep = 0;
    if (!detail::parse_field(f[0], cls) || !detail::parse_field(f[1], ch) ||
        !detail::parse_field(f[2], keep) || (keep != 0 && keep != 1))
      throw ParseError("masks:" + std::to_string(lineno) + ": malformed row");
    if (masks.empty() || masks.back().class_id != cls) masks.push_back({cls, {}, {}, {}});
    auto& m = masks.back();
    if (ch != m.keep.size()) throw ParseError("masks:" + std::to_string(lineno) + ": channels out of order");
    m.keep.push_back(static_cast<std::uint8_t>(keep));
    const auto& reason = f[3];
    const bool intra = reason == "intra" || reason == "both";
    const bool inter = reason == "inter" || reason == "both";
    if ((reason != "kept" && !intra && !inter) || (keep == 1) != (reason == "kept"))
      throw ParseError("masks:" + std::to_string(lineno) + ": reason '" + reason + "' contradicts keep");
    if (intra) m.dropped_intra.push_back(ch);
    if (inter) m.dropped_inter.push_back(ch);
  }
  return masks;
}

}  // namespace featedit
