#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "featedit/edit_mask.hpp"
#include "featedit/errors.hpp"
#include "featedit/matrix.hpp"
#include "featedit/types.hpp"

namespace featedit {

/// Excess kurtosis of a set of activation units, using population moments:
/// mean((a - mean)^4) / mean((a - mean)^2)^2 - 3, accumulated in long double
/// with the excess formed before the division. A constant set has no shape
/// and is assigned 0.
inline double kurtosis(std::span<const float> units) {
  if (units.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(units.begin(), units.end());
  if (*lo == *hi) return 0.0;

  const long double n = static_cast<long double>(units.size());
  long double sum = 0.0L;
  for (float v : units) sum += v;
  const long double mean = sum / n;

  long double m2 = 0.0L, m4 = 0.0L;
  for (float v : units) {
    const long double d = static_cast<long double>(v) - mean;
    const long double d2 = d * d;
    m2 += d2;
    m4 += d2 * d2;
  }
  m2 /= n;
  m4 /= n;
  if (m2 == 0.0L) return 0.0;
  return static_cast<double>((m4 - 3.0L * m2 * m2) / (m2 * m2));
}

/// Kurtosis of every channel of `m`.
inline std::vector<double> channel_kurtosis(const FeatureMap& m) {
  std::vector<double> k(m.channels());
  for (std::size_t c = 0; c < m.channels(); ++c) k[c] = kurtosis(m.channel(c));
  return k;
}

/// N x C matrix of per-sample, per-channel kurtosis.
using ChannelStatsMatrix = Matrix;

inline ChannelStatsMatrix stats_matrix(const Dataset& d) {
  if (d.empty()) throw EmptyInputError("stats_matrix needs at least one sample");
  ChannelStatsMatrix stats(d.size(), d.channels());
  for (std::size_t j = 0; j < d.size(); ++j) {
    const auto& m = d[j].feature;
    auto row = stats.row(j);
    for (std::size_t c = 0; c < m.channels(); ++c) row[c] = kurtosis(m.channel(c));
  }
  return stats;
}

/// First of the two rows/cols of the central 2x2 window of an S x S plane.
inline std::size_t central_window_start(std::size_t spatial) { return (spatial - 1) / 2; }

/// Max over the central 2x2 window of one channel.
inline float central_activation(const FeatureMap& m, std::size_t channel) {
  const std::size_t s0 = central_window_start(m.spatial());
  return std::max({m.at(channel, s0, s0), m.at(channel, s0, s0 + 1), m.at(channel, s0 + 1, s0),
                   m.at(channel, s0 + 1, s0 + 1)});
}

/// Indices of the k samples whose `channel` fires hardest in the central
/// window, strongest first; equal activations keep ascending sample order.
inline std::vector<std::size_t> rank_channel_activations(const Dataset& d, std::size_t channel,
                                                         std::size_t k) {
  if (channel >= d.channels())
    throw IndexError("channel " + std::to_string(channel) + " out of range (C=" +
                     std::to_string(d.channels()) + ")");
  if (d.spatial() < 2) throw GeometryError("central 2x2 window needs S >= 2");

  std::vector<float> score(d.size());
  for (std::size_t j = 0; j < d.size(); ++j) score[j] = central_activation(d[j].feature, channel);

  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (score[a] != score[b]) return score[a] > score[b];
                      return a < b;
                    });
  order.resize(take);
  return order;
}

/// Non-negative weights over channels summing to one, or flagged undefined
/// when there was no mass to normalize.
struct ProbabilityVector {
  std::vector<double> p;
  bool undefined = false;

  std::size_t size() const { return p.size(); }
  double operator[](std::size_t i) const { return p[i]; }
};

/// Entropy in nats, with 0 ln 0 = 0.
inline double shannon_entropy(const ProbabilityVector& pv) {
  if (pv.undefined) throw UndefinedDistributionError("entropy of an undefined distribution");
  double h = 0.0;
  for (double p : pv.p)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

/// Probability mass retained by `mask`.
inline double mask_expectation(const ProbabilityVector& pv, const EditMask& mask) {
  if (mask.keep.size() != pv.size())
    throw ShapeError("mask has " + std::to_string(mask.keep.size()) + " channels, distribution " +
                     std::to_string(pv.size()));
  double e = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i)
    if (mask.keep[i]) e += pv.p[i];
  return e;
}

/// CSV `sample_index,channel,kurtosis`.
inline void write_stats_csv(std::ostream& out, const ChannelStatsMatrix& stats) {
  out << "sample_index,channel,kurtosis\n";
  char buf[40];
  for (std::size_t j = 0; j < stats.rows(); ++j)
    for (std::size_t c = 0; c < stats.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", stats(j, c));
      out << j << ',' << c << ',' << buf << '\n';
    }
}

}  // namespace featedit
