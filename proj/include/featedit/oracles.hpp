#pragma once

// Deliberately naive re-implementations of the statistics, variance
// profile, mask selection, NMS and AP. They depend only on the data model,
// never on the optimized modules, and refuse large inputs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "featedit/errors.hpp"
#include "featedit/types.hpp"

namespace featedit::oracle {

inline constexpr std::size_t kMaxSamples = 1000;
inline constexpr std::size_t kMaxBoxes = 50;

/// E[o^4] / E^2[o^2] - 3 in extended precision; constant input gives 0.
inline double kurtosis(const std::vector<float>& a) {
  bool constant = true;
  for (float v : a) constant = constant && v == a.front();
  if (constant) return 0.0;
  long double mean = 0;
  for (float v : a) mean += v;
  mean /= a.size();
  long double e2 = 0, e4 = 0;
  for (float v : a) {
    long double o = v - mean;
    e2 += o * o;
    e4 += o * o * o * o;
  }
  e2 /= a.size();
  e4 /= a.size();
  return static_cast<double>(e4 / (e2 * e2) - 3);
}

inline std::vector<std::vector<double>> stats(const Dataset& d) {
  if (d.size() > kMaxSamples) throw OracleScaleError("oracle_stats limited to 1000 samples");
  std::vector<std::vector<double>> k;
  const std::size_t plane = d.spatial() * d.spatial();
  for (std::size_t j = 0; j < d.size(); ++j) {
    std::vector<double> row;
    for (std::size_t i = 0; i < d.channels(); ++i) {
      std::vector<float> units;
      for (std::size_t u = 0; u < plane; ++u) units.push_back(d[j].feature.values()[i * plane + u]);
      row.push_back(kurtosis(units));
    }
    k.push_back(row);
  }
  return k;
}

struct Profile {
  std::vector<std::vector<double>> intra;        // [class][channel]
  std::vector<std::vector<double>> class_means;  // [class][channel]
  std::vector<double> grand_mean;
  std::vector<double> inter;
};

inline Profile profile(const std::vector<std::vector<double>>& k,
                       const std::vector<std::uint32_t>& labels, std::size_t T) {
  if (k.size() > kMaxSamples) throw OracleScaleError("oracle_profile limited to 1000 rows");
  const std::size_t C = k.empty() ? 0 : k[0].size();
  Profile p;
  p.intra.assign(T, std::vector<double>(C));
  p.class_means.assign(T, std::vector<double>(C));
  for (std::size_t cls = 0; cls < T; ++cls) {
    for (std::size_t i = 0; i < C; ++i) {
      std::vector<double> column;
      for (std::size_t j = 0; j < k.size(); ++j)
        if (labels[j] == cls) column.push_back(k[j][i]);
      if (column.empty()) throw MissingClassError("oracle: empty class");
      double mean = 0;
      for (double v : column) mean += v;
      mean /= column.size();
      double var = 0;
      for (double v : column) var += (v - mean) * (v - mean);
      var /= column.size();
      p.class_means[cls][i] = mean;
      p.intra[cls][i] = var;
    }
  }
  for (std::size_t i = 0; i < C; ++i) {
    double g = 0;
    for (std::size_t cls = 0; cls < T; ++cls) g += p.class_means[cls][i];
    g /= T;
    double v = 0;
    for (std::size_t cls = 0; cls < T; ++cls)
      v += (p.class_means[cls][i] - g) * (p.class_means[cls][i] - g);
    p.grand_mean.push_back(g);
    p.inter.push_back(v / T);
  }
  return p;
}

struct Mask {
  std::set<std::size_t> intra, inter;
  std::vector<int> keep;
};

/// Full sort of (probability, index) pairs for both criteria.
inline Mask mask(const Profile& p, std::size_t cls, double intra_frac, double inter_frac) {
  auto normalized = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    std::vector<double> out;
    for (double x : v) out.push_back(s == 0 ? 0.0 : x / s);
    return std::make_pair(out, s == 0);
  };
  const std::size_t C = p.inter.size();
  const auto [pin, in_undef] = normalized(p.intra[cls]);
  const auto [pout, out_undef] = normalized(p.inter);
  if (in_undef && out_undef) throw DegenerateDatasetError("oracle: no variance at all");

  std::vector<std::pair<double, std::size_t>> by_intra, by_inter;
  for (std::size_t i = 0; i < C; ++i) {
    by_intra.push_back({-pin[i], i});
    by_inter.push_back({pout[i], i});
  }
  std::sort(by_intra.begin(), by_intra.end());
  std::sort(by_inter.begin(), by_inter.end());

  Mask m;
  const auto n_intra = static_cast<std::size_t>(std::floor(intra_frac * C + 1e-9));
  const auto n_inter = static_cast<std::size_t>(std::floor(inter_frac * C + 1e-9));
  if (!in_undef)
    for (std::size_t r = 0; r < n_intra; ++r) m.intra.insert(by_intra[r].second);
  if (!out_undef)
    for (std::size_t r = 0; r < n_inter; ++r) m.inter.insert(by_inter[r].second);
  for (std::size_t i = 0; i < C; ++i) m.keep.push_back(m.intra.count(i) || m.inter.count(i) ? 0 : 1);
  return m;
}

inline double iou(const Box& a, const Box& b) {
  const double ix1 = a.x1 > b.x1 ? a.x1 : b.x1, iy1 = a.y1 > b.y1 ? a.y1 : b.y1;
  const double ix2 = a.x2 < b.x2 ? a.x2 : b.x2, iy2 = a.y2 < b.y2 ? a.y2 : b.y2;
  if (ix2 <= ix1 || iy2 <= iy1) return 0.0;
  const double inter = (ix2 - ix1) * (iy2 - iy1);
  return inter / ((a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter);
}

/// Greedy NMS with explicit sets; returns kept insertion indices in the
/// order they were selected.
inline std::vector<std::size_t> nms(const std::vector<DetectionRecord>& dets, double thresh) {
  if (dets.size() > kMaxBoxes) throw OracleScaleError("oracle_nms limited to 50 boxes");
  std::set<std::size_t> remaining;
  for (std::size_t i = 0; i < dets.size(); ++i) remaining.insert(i);
  std::vector<std::size_t> kept;
  while (!remaining.empty()) {
    std::size_t best = *remaining.begin();
    for (auto i : remaining)
      if (dets[i].score > dets[best].score) best = i;  // set order makes ties pick the lowest index
    kept.push_back(best);
    std::set<std::size_t> next;
    for (auto i : remaining)
      if (i != best && oracle::iou(dets[i].box, dets[best].box) <= thresh) next.insert(i);
    remaining = next;
  }
  return kept;
}

struct ApResult {
  double ap = 0;
  std::vector<std::pair<double, double>> curve;  // (recall, precision)
  int tp = 0, fp = 0, num_gt = 0;
};

/// AP for one class. Every detection is labelled TP / FP / ignored by
/// simulating the matching literally, then the curve is interpolated.
inline ApResult ap(const std::vector<DetectionRecord>& dets, const std::vector<GroundTruthRecord>& gts,
                   double match_iou, bool eleven_point) {
  if (gts.size() > kMaxSamples || dets.size() > kMaxSamples)
    throw OracleScaleError("oracle_ap limited to 1000 records");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dets.size(); ++i) order.push_back(i);
  // insertion sort: strictly greater scores move ahead
  for (std::size_t a = 1; a < order.size(); ++a)
    for (std::size_t b = a; b > 0 && dets[order[b]].score > dets[order[b - 1]].score; --b)
      std::swap(order[b], order[b - 1]);

  ApResult r;
  for (const auto& g : gts) r.num_gt += g.difficult ? 0 : 1;
  std::vector<bool> used(gts.size(), false);
  for (auto i : order) {
    int best = -1;
    double best_o = 0;
    bool difficult_hit = false;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].image_id != dets[i].image_id) continue;
      const double o = oracle::iou(dets[i].box, gts[g].box);
      if (gts[g].difficult) {
        if (o >= match_iou) difficult_hit = true;
        continue;
      }
      if (used[g]) continue;
      if (best < 0 || o > best_o) {
        best = static_cast<int>(g);
        best_o = o;
      }
    }
    if (best >= 0 && best_o >= match_iou) {
      used[best] = true;
      ++r.tp;
    } else if (difficult_hit) {
      continue;
    } else {
      ++r.fp;
    }
    if (r.num_gt > 0) r.curve.push_back({double(r.tp) / r.num_gt, double(r.tp) / (r.tp + r.fp)});
  }
  if (r.num_gt == 0) return r;

  if (eleven_point) {
    double total = 0;
    for (int step = 0; step <= 10; ++step) {
      double best = 0;
      for (const auto& [rec, prec] : r.curve)
        if (rec >= step / 10.0 && prec > best) best = prec;
      total += best;
    }
    r.ap = total / 11;
  } else {
    // Area under the envelope p_interp(r) = max precision at recall >= r,
    // integrated over each recall increment.
    double prev_recall = 0;
    for (std::size_t k = 0; k < r.curve.size(); ++k) {
      const double rec = r.curve[k].first;
      if (rec == prev_recall) continue;
      double env = 0;
      for (std::size_t m = k; m < r.curve.size(); ++m) env = std::max(env, r.curve[m].second);
      r.ap += (rec - prev_recall) * env;
      prev_recall = rec;
    }
  }
  return r;
}

}  // namespace featedit::oracle
