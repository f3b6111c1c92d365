#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "featedit/errors.hpp"
#include "featedit/types.hpp"

namespace featedit {

enum class ApMode { eleven_point, continuous };

struct EvalConfig {
  double nms_iou = 0.30;
  double match_iou = 0.50;
  ApMode ap_mode = ApMode::eleven_point;

  void validate() const {
    if (!(nms_iou > 0.0 && nms_iou < 1.0)) throw ConfigError("nms_iou must lie in (0, 1)");
    if (!(match_iou > 0.0 && match_iou < 1.0)) throw ConfigError("match_iou must lie in (0, 1)");
  }
};

inline double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace detail {
/// Indices of `dets` by descending score; equal scores keep insertion order.
inline std::vector<std::size_t> score_order(std::span<const DetectionRecord> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return order;
}
}  // namespace detail

/// Greedy NMS for one image and class: keep the best remaining detection,
/// discard everything overlapping it by IoU > iou_thresh, repeat.
inline std::vector<DetectionRecord> nms(std::span<const DetectionRecord> dets, double iou_thresh) {
  if (dets.empty()) return {};
  for (const auto& d : dets)
    if (d.image_id != dets[0].image_id || d.class_id != dets[0].class_id)
      throw InputContractError("nms input mixes images or classes");
  const auto order = detail::score_order(dets);
  std::vector<bool> suppressed(dets.size(), false);
  std::vector<DetectionRecord> kept;
  for (std::size_t a = 0; a < order.size(); ++a) {
    if (suppressed[order[a]]) continue;
    const auto& best = dets[order[a]];
    kept.push_back(best);
    for (std::size_t b = a + 1; b < order.size(); ++b)
      if (!suppressed[order[b]] && iou(best.box, dets[order[b]].box) > iou_thresh)
        suppressed[order[b]] = true;
  }
  return kept;
}

/// NMS applied independently to every (image, class) group; groups are
/// emitted in ascending (image, class) order.
inline std::vector<DetectionRecord> nms_all(std::span<const DetectionRecord> dets,
                                            double iou_thresh) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<DetectionRecord>> groups;
  for (const auto& d : dets) groups[{d.image_id, d.class_id}].push_back(d);
  std::vector<DetectionRecord> out;
  for (const auto& [key, group] : groups) {
    auto kept = nms(group, iou_thresh);
    out.insert(out.end(), kept.begin(), kept.end());
  }
  return out;
}

struct PrPoint {
  double recall = 0;
  double precision = 0;
};

struct PrCurve {
  std::uint32_t class_id = 0;
  std::vector<PrPoint> points;
  double ap = 0;
  std::size_t num_tp = 0, num_fp = 0, num_gt = 0;
  bool no_ground_truth = false;  // AP reported as 0
};

namespace detail {

inline double eleven_point_ap(const std::vector<PrPoint>& pts) {
  double sum = 0.0;
  for (int i = 0; i <= 10; ++i) {
    const double r = i / 10.0;
    double p = 0.0;
    for (const auto& pt : pts)
      if (pt.recall >= r) p = std::max(p, pt.precision);
    sum += p;
  }
  return sum / 11.0;
}

inline double continuous_ap(const std::vector<PrPoint>& pts) {
  std::vector<double> rec{0.0}, prec{0.0};
  for (const auto& pt : pts) {
    rec.push_back(pt.recall);
    prec.push_back(pt.precision);
  }
  rec.push_back(1.0);
  prec.push_back(0.0);
  for (std::size_t i = prec.size() - 1; i > 0; --i) prec[i - 1] = std::max(prec[i - 1], prec[i]);
  double ap = 0.0;
  for (std::size_t i = 1; i < rec.size(); ++i)
    if (rec[i] != rec[i - 1]) ap += (rec[i] - rec[i - 1]) * prec[i];
  return ap;
}

}  // namespace detail

/// PASCAL-style precision/recall and AP for one class. Detections are
/// visited by descending score; each takes the unmatched non-difficult
/// ground truth of highest IoU in its image when that IoU reaches
/// match_iou. Detections that instead reach a difficult box are ignored.
inline PrCurve average_precision(std::span<const DetectionRecord> dets,
                                 std::span<const GroundTruthRecord> gts, const EvalConfig& cfg,
                                 std::uint32_t class_id = 0) {
  PrCurve curve;
  curve.class_id = class_id;
  std::map<std::uint32_t, std::vector<std::size_t>> by_image;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    by_image[gts[g].image_id].push_back(g);
    if (!gts[g].difficult) ++curve.num_gt;
  }
  std::vector<bool> matched(gts.size(), false);

  std::size_t tp = 0, fp = 0;
  for (auto idx : detail::score_order(dets)) {
    const auto& det = dets[idx];
    std::ptrdiff_t best = -1;
    double best_iou = -1.0;
    bool hits_difficult = false;
    if (auto it = by_image.find(det.image_id); it != by_image.end()) {
      for (auto g : it->second) {
        const double o = iou(det.box, gts[g].box);
        if (gts[g].difficult) {
          hits_difficult = hits_difficult || o >= cfg.match_iou;
        } else if (!matched[g] && o > best_iou) {
          best_iou = o;
          best = static_cast<std::ptrdiff_t>(g);
        }
      }
    }
    if (best >= 0 && best_iou >= cfg.match_iou) {
      matched[static_cast<std::size_t>(best)] = true;
      ++tp;
    } else if (hits_difficult) {
      continue;
    } else {
      ++fp;
    }
    if (curve.num_gt > 0)
      curve.points.push_back({static_cast<double>(tp) / static_cast<double>(curve.num_gt),
                              static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
  curve.num_tp = tp;
  curve.num_fp = fp;
  if (curve.num_gt == 0) {
    curve.no_ground_truth = true;
    curve.ap = 0.0;
    return curve;
  }
  curve.ap = cfg.ap_mode == ApMode::eleven_point ? detail::eleven_point_ap(curve.points)
                                                 : detail::continuous_ap(curve.points);
  return curve;
}

struct EvalReport {
  std::vector<PrCurve> per_class;
  double map = 0;
};

/// Per-class AP over classes [0, T) and their unweighted mean.
inline EvalReport evaluate(std::span<const DetectionRecord> dets,
                           std::span<const GroundTruthRecord> gts, std::uint32_t num_classes,
                           const EvalConfig& cfg) {
  cfg.validate();
  if (num_classes == 0) throw ConfigError("evaluation needs T >= 1");
  std::vector<std::vector<DetectionRecord>> d(num_classes);
  std::vector<std::vector<GroundTruthRecord>> g(num_classes);
  for (const auto& x : dets) {
    if (x.class_id >= num_classes)
      throw ClassIdError("detection class " + std::to_string(x.class_id) + " >= T");
    d[x.class_id].push_back(x);
  }
  for (const auto& x : gts) {
    if (x.class_id >= num_classes)
      throw ClassIdError("ground-truth class " + std::to_string(x.class_id) + " >= T");
    g[x.class_id].push_back(x);
  }
  EvalReport rep;
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    rep.per_class.push_back(average_precision(d[c], g[c], cfg, c));
    rep.map += rep.per_class.back().ap;
  }
  rep.map /= num_classes;
  return rep;
}

/// Writes `eval.csv` (class_id,ap,num_gt,num_tp,num_fp) and one
/// `pr_class<k>.csv` (recall,precision) per class into `dir`.
inline void write_eval_report(const EvalReport& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  char buf[64];
  {
    std::ofstream out(dir / "eval.csv");
    out << "class_id,ap,num_gt,num_tp,num_fp\n";
    for (const auto& c : rep.per_class) {
      std::snprintf(buf, sizeof buf, "%.17g", c.ap);
      out << c.class_id << ',' << buf << ',' << c.num_gt << ',' << c.num_tp << ',' << c.num_fp
          << '\n';
    }
    if (!out) throw IoError("cannot write " + (dir / "eval.csv").string());
  }
  for (const auto& c : rep.per_class) {
    const auto path = dir / ("pr_class" + std::to_string(c.class_id) + ".csv");
    std::ofstream out(path);
    out << "recall,precision\n";
    for (const auto& p : c.points) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g", p.recall, p.precision);
      out << buf << '\n';
    }
    if (!out) throw IoError("cannot write " + path.string());
  }
}

}  // namespace featedit
