#pragma once

// One-vs-rest linear SVM, L2-regularized hinge loss:
//   (lambda/2) |w|^2 + (1/N) sum_i c_i max(0, 1 - y_i (w.x_i + b))
// with c_i = positive_weight for y_i = +1, else 1. The bias is not regularized.
//
// Model file (*.lmod, little-endian):
//   "LMOD1" | u32 D | D x f64 weights | f64 bias | u32 class_id

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "featedit/errors.hpp"
#include "featedit/feature_io.hpp"
#include "featedit/matrix.hpp"
#include "featedit/rng.hpp"
#include "featedit/types.hpp"

namespace featedit {

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::uint32_t class_id = 0;

  std::size_t dim() const { return weights.size(); }
  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

struct SvmConfig {
  double reg_lambda = 1e-4;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  double tolerance = 1e-6;
  double positive_weight = 1.0;

  void validate() const {
    if (!(reg_lambda > 0.0) || !std::isfinite(reg_lambda)) throw ConfigError("reg_lambda must be > 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(tolerance > 0.0)) throw ConfigError("tolerance must be > 0");
    if (!(positive_weight > 0.0)) throw ConfigError("positive_weight must be > 0");
  }
};

/// Rows of `x` with labels in {-1, +1}.
struct SvmProblem {
  Matrix x;
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return x.cols(); }
};

/// Flattened features (channel-major) of every sample, as doubles.
inline Matrix flatten(const Dataset& d) {
  Matrix x(d.size(), d.feature_size());
  for (std::size_t j = 0; j < d.size(); ++j) {
    auto row = x.row(j);
    const auto v = d[j].feature.values();
    std::copy(v.begin(), v.end(), row.begin());
  }
  return x;
}

/// One-vs-rest labels: +1 for `positive_class`, -1 otherwise.
inline SvmProblem one_vs_rest(const Dataset& d, std::uint32_t positive_class) {
  SvmProblem p{flatten(d), {}};
  p.y.reserve(d.size());
  for (const auto& s : d) p.y.push_back(s.class_id == positive_class ? 1 : -1);
  return p;
}

inline double score(const LinearModel& m, std::span<const double> x) {
  if (x.size() != m.weights.size())
    throw ShapeError("feature has " + std::to_string(x.size()) + " dims, model " +
                     std::to_string(m.weights.size()));
  double s = m.bias;
  for (std::size_t i = 0; i < x.size(); ++i) s += m.weights[i] * x[i];
  return s;
}

inline double score(const LinearModel& m, const FeatureMap& f) {
  std::vector<double> x(f.values().begin(), f.values().end());
  return score(m, x);
}

namespace detail {

inline void check_problem(const SvmProblem& p) {
  if (p.size() == 0) throw EmptyInputError("SVM data is empty");
  if (p.x.rows() != p.size()) throw ShapeError("one label per feature row required");
  for (int y : p.y)
    if (y != 1 && y != -1) throw InputContractError("SVM labels must be -1 or +1");
}

inline double hinge_mean(std::span<const double> margins_raw, const std::vector<int>& y,
                         double bias, double positive_weight) {
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double c = y[i] > 0 ? positive_weight : 1.0;
    loss += c * std::max(0.0, 1.0 - y[i] * (margins_raw[i] + bias));
  }
  return loss / static_cast<double>(y.size());
}

/// Exact minimizer over b of the (convex, piecewise-linear) hinge term for
/// fixed raw scores s_i = w.x_i. The slope in b starts at -sum(c_i, y_i=+1)
/// and rises by c_i at each breakpoint y_i - s_i; the minimum sits where it
/// first becomes non-negative.
inline double optimal_bias(std::span<const double> s, const std::vector<int>& y,
                           double positive_weight) {
  const std::size_t n = y.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> bp(n);
  double slope = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    bp[i] = y[i] - s[i];
    if (y[i] > 0) slope -= positive_weight;
  }
  if (slope == 0.0) {
    // Only negatives: any b <= min breakpoint zeroes the loss.
    return *std::min_element(bp.begin(), bp.end());
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return bp[a] != bp[b] ? bp[a] < bp[b] : a < b;
  });
  for (auto i : order) {
    slope += y[i] > 0 ? positive_weight : 1.0;
    if (slope >= 0.0) return bp[i];
  }
  return bp[order.back()];
}

}  // namespace detail

inline double svm_objective(const LinearModel& m, const SvmProblem& p, double reg_lambda,
                            double positive_weight = 1.0) {
  detail::check_problem(p);
  if (p.dim() != m.dim()) throw ShapeError("model and data dimensions differ");
  std::vector<double> raw(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) raw[i] = score(m, p.x.row(i)) - m.bias;
  double sq = 0.0;
  for (double w : m.weights) sq += w * w;
  return 0.5 * reg_lambda * sq + detail::hinge_mean(raw, p.y, m.bias, positive_weight);
}

struct SvmTrace {
  std::vector<double> epoch_objective;  // best-so-far objective at each epoch end
  std::size_t epochs_run = 0;
};

/// Stochastic subgradient descent on w with step 1/(lambda (t + 1)), one
/// pass per epoch over a seeded shuffle, iterates projected onto the ball
/// |w| <= sqrt(2 / lambda) that contains the optimum. The bias is set to its
/// exact minimizer at every epoch end. Candidates are the epoch-end iterate
/// and the epoch's average iterate; the best one seen is returned. Training
/// stops early once the epoch-end objective moves by less than the tolerance
/// for three epochs in a row.
inline LinearModel train_svm(const SvmProblem& p, std::uint32_t class_id, const SvmConfig& cfg,
                             SvmTrace* trace = nullptr) {
  cfg.validate();
  detail::check_problem(p);
  const bool has_pos = std::find(p.y.begin(), p.y.end(), 1) != p.y.end();
  const bool has_neg = std::find(p.y.begin(), p.y.end(), -1) != p.y.end();
  if (!has_pos || !has_neg)
    throw DegenerateLabelsError("one-vs-rest training needs positive and negative samples");

  const std::size_t n = p.size(), dim = p.dim();
  const double lambda = cfg.reg_lambda;
  const double radius = std::sqrt(2.0 / lambda);
  constexpr double t0 = 1.0;

  std::vector<double> w(dim, 0.0), raw(n, 0.0);
  double b = detail::optimal_bias(raw, p.y, cfg.positive_weight);

  auto objective = [&](const std::vector<double>& wv, double bias) {
    double sq = 0.0;
    for (double v : wv) sq += v * v;
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = p.x.row(i);
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) s += wv[k] * row[k];
      raw[i] = s;
    }
    return 0.5 * lambda * sq + detail::hinge_mean(raw, p.y, bias, cfg.positive_weight);
  };

  LinearModel best{w, b, class_id};
  double best_obj = objective(w, b);
  double prev_obj = best_obj;

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // w is kept as scale * v so the (1 - eta lambda) shrink is O(1).
  std::vector<double> v(dim, 0.0), avg(dim, 0.0);
  double scale = 1.0, sq_norm = 0.0;
  double t = 0.0;
  std::size_t epoch = 0, calm_epochs = 0;
  constexpr std::size_t kCalmEpochs = 3;

  for (; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_below(rng, i)]);

    std::fill(avg.begin(), avg.end(), 0.0);
    for (auto idx : order) {
      t += 1.0;
      const double eta = 1.0 / (lambda * (t + t0));
      const auto row = p.x.row(idx);
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) s += v[k] * row[k];
      s *= scale;
      const int y = p.y[idx];
      const double shrink = 1.0 - eta * lambda;
      scale *= shrink;
      sq_norm *= shrink * shrink;
      if (y * (s + b) < 1.0) {
        const double step = eta * (y > 0 ? cfg.positive_weight : 1.0) * y / scale;
        double cross = 0.0, rr = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
          cross += v[k] * row[k];
          rr += row[k] * row[k];
          v[k] += step * row[k];
        }
        // |scale (v + step x)|^2
        sq_norm += scale * scale * (2.0 * step * cross + step * step * rr);
      }
      if (sq_norm > radius * radius) {
        const double f = radius / std::sqrt(sq_norm);
        scale *= f;
        sq_norm = radius * radius;
      }
      if (scale < 1e-100 || scale > 1e100) {
        for (auto& e : v) e *= scale;
        scale = 1.0;
      }
      for (std::size_t k = 0; k < dim; ++k) avg[k] += scale * v[k];
    }
    for (auto& a : avg) a /= static_cast<double>(n);

    sq_norm = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      w[k] = v[k] * scale;
      sq_norm += w[k] * w[k];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = p.x.row(i);
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) s += w[k] * row[k];
      raw[i] = s;
    }
    b = detail::optimal_bias(raw, p.y, cfg.positive_weight);
    const double obj = objective(w, b);
    if (obj < best_obj) {
      best_obj = obj;
      best.weights = w;
      best.bias = b;
    }
    objective(avg, 0.0);
    const double avg_b = detail::optimal_bias(raw, p.y, cfg.positive_weight);
    if (const double avg_obj = objective(avg, avg_b); avg_obj < best_obj) {
      best_obj = avg_obj;
      best.weights = avg;
      best.bias = avg_b;
    }
    if (trace) trace->epoch_objective.push_back(best_obj);
    calm_epochs = std::abs(prev_obj - obj) < cfg.tolerance ? calm_epochs + 1 : 0;
    prev_obj = obj;
    if (calm_epochs == kCalmEpochs) {
      ++epoch;
      break;
    }
  }
  if (trace) trace->epochs_run = epoch;
  return best;
}

inline LinearModel train_svm(const Dataset& d, std::uint32_t positive_class, const SvmConfig& cfg,
                             SvmTrace* trace = nullptr) {
  return train_svm(one_vs_rest(d, positive_class), positive_class, cfg, trace);
}

inline constexpr std::string_view kModelMagic = "LMOD1";

inline std::string encode_model(const LinearModel& m) {
  detail::ByteWriter w;
  w.raw(kModelMagic);
  w.u32(static_cast<std::uint32_t>(m.weights.size()));
  for (double v : m.weights) w.f64(v);
  w.f64(m.bias);
  w.u32(m.class_id);
  return w.bytes();
}

inline LinearModel decode_model(std::string_view bytes) {
  if (bytes.substr(0, kModelMagic.size()) != kModelMagic) throw FormatError("missing LMOD1 magic");
  detail::ByteReader r(bytes);
  r.raw(kModelMagic.size());
  LinearModel m;
  const std::uint32_t dim = r.u32();
  if (r.remaining() < static_cast<std::size_t>(dim) * 8)
    throw TruncationError("model declares " + std::to_string(dim) + " weights");
  m.weights.resize(dim);
  for (auto& v : m.weights) v = r.f64();
  m.bias = r.f64();
  m.class_id = r.u32();
  if (r.remaining() != 0) throw FormatError("trailing bytes after model");
  for (double v : m.weights)
    if (!std::isfinite(v)) throw ValueError("non-finite model weight");
  if (!std::isfinite(m.bias)) throw ValueError("non-finite model bias");
  return m;
}

inline void write_model(const LinearModel& m, const std::filesystem::path& path) {
  detail::spill(path, encode_model(m));
}

inline LinearModel read_model(const std::filesystem::path& path) {
  return decode_model(detail::slurp(path));
}

}  // namespace featedit
