#pragma once

// Linear bounding-box regression on flattened feature maps. Targets use the
// scale-invariant center / log-size parameterization:
//   tx = (Gx - Px) / Pw, ty = (Gy - Py) / Ph, tw = ln(Gw / Pw), th = ln(Gh / Ph)
//
// Regressor file (*.lreg, little-endian):
//   "LREG1" | u32 D | 4 x D f64 weights (tx, ty, tw, th rows) | 4 x f64 biases
//   | f64 ridge_lambda | u32 class_id

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "featedit/errors.hpp"
#include "featedit/feature_io.hpp"
#include "featedit/matrix.hpp"
#include "featedit/types.hpp"

namespace featedit {

using BoxDelta = std::array<double, 4>;

inline BoxDelta box_targets(const Box& proposal, const Box& gt) {
  if (!proposal.well_formed()) throw GeometryError("degenerate proposal box");
  if (!gt.well_formed()) throw GeometryError("degenerate ground-truth box");
  const double pw = proposal.width(), ph = proposal.height();
  const double px = proposal.x1 + 0.5 * pw, py = proposal.y1 + 0.5 * ph;
  const double gw = gt.width(), gh = gt.height();
  const double gx = gt.x1 + 0.5 * gw, gy = gt.y1 + 0.5 * gh;
  return {(gx - px) / pw, (gy - py) / ph, std::log(gw / pw), std::log(gh / ph)};
}

/// Inverse of box_targets: moves `proposal` by `delta`.
inline Box apply_transform(const Box& proposal, const BoxDelta& delta) {
  if (!proposal.well_formed()) throw GeometryError("degenerate proposal box");
  const double pw = proposal.width(), ph = proposal.height();
  const double cx = proposal.x1 + 0.5 * pw + delta[0] * pw;
  const double cy = proposal.y1 + 0.5 * ph + delta[1] * ph;
  const double w = pw * std::exp(delta[2]);
  const double h = ph * std::exp(delta[3]);
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

struct BoxRegressor {
  std::array<std::vector<double>, 4> weights;
  BoxDelta bias{};
  double ridge_lambda = 1e-4;
  std::uint32_t class_id = 0;

  std::size_t dim() const { return weights[0].size(); }

  BoxDelta predict(std::span<const double> x) const {
    if (x.size() != dim()) throw ShapeError("feature dimension differs from regressor");
    BoxDelta out = bias;
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t k = 0; k < x.size(); ++k) out[r] += weights[r][k] * x[k];
    return out;
  }

  friend bool operator==(const BoxRegressor&, const BoxRegressor&) = default;
};

/// Ridge objective of one target row: sum_n (w.x_n + b - t_n)^2 + lambda |w|^2.
inline double ridge_objective(const BoxRegressor& reg, const Matrix& x,
                              const std::vector<BoxDelta>& targets, std::size_t row) {
  double loss = 0.0;
  for (std::size_t n = 0; n < x.rows(); ++n) {
    double s = reg.bias[row];
    for (std::size_t k = 0; k < x.cols(); ++k) s += reg.weights[row][k] * x(n, k);
    loss += (s - targets[n][row]) * (s - targets[n][row]);
  }
  double sq = 0.0;
  for (double w : reg.weights[row]) sq += w * w;
  return loss + reg.ridge_lambda * sq;
}

/// Ridge least squares per target dimension with an unregularized bias,
/// solved on centered data through whichever Gram system is smaller
/// (D x D primal or N x N dual).
inline BoxRegressor train_regressor(const Matrix& x, const std::vector<BoxDelta>& targets,
                                    double ridge_lambda, std::uint32_t class_id = 0) {
  if (x.rows() == 0) throw EmptyInputError("regression needs at least one sample");
  if (targets.size() != x.rows()) throw ShapeError("one target per feature row required");
  if (!(ridge_lambda > 0.0)) throw ConfigError("ridge_lambda must be > 0");
  const auto n = static_cast<Eigen::Index>(x.rows());
  const auto dim = static_cast<Eigen::Index>(x.cols());

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> xm(
      x.data().data(), n, dim);
  Eigen::MatrixXd t(n, 4);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int r = 0; r < 4; ++r) t(i, r) = targets[static_cast<std::size_t>(i)][r];

  const Eigen::RowVectorXd x_mean = xm.colwise().mean();
  const Eigen::RowVectorXd t_mean = t.colwise().mean();
  const Eigen::MatrixXd xc = xm.rowwise() - x_mean;
  const Eigen::MatrixXd tc = t.rowwise() - t_mean;

  Eigen::MatrixXd w;  // D x 4
  if (dim <= n) {
    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += ridge_lambda;
    w = gram.ldlt().solve(xc.transpose() * tc);
  } else {
    Eigen::MatrixXd gram = xc * xc.transpose();
    gram.diagonal().array() += ridge_lambda;
    w = xc.transpose() * gram.ldlt().solve(tc);
  }
  // One step of iterative refinement on the primal normal equations.
  {
    const Eigen::MatrixXd resid = xc.transpose() * (tc - xc * w) - ridge_lambda * w;
    Eigen::MatrixXd corr;
    if (dim <= n) {
      Eigen::MatrixXd gram = xc.transpose() * xc;
      gram.diagonal().array() += ridge_lambda;
      corr = gram.ldlt().solve(resid);
    } else {
      Eigen::MatrixXd gram = xc * xc.transpose();
      gram.diagonal().array() += ridge_lambda;
      // (X^T X + l I)^-1 r = (r - X^T (X X^T + l I)^-1 X r) / l
      corr = (resid - xc.transpose() * gram.ldlt().solve(xc * resid)) / ridge_lambda;
    }
    w += corr;
  }

  BoxRegressor reg;
  reg.ridge_lambda = ridge_lambda;
  reg.class_id = class_id;
  for (int r = 0; r < 4; ++r) {
    reg.weights[r].resize(static_cast<std::size_t>(dim));
    for (Eigen::Index k = 0; k < dim; ++k) reg.weights[r][static_cast<std::size_t>(k)] = w(k, r);
    reg.bias[r] = t_mean(r) - x_mean.dot(w.col(r));
  }
  return reg;
}

inline constexpr std::string_view kRegressorMagic = "LREG1";

inline std::string encode_regressor(const BoxRegressor& reg) {
  detail::ByteWriter w;
  w.raw(kRegressorMagic);
  w.u32(static_cast<std::uint32_t>(reg.dim()));
  for (const auto& row : reg.weights)
    for (double v : row) w.f64(v);
  for (double b : reg.bias) w.f64(b);
  w.f64(reg.ridge_lambda);
  w.u32(reg.class_id);
  return w.bytes();
}

inline BoxRegressor decode_regressor(std::string_view bytes) {
  if (bytes.substr(0, kRegressorMagic.size()) != kRegressorMagic)
    throw FormatError("missing LREG1 magic");
  detail::ByteReader r(bytes);
  r.raw(kRegressorMagic.size());
  BoxRegressor reg;
  const std::uint32_t dim = r.u32();
  if (r.remaining() < static_cast<std::size_t>(dim) * 32)
    throw TruncationError("regressor declares " + std::to_string(dim) + " weights per row");
  for (auto& row : reg.weights) {
    row.resize(dim);
    for (auto& v : row) v = r.f64();
  }
  for (auto& b : reg.bias) b = r.f64();
  reg.ridge_lambda = r.f64();
  reg.class_id = r.u32();
  if (r.remaining() != 0) throw FormatError("trailing bytes after regressor");
  return reg;
}

inline void write_regressor(const BoxRegressor& reg, const std::filesystem::path& path) {
  detail::spill(path, encode_regressor(reg));
}

inline BoxRegressor read_regressor(const std::filesystem::path& path) {
  return decode_regressor(detail::slurp(path));
}

}  // namespace featedit
