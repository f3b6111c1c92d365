#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "featedit/errors.hpp"

namespace featedit {

/// Axis-aligned box in continuous pixel coordinates, inclusive-exclusive.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool well_formed() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
           std::isfinite(y2) && x1 < x2 && y1 < y2;
  }
  friend bool operator==(const Box&, const Box&) = default;
};

/// One region's C x S x S activation tensor, stored channel-major
/// (channel, row, col). Values are single precision to match the file format.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t channels, std::size_t spatial)
      : channels_(channels), spatial_(spatial), values_(channels * spatial * spatial, 0.0f) {
    if (channels == 0 || spatial == 0) throw ShapeError("feature map needs C >= 1 and S >= 1");
  }
  FeatureMap(std::size_t channels, std::size_t spatial, std::vector<float> values)
      : channels_(channels), spatial_(spatial), values_(std::move(values)) {
    if (channels == 0 || spatial == 0) throw ShapeError("feature map needs C >= 1 and S >= 1");
    if (values_.size() != channels * spatial * spatial)
      throw ShapeError("value count " + std::to_string(values_.size()) + " != C*S*S = " +
                       std::to_string(channels * spatial * spatial));
  }

  std::size_t channels() const { return channels_; }
  std::size_t spatial() const { return spatial_; }
  std::size_t plane_size() const { return spatial_ * spatial_; }
  std::size_t size() const { return values_.size(); }

  float& at(std::size_t c, std::size_t row, std::size_t col) {
    return values_[(c * spatial_ + row) * spatial_ + col];
  }
  float at(std::size_t c, std::size_t row, std::size_t col) const {
    return values_[(c * spatial_ + row) * spatial_ + col];
  }

  std::span<float> channel(std::size_t c) {
    return {values_.data() + c * plane_size(), plane_size()};
  }
  std::span<const float> channel(std::size_t c) const {
    return {values_.data() + c * plane_size(), plane_size()};
  }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }

  bool all_finite() const {
    for (float v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t channels_ = 0;
  std::size_t spatial_ = 0;
  std::vector<float> values_;
};

struct LabeledSample {
  FeatureMap feature;
  std::uint32_t class_id = 0;
  Box box;
  std::uint32_t image_id = 0;
  bool difficult = false;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

/// Ordered, index-addressable collection of samples sharing one geometry.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::uint32_t num_classes, std::size_t channels, std::size_t spatial)
      : num_classes_(num_classes), channels_(channels), spatial_(spatial) {
    if (channels == 0 || spatial == 0) throw ShapeError("dataset needs C >= 1 and S >= 1");
  }

  std::uint32_t num_classes() const { return num_classes_; }
  std::size_t channels() const { return channels_; }
  std::size_t spatial() const { return spatial_; }
  std::size_t feature_size() const { return channels_ * spatial_ * spatial_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }

  const LabeledSample& operator[](std::size_t i) const { return samples_[i]; }
  LabeledSample& operator[](std::size_t i) { return samples_[i]; }
  const std::vector<LabeledSample>& samples() const { return samples_; }
  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }

  /// Appends after checking geometry, class range, box and finiteness.
  /// Box coordinates are rounded to single precision, the on-disk width.
  void push_back(LabeledSample sample) {
    sample.box = {static_cast<float>(sample.box.x1), static_cast<float>(sample.box.y1),
                  static_cast<float>(sample.box.x2), static_cast<float>(sample.box.y2)};
    check(sample, samples_.size());
    samples_.push_back(std::move(sample));
  }

  void reserve(std::size_t n) { samples_.reserve(n); }

  /// N_C for every class in [0, T).
  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(num_classes_, 0);
    for (const auto& s : samples_) ++counts[s.class_id];
    return counts;
  }

  bool same_geometry(const Dataset& other) const {
    return num_classes_ == other.num_classes_ && channels_ == other.channels_ &&
           spatial_ == other.spatial_;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  void check(const LabeledSample& s, std::size_t index) const {
    const auto where = " (sample " + std::to_string(index) + ")";
    if (s.feature.channels() != channels_ || s.feature.spatial() != spatial_)
      throw ShapeError("sample geometry differs from dataset" + where);
    if (s.class_id >= num_classes_)
      throw ClassIdError("class id " + std::to_string(s.class_id) + " >= T=" +
                         std::to_string(num_classes_) + where);
    if (!s.box.well_formed()) throw GeometryError("box is not well-formed" + where);
    if (!s.feature.all_finite()) throw ValueError("non-finite activation" + where);
  }

  std::uint32_t num_classes_ = 0;
  std::size_t channels_ = 0;
  std::size_t spatial_ = 0;
  std::vector<LabeledSample> samples_;
};

struct DetectionRecord {
  std::uint32_t image_id = 0;
  std::uint32_t class_id = 0;
  double score = 0;
  Box box;
  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

struct GroundTruthRecord {
  std::uint32_t image_id = 0;
  std::uint32_t class_id = 0;
  Box box;
  bool difficult = false;
  friend bool operator==(const GroundTruthRecord&, const GroundTruthRecord&) = default;
};

}  // namespace featedit
