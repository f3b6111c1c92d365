#pragma once

// Binary *.feat container and CSV detection / ground-truth files.
//
// .feat layout (all integers and floats little-endian):
//   offset 0   "FEAT1"            5 bytes magic
//   offset 5   0x00               pad
//   offset 6   u16 version (=1)
//   offset 8   u32 N  (samples)
//   offset 12  u32 T  (classes)
//   offset 16  u32 C  (channels)
//   offset 20  u32 S  (spatial side)
//   offset 24  N records of
//                u32 image_id, u32 class_id, u8 difficult,
//                f32 x1, f32 y1, f32 x2, f32 y2,
//                C*S*S f32 activations, channel-major (channel, row, col)

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "featedit/errors.hpp"
#include "featedit/types.hpp"

namespace featedit {

inline constexpr std::string_view kFeatMagic = "FEAT1";
inline constexpr std::uint16_t kFeatVersion = 1;
inline constexpr std::size_t kFeatHeaderBytes = 24;
inline constexpr std::string_view kDetectionsHeader = "image_id,class_id,score,x1,y1,x2,y2";
inline constexpr std::string_view kGroundTruthHeader = "image_id,class_id,x1,y1,x2,y2,difficult";

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view s) { bytes_.append(s); }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(byte(pos_ + i) << (8 * i));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte(pos_ + i)) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte(pos_ + i)) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::uint8_t byte(std::size_t i) const { return static_cast<std::uint8_t>(bytes_[i]); }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw TruncationError("need " + std::to_string(n) + " bytes at offset " +
                            std::to_string(pos_) + ", have " +
                            std::to_string(bytes_.size() - pos_));
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

inline void spill(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
bool parse_field(std::string_view s, T& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

/// Splits CSV text into lines, requiring `header` as the first line unless
/// the file is empty. Returns (line_number, text) for every non-blank row.
inline std::vector<std::pair<std::size_t, std::string>> csv_rows(const std::string& text,
                                                                 std::string_view header,
                                                                 const std::string& name) {
  std::vector<std::pair<std::size_t, std::string>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!seen_header) {
      if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
      if (line != header)
        throw ParseError(name + ":" + std::to_string(lineno) + ": expected header '" +
                         std::string(header) + "'");
      seen_header = true;
      continue;
    }
    if (line.empty()) continue;
    rows.emplace_back(lineno, line);
  }
  return rows;
}

}  // namespace detail

inline std::string encode_dataset(const Dataset& d) {
  detail::ByteWriter w;
  w.raw(kFeatMagic);
  w.u8(0);
  w.u16(kFeatVersion);
  w.u32(static_cast<std::uint32_t>(d.size()));
  w.u32(d.num_classes());
  w.u32(static_cast<std::uint32_t>(d.channels()));
  w.u32(static_cast<std::uint32_t>(d.spatial()));
  for (const auto& s : d) {
    w.u32(s.image_id);
    w.u32(s.class_id);
    w.u8(s.difficult ? 1 : 0);
    w.f32(static_cast<float>(s.box.x1));
    w.f32(static_cast<float>(s.box.y1));
    w.f32(static_cast<float>(s.box.x2));
    w.f32(static_cast<float>(s.box.y2));
    for (float v : s.feature.values()) w.f32(v);
  }
  return w.bytes();
}

inline Dataset decode_dataset(std::string_view bytes) {
  if (bytes.size() < kFeatMagic.size() || bytes.substr(0, kFeatMagic.size()) != kFeatMagic)
    throw FormatError("missing FEAT1 magic");
  detail::ByteReader r(bytes);
  r.raw(kFeatMagic.size());
  if (r.u8() != 0) throw FormatError("non-zero pad byte after magic");
  if (auto version = r.u16(); version != kFeatVersion)
    throw FormatError("unsupported version " + std::to_string(version));
  const std::uint32_t n = r.u32();
  const std::uint32_t t = r.u32();
  const std::uint32_t c = r.u32();
  const std::uint32_t s = r.u32();
  if (c == 0 || s == 0) throw FormatError("C and S must be positive");
  const std::size_t units = static_cast<std::size_t>(c) * s * s;
  const std::size_t record = 4 + 4 + 1 + 16 + 4 * units;
  if (r.remaining() / record < n)
    throw TruncationError("header declares " + std::to_string(n) + " samples but payload holds " +
                          std::to_string(r.remaining() / record));

  Dataset d(t, c, s);
  d.reserve(n);
  for (std::uint32_t j = 0; j < n; ++j) {
    LabeledSample sample;
    sample.image_id = r.u32();
    sample.class_id = r.u32();
    const auto flag = r.u8();
    if (flag > 1) throw FormatError("difficult flag must be 0 or 1 (sample " + std::to_string(j) + ")");
    sample.difficult = flag == 1;
    sample.box.x1 = r.f32();
    sample.box.y1 = r.f32();
    sample.box.x2 = r.f32();
    sample.box.y2 = r.f32();
    std::vector<float> values(units);
    for (auto& v : values) v = r.f32();
    sample.feature = FeatureMap(c, s, std::move(values));
    d.push_back(std::move(sample));
  }
  if (r.remaining() != 0)
    throw FormatError(std::to_string(r.remaining()) + " trailing bytes after last sample");
  return d;
}

inline Dataset read_dataset(const std::filesystem::path& path) {
  return decode_dataset(detail::slurp(path));
}

inline void write_dataset(const Dataset& d, const std::filesystem::path& path) {
  detail::spill(path, encode_dataset(d));
}

inline std::string format_detections(const std::vector<DetectionRecord>& dets) {
  std::string out(kDetectionsHeader);
  out += '\n';
  for (const auto& d : dets) {
    out += std::to_string(d.image_id) + ',' + std::to_string(d.class_id) + ',' +
           detail::format_double(d.score) + ',' + detail::format_double(d.box.x1) + ',' +
           detail::format_double(d.box.y1) + ',' + detail::format_double(d.box.x2) + ',' +
           detail::format_double(d.box.y2) + '\n';
  }
  return out;
}

inline std::vector<DetectionRecord> parse_detections(const std::string& text,
                                                     const std::string& name = "<detections>") {
  std::vector<DetectionRecord> dets;
  for (const auto& [lineno, line] : detail::csv_rows(text, kDetectionsHeader, name)) {
    const auto f = detail::split_fields(line);
    DetectionRecord d;
    const bool ok = f.size() == 7 && detail::parse_field(f[0], d.image_id) &&
                    detail::parse_field(f[1], d.class_id) && detail::parse_field(f[2], d.score) &&
                    detail::parse_field(f[3], d.box.x1) && detail::parse_field(f[4], d.box.y1) &&
                    detail::parse_field(f[5], d.box.x2) && detail::parse_field(f[6], d.box.y2);
    if (!ok) throw ParseError(name + ":" + std::to_string(lineno) + ": malformed row '" + line + "'");
    if (!std::isfinite(d.score) || !d.box.well_formed())
      throw ParseError(name + ":" + std::to_string(lineno) + ": non-finite score or malformed box");
    dets.push_back(d);
  }
  return dets;
}

inline std::vector<DetectionRecord> read_detections(const std::filesystem::path& path) {
  return parse_detections(detail::slurp(path), path.string());
}

inline void write_detections(const std::vector<DetectionRecord>& dets,
                             const std::filesystem::path& path) {
  detail::spill(path, format_detections(dets));
}

inline std::string format_ground_truth(const std::vector<GroundTruthRecord>& gts) {
  std::string out(kGroundTruthHeader);
  out += '\n';
  for (const auto& g : gts) {
    out += std::to_string(g.image_id) + ',' + std::to_string(g.class_id) + ',' +
           detail::format_double(g.box.x1) + ',' + detail::format_double(g.box.y1) + ',' +
           detail::format_double(g.box.x2) + ',' + detail::format_double(g.box.y2) + ',' +
           (g.difficult ? "1" : "0") + '\n';
  }
  return out;
}

inline std::vector<GroundTruthRecord> parse_ground_truth(const std::string& text,
                                                         const std::string& name = "<ground truth>") {
  std::vector<GroundTruthRecord> gts;
  for (const auto& [lineno, line] : detail::csv_rows(text, kGroundTruthHeader, name)) {
    const auto f = detail::split_fields(line);
    GroundTruthRecord g;
    int difficult = 0;
    const bool ok = f.size() == 7 && detail::parse_field(f[0], g.image_id) &&
                    detail::parse_field(f[1], g.class_id) && detail::parse_field(f[2], g.box.x1) &&
                    detail::parse_field(f[3], g.box.y1) && detail::parse_field(f[4], g.box.x2) &&
                    detail::parse_field(f[5], g.box.y2) && detail::parse_field(f[6], difficult) &&
                    (difficult == 0 || difficult == 1);
    if (!ok) throw ParseError(name + ":" + std::to_string(lineno) + ": malformed row '" + line + "'");
    if (!g.box.well_formed())
      throw ParseError(name + ":" + std::to_string(lineno) + ": malformed box");
    g.difficult = difficult == 1;
    gts.push_back(g);
  }
  return gts;
}

inline std::vector<GroundTruthRecord> read_ground_truth(const std::filesystem::path& path) {
  return parse_ground_truth(detail::slurp(path), path.string());
}

inline void write_ground_truth(const std::vector<GroundTruthRecord>& gts,
                               const std::filesystem::path& path) {
  detail::spill(path, format_ground_truth(gts));
}

/// Ground truth implied by a dataset's own labeled boxes.
inline std::vector<GroundTruthRecord> ground_truth_of(const Dataset& d) {
  std::vector<GroundTruthRecord> gts;
  gts.reserve(d.size());
  for (const auto& s : d) gts.push_back({s.image_id, s.class_id, s.box, s.difficult});
  return gts;
}

}  // namespace featedit
