#pragma once

#include <cstdint>
#include <vector>

namespace featedit {

/// Per-class binary keep/drop vector over channels, with the reason each
/// dropped channel was selected. keep[i] == 0 exactly when i appears in
/// dropped_intra or dropped_inter.
struct EditMask {
  std::uint32_t class_id = 0;
  std::vector<std::uint8_t> keep;
  std::vector<std::size_t> dropped_intra;  // ascending channel order
  std::vector<std::size_t> dropped_inter;  // ascending channel order

  std::size_t channels() const { return keep.size(); }
  std::size_t dropped_count() const {
    std::size_t n = 0;
    for (auto k : keep) n += k == 0;
    return n;
  }

  static EditMask keep_all(std::uint32_t class_id, std::size_t channels) {
    return {class_id, std::vector<std::uint8_t>(channels, 1), {}, {}};
  }

  friend bool operator==(const EditMask&, const EditMask&) = default;
};

}  // namespace featedit
