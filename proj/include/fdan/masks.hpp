#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fdan/segment.hpp"

namespace fdan {

struct GridCoord {
  int line = 0;  // segmentation row
  int pos = 0;   // grid column: 0 initial, 1 duplicate, 2.. shifted tokens
  bool operator==(const GridCoord&) const = default;
};

// Boolean query x key visibility matrix with the coordinate of every row
// and column. Pad cells are never enumerated, so they are absent from both
// axes rather than masked per entry.
class AttentionMask {
 public:
  AttentionMask(int queries, int keys)
      : q_(queries), k_(keys), bits_(static_cast<size_t>(queries) * keys, 0) {}

  int query_count() const { return q_; }
  int key_count() const { return k_; }
  bool visible(int q, int k) const { return bits_[static_cast<size_t>(q) * k_ + k] != 0; }
  void set(int q, int k, bool v) { bits_[static_cast<size_t>(q) * k_ + k] = v ? 1 : 0; }

  bool has_all_false_row() const;
  int row_count_true(int q) const;
  bool operator==(const AttentionMask& o) const {
    return q_ == o.q_ && k_ == o.k_ && bits_ == o.bits_;
  }

  // PBM-style text grid (P1) for eyeballing masks.
  std::string to_pbm() const;

  std::vector<GridCoord> query_coords;
  std::vector<GridCoord> key_coords;

 private:
  int q_, k_;
  std::vector<uint8_t> bits_;
};

// Causal mask over the first-pass query positions (j, 0), j < line_count.
AttentionMask first_pass_mask(int line_count);

// Second-pass visibility at iteration `upto`: queries are the grid cells
// (j, i) with 1 <= i <= min(upto, n_j - 1); a key (l, k) is visible to
// (j, i) iff k <= i. Keys are every real grid cell.
AttentionMask second_pass_mask(const std::vector<int>& lengths, int upto);

// Teacher-forcing mask over all grid cells, combining the first-pass rule
// on (j, 0) rows with the second-pass rule on (j, i>=1) rows.
AttentionMask joint_training_mask(const LineSegmentedTarget& seg);

enum class MaskVariant { kSingleLine, kFirstPassCtx };

// Context ablations. Rows with i = 0 keep the first-pass rule; rows with
// i >= 1 see only their own line (kSingleLine), or their own line plus all
// line-initial cells (kFirstPassCtx).
AttentionMask ablation_mask(const LineSegmentedTarget& seg, MaskVariant variant);

}  // namespace fdan
