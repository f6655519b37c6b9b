#include "fdan/masks.hpp"

#include <stdexcept>

namespace fdan {

bool AttentionMask::has_all_false_row() const {
  for (int q = 0; q < q_; ++q)
    if (row_count_true(q) == 0) return true;
  return false;
}

int AttentionMask::row_count_true(int q) const {
  int n = 0;
  for (int k = 0; k < k_; ++k) n += visible(q, k) ? 1 : 0;
  return n;
}

std::string AttentionMask::to_pbm() const {
  std::string out = "P1\n" + std::to_string(k_) + " " + std::to_string(q_) + "\n";
  for (int q = 0; q < q_; ++q) {
    for (int k = 0; k < k_; ++k) {
      out += visible(q, k) ? '1' : '0';
      out += k + 1 == k_ ? '\n' : ' ';
    }
  }
  return out;
}

AttentionMask first_pass_mask(int line_count) {
  if (line_count < 1) throw std::invalid_argument("first_pass_mask: need at least one line");
  AttentionMask m(line_count, line_count);
  for (int j = 0; j < line_count; ++j) {
    m.query_coords.push_back({j, 0});
    m.key_coords.push_back({j, 0});
    for (int l = 0; l <= j; ++l) m.set(j, l, true);
  }
  return m;
}

namespace {

std::vector<GridCoord> enumerate_cells(const std::vector<int>& lengths) {
  std::vector<GridCoord> cells;
  for (size_t j = 0; j < lengths.size(); ++j)
    for (int i = 0; i <= lengths[j]; ++i) cells.push_back({static_cast<int>(j), i});
  return cells;
}

}  // namespace

AttentionMask second_pass_mask(const std::vector<int>& lengths, int upto) {
  if (upto < 1) throw std::invalid_argument("second_pass_mask: upto must be >= 1");
  std::vector<GridCoord> queries;
  for (size_t j = 0; j < lengths.size(); ++j)
    for (int i = 1; i <= std::min(upto, lengths[j] - 1); ++i)
      queries.push_back({static_cast<int>(j), i});
  std::vector<GridCoord> keys = enumerate_cells(lengths);

  AttentionMask m(static_cast<int>(queries.size()), static_cast<int>(keys.size()));
  m.query_coords = queries;
  m.key_coords = keys;
  for (size_t q = 0; q < queries.size(); ++q)
    for (size_t k = 0; k < keys.size(); ++k)
      m.set(static_cast<int>(q), static_cast<int>(k), keys[k].pos <= queries[q].pos);
  return m;
}

AttentionMask joint_training_mask(const LineSegmentedTarget& seg) {
  std::vector<GridCoord> cells = enumerate_cells(seg.lengths);
  AttentionMask m(static_cast<int>(cells.size()), static_cast<int>(cells.size()));
  m.query_coords = cells;
  m.key_coords = cells;
  for (size_t q = 0; q < cells.size(); ++q)
    for (size_t k = 0; k < cells.size(); ++k) {
      bool vis;
      if (cells[q].pos == 0)
        vis = cells[k].pos == 0 && cells[k].line <= cells[q].line;
      else
        vis = cells[k].pos <= cells[q].pos;
      m.set(static_cast<int>(q), static_cast<int>(k), vis);
    }
  return m;
}

AttentionMask ablation_mask(const LineSegmentedTarget& seg, MaskVariant variant) {
  if (variant != MaskVariant::kSingleLine && variant != MaskVariant::kFirstPassCtx)
    throw std::invalid_argument("ablation_mask: unknown variant");
  std::vector<GridCoord> cells = enumerate_cells(seg.lengths);
  AttentionMask m(static_cast<int>(cells.size()), static_cast<int>(cells.size()));
  m.query_coords = cells;
  m.key_coords = cells;
  for (size_t q = 0; q < cells.size(); ++q)
    for (size_t k = 0; k < cells.size(); ++k) {
      bool vis;
      if (cells[q].pos == 0) {
        vis = cells[k].pos == 0 && cells[k].line <= cells[q].line;
      } else if (variant == MaskVariant::kSingleLine) {
        vis = cells[k].line == cells[q].line && cells[k].pos <= cells[q].pos;
      } else {
        vis = (cells[k].line == cells[q].line && cells[k].pos <= cells[q].pos) ||
              cells[k].pos == 0;
      }
      m.set(static_cast<int>(q), static_cast<int>(k), vis);
    }
  return m;
}

}  // namespace fdan
