#pragma once

#include <vector>

#include "fdan/vocab.hpp"

namespace fdan {

// A token sequence rewritten as lines. Markup tokens and <eot> form unit
// lines; text lines keep their trailing eol. The duplicated grid is the
// decoder-facing view: column 0 holds the line-initial token, column 1 a
// copy of it (the second-pass kick-off), columns 2.. the remaining tokens
// shifted right, pad-filled up to n_max+1.
struct LineSegmentedTarget {
  std::vector<std::vector<TokenId>> lines;  // y^1..y^L
  std::vector<int> lengths;                 // n_j
  int n_max = 0;                            // max_j n_j
  std::vector<std::vector<TokenId>> grid;   // L rows, each n_max+1 wide

  int line_count() const { return static_cast<int>(lines.size()); }
  int total_tokens() const;
  bool is_unit(int j) const { return lengths[j] == 1; }
};

// Splits at markup boundaries and after each eol. Rejects when a line
// exceeds n_max_line tokens or the line count exceeds l_max.
LineSegmentedTarget segment_lines(const TokenSequence& tokens, const Vocabulary& vocab,
                                  int l_max = 256, int n_max_line = 256);

// Flat enumeration of the grid's real (non-pad) cells, row-major.
// Shared by mask construction, teacher forcing and the loss so that the
// row <-> (line, column) correspondence has a single definition.
struct GridLayout {
  std::vector<int> row_offset;  // per line, index of its column-0 cell
  std::vector<int> cell_line;   // per flat index
  std::vector<int> cell_col;
  int cells = 0;

  explicit GridLayout(const LineSegmentedTarget& seg);
  int index(int line, int col) const { return row_offset[line] + col; }
};

}  // namespace fdan
