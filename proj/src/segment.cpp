#include "fdan/segment.hpp"

#include <stdexcept>
#include <string>

namespace fdan {

int LineSegmentedTarget::total_tokens() const {
  int n = 0;
  for (int len : lengths) n += len;
  return n;
}

LineSegmentedTarget segment_lines(const TokenSequence& tokens, const Vocabulary& vocab,
                                  int l_max, int n_max_line) {
  if (tokens.ids.empty() || tokens.ids.back() != vocab.eot_id())
    throw std::invalid_argument("segment_lines: sequence must end with <eot>");

  LineSegmentedTarget seg;
  std::vector<TokenId> cur;
  auto close = [&]() {
    if (cur.empty()) return;
    if (static_cast<int>(cur.size()) > n_max_line)
      throw std::invalid_argument("segment_lines: line of " + std::to_string(cur.size()) +
                                  " tokens exceeds cap " + std::to_string(n_max_line));
    seg.lines.push_back(std::move(cur));
    cur.clear();
  };

  for (TokenId id : tokens.ids) {
    if (vocab.is_markup(id) || id == vocab.eot_id()) {
      close();
      seg.lines.push_back({id});  // unit line
    } else {
      cur.push_back(id);
      if (id == vocab.eol_id()) close();
    }
  }
  close();

  if (static_cast<int>(seg.lines.size()) > l_max)
    throw std::invalid_argument("segment_lines: " + std::to_string(seg.lines.size()) +
                                " lines exceed cap " + std::to_string(l_max));

  seg.lengths.reserve(seg.lines.size());
  for (const auto& l : seg.lines) {
    seg.lengths.push_back(static_cast<int>(l.size()));
    seg.n_max = std::max(seg.n_max, seg.lengths.back());
  }
  seg.grid.assign(seg.lines.size(), std::vector<TokenId>(seg.n_max + 1, vocab.pad_id()));
  for (size_t j = 0; j < seg.lines.size(); ++j) {
    seg.grid[j][0] = seg.lines[j][0];
    seg.grid[j][1] = seg.lines[j][0];  // duplicated to initiate the second pass
    for (size_t i = 1; i < seg.lines[j].size(); ++i) seg.grid[j][i + 1] = seg.lines[j][i];
  }
  return seg;
}

GridLayout::GridLayout(const LineSegmentedTarget& seg) {
  row_offset.reserve(seg.lines.size());
  for (int j = 0; j < seg.line_count(); ++j) {
    row_offset.push_back(cells);
    for (int i = 0; i <= seg.lengths[j]; ++i) {
      cell_line.push_back(j);
      cell_col.push_back(i);
      ++cells;
    }
  }
}

}  // namespace fdan
