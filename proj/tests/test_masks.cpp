#include <doctest.h>

#include <stdexcept>

#include "fdan/masks.hpp"
#include "fdan/vocab.hpp"

using namespace fdan;

namespace {

LineSegmentedTarget demo_seg() {
  // "<P>ab\n</P><eot>" -> unit, 3-token text line, unit, unit
  Vocabulary v = Vocabulary::from_alphabet("ab", {"P"});
  TokenSequence seq;
  seq.ids = {v.open_id(0), 0, 1, v.eol_id(), v.close_id(0), v.eot_id()};
  return segment_lines(seq, v);
}

int find_key(const AttentionMask& m, GridCoord c) {
  for (size_t k = 0; k < m.key_coords.size(); ++k)
    if (m.key_coords[k] == c) return static_cast<int>(k);
  return -1;
}

}  // namespace

TEST_CASE("first_pass_mask is the causal lower triangle") {
  AttentionMask m = first_pass_mask(3);
  REQUIRE(m.query_count() == 3);
  REQUIRE(m.key_count() == 3);
  for (int q = 0; q < 3; ++q)
    for (int k = 0; k < 3; ++k) CHECK(m.visible(q, k) == (k <= q));
  CHECK(m.row_count_true(0) == 1);
  CHECK(!m.has_all_false_row());
  CHECK_THROWS_AS(first_pass_mask(0), std::invalid_argument);
}

TEST_CASE("first_pass_mask matches the brute-force rule at L=7") {
  AttentionMask m = first_pass_mask(7);
  for (int j = 0; j < 7; ++j)
    for (int l = 0; l < 7; ++l) CHECK(m.visible(j, l) == (l <= j));
}

TEST_CASE("second_pass_mask: position-1 queries see initials and duplicates") {
  AttentionMask m = second_pass_mask({1, 3, 3}, 1);
  // queries: (1,1) and (2,1); the unit line contributes none
  REQUIRE(m.query_count() == 2);
  CHECK(m.query_coords[0] == GridCoord{1, 1});
  CHECK(m.query_coords[1] == GridCoord{2, 1});
  for (int q = 0; q < m.query_count(); ++q) {
    CHECK(m.row_count_true(q) == 6);  // 3 initials + 3 duplicates
    for (int k = 0; k < m.key_count(); ++k)
      CHECK(m.visible(q, k) == (m.key_coords[static_cast<size_t>(k)].pos <= 1));
  }
}

TEST_CASE("second_pass visibility is independent of the query's line") {
  AttentionMask m = second_pass_mask({4, 4, 4}, 3);
  for (int q1 = 0; q1 < m.query_count(); ++q1)
    for (int q2 = 0; q2 < m.query_count(); ++q2) {
      if (m.query_coords[static_cast<size_t>(q1)].pos !=
          m.query_coords[static_cast<size_t>(q2)].pos)
        continue;
      for (int k = 0; k < m.key_count(); ++k)
        CHECK(m.visible(q1, k) == m.visible(q2, k));
    }
}

TEST_CASE("second_pass_mask on unit lines has no queries") {
  AttentionMask m = second_pass_mask({1}, 5);
  CHECK(m.query_count() == 0);
}

TEST_CASE("joint mask restricts to the first-pass triangle on column 0") {
  LineSegmentedTarget seg = demo_seg();
  AttentionMask joint = joint_training_mask(seg);
  AttentionMask fp = first_pass_mask(seg.line_count());
  std::vector<int> rows;
  for (size_t i = 0; i < joint.query_coords.size(); ++i)
    if (joint.query_coords[i].pos == 0) rows.push_back(static_cast<int>(i));
  REQUIRE(static_cast<int>(rows.size()) == fp.query_count());
  for (size_t a = 0; a < rows.size(); ++a)
    for (size_t b = 0; b < rows.size(); ++b)
      CHECK(joint.visible(rows[a], rows[b]) == fp.visible(static_cast<int>(a),
                                                          static_cast<int>(b)));
}

TEST_CASE("joint mask restricts to the second-pass rule on later columns") {
  LineSegmentedTarget seg = demo_seg();
  AttentionMask joint = joint_training_mask(seg);
  AttentionMask sp = second_pass_mask(seg.lengths, seg.n_max);
  for (int q = 0; q < sp.query_count(); ++q) {
    GridCoord qc = sp.query_coords[static_cast<size_t>(q)];
    int jq = -1;
    for (size_t i = 0; i < joint.query_coords.size(); ++i)
      if (joint.query_coords[i] == qc) jq = static_cast<int>(i);
    REQUIRE(jq >= 0);
    for (int k = 0; k < sp.key_count(); ++k) {
      int jk = find_key(joint, sp.key_coords[static_cast<size_t>(k)]);
      REQUIRE(jk >= 0);
      CHECK(sp.visible(q, k) == joint.visible(jq, jk));
    }
  }
}

TEST_CASE("joint mask for <P>ab\\n</P><eot> matches hand enumeration") {
  LineSegmentedTarget seg = demo_seg();
  REQUIRE(seg.line_count() == 4);
  AttentionMask m = joint_training_mask(seg);
  // cells: (0,0)(0,1) (1,0)(1,1)(1,2)(1,3) (2,0)(2,1) (3,0)(3,1)
  REQUIRE(m.query_count() == 10);

  auto vis = [&](GridCoord q, GridCoord k) {
    int qi = -1, ki = find_key(m, k);
    for (size_t i = 0; i < m.query_coords.size(); ++i)
      if (m.query_coords[i] == q) qi = static_cast<int>(i);
    REQUIRE(qi >= 0);
    REQUIRE(ki >= 0);
    return m.visible(qi, ki);
  };
  // first-pass rows: line-initials see initials up to their own line
  CHECK(vis({0, 0}, {0, 0}));
  CHECK(!vis({0, 0}, {1, 0}));
  CHECK(vis({2, 0}, {1, 0}));
  CHECK(!vis({2, 0}, {1, 1}));
  CHECK(!vis({2, 0}, {3, 0}));
  // second-pass rows: everything up to the same column, any line
  CHECK(vis({1, 1}, {3, 1}));
  CHECK(vis({1, 1}, {2, 0}));
  CHECK(!vis({1, 1}, {1, 2}));
  CHECK(vis({1, 2}, {1, 2}));
  CHECK(vis({1, 2}, {0, 1}));
  CHECK(!vis({1, 2}, {1, 3}));
  CHECK(vis({1, 3}, {1, 3}));
  CHECK(!m.has_all_false_row());
}

TEST_CASE("mask builders are pure") {
  LineSegmentedTarget seg = demo_seg();
  CHECK(joint_training_mask(seg) == joint_training_mask(seg));
  CHECK(first_pass_mask(5) == first_pass_mask(5));
  CHECK(second_pass_mask(seg.lengths, 2) == second_pass_mask(seg.lengths, 2));
  CHECK(ablation_mask(seg, MaskVariant::kSingleLine) ==
        ablation_mask(seg, MaskVariant::kSingleLine));
}

TEST_CASE("single-line ablation never crosses lines past column 0") {
  LineSegmentedTarget seg = demo_seg();
  AttentionMask m = ablation_mask(seg, MaskVariant::kSingleLine);
  for (int q = 0; q < m.query_count(); ++q) {
    GridCoord qc = m.query_coords[static_cast<size_t>(q)];
    if (qc.pos == 0) continue;
    for (int k = 0; k < m.key_count(); ++k) {
      GridCoord kc = m.key_coords[static_cast<size_t>(k)];
      if (kc.line != qc.line) CHECK(!m.visible(q, k));
    }
  }
}

TEST_CASE("first-pass-context ablation sees own line plus all initials") {
  // no pad: every line the same length
  LineSegmentedTarget seg;
  Vocabulary v = Vocabulary::from_alphabet("abc");
  TokenSequence seq;
  for (int l = 0; l < 3; ++l) {
    seq.ids.push_back(0);
    seq.ids.push_back(1);
    seq.ids.push_back(v.eol_id());
  }
  seq.ids.push_back(v.eot_id());
  seg = segment_lines(seq, v);
  // make it pad-free by keeping only the equal-length text lines
  seg.lines.pop_back();
  seg.lengths.pop_back();
  seg.grid.pop_back();

  AttentionMask m = ablation_mask(seg, MaskVariant::kFirstPassCtx);
  int L = seg.line_count();
  for (int q = 0; q < m.query_count(); ++q) {
    GridCoord qc = m.query_coords[static_cast<size_t>(q)];
    if (qc.pos == 0) continue;
    CHECK(m.row_count_true(q) == qc.pos + L);
  }
}

TEST_CASE("ablations keep the first-pass rows of the joint mask") {
  LineSegmentedTarget seg = demo_seg();
  AttentionMask joint = joint_training_mask(seg);
  for (MaskVariant variant : {MaskVariant::kSingleLine, MaskVariant::kFirstPassCtx}) {
    AttentionMask m = ablation_mask(seg, variant);
    for (int q = 0; q < m.query_count(); ++q) {
      if (m.query_coords[static_cast<size_t>(q)].pos != 0) continue;
      for (int k = 0; k < m.key_count(); ++k)
        CHECK(m.visible(q, k) == joint.visible(q, k));
    }
  }
}

TEST_CASE("pbm dump is a parseable 0/1 grid") {
  AttentionMask m = first_pass_mask(2);
  CHECK(m.to_pbm() == "P1\n2 2\n1 0\n1 1\n");
}
