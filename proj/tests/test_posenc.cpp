#include <doctest.h>

#include <cmath>
#include <set>

#include "fdan/posenc.hpp"
#include "fdan/util.hpp"

using namespace fdan;

TEST_CASE("pe_1d at position 0 alternates sin(0)=0 and cos(0)=1") {
  std::vector<double> v = pe_1d(0, 8);
  for (int k = 0; k < 8; k += 2) {
    CHECK(v[static_cast<size_t>(k)] == 0.0);
    CHECK(v[static_cast<size_t>(k) + 1] == 1.0);
  }
}

TEST_CASE("pe_1d matches the direct formula") {
  CHECK(pe_1d(1, 2)[0] == doctest::Approx(0.8414709848078965).epsilon(1e-12));
  std::vector<double> v = pe_1d(37, 16);
  for (int k = 0; 2 * k < 16; ++k) {
    double freq = std::pow(10000.0, 2.0 * k / 16.0);
    CHECK(v[static_cast<size_t>(2 * k)] == doctest::Approx(std::sin(37.0 / freq)).epsilon(1e-12));
    CHECK(v[static_cast<size_t>(2 * k + 1)] ==
          doctest::Approx(std::cos(37.0 / freq)).epsilon(1e-12));
  }
}

TEST_CASE("pe_1d entries stay in [-1, 1] and odd widths are rejected") {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    int pos = rng.uniform_int(0, 5000);
    for (double x : pe_1d(pos, 32)) {
      CHECK(x >= -1.0);
      CHECK(x <= 1.0);
    }
  }
  CHECK_THROWS_AS(pe_1d(0, 7), std::invalid_argument);
  CHECK_THROWS_AS(pe_1d(-1, 8), std::invalid_argument);
}

TEST_CASE("pe_2d splits channels row-first") {
  std::vector<double> v = pe_2d(1, 1, 8);
  CHECK(v == std::vector<double>{0, 1, 0, 1, 0, 1, 0, 1});

  Rng rng(5);
  std::vector<double> g = pe_2d(4, 6, 16);
  for (int i = 0; i < 20; ++i) {
    int r = rng.uniform_int(0, 3), c = rng.uniform_int(0, 5);
    const double* cell = g.data() + (static_cast<size_t>(r) * 6 + c) * 16;
    std::vector<double> rh = pe_1d(r, 8), ch = pe_1d(c, 8);
    for (int k = 0; k < 8; ++k) {
      CHECK(cell[k] == rh[static_cast<size_t>(k)]);
      CHECK(cell[8 + k] == ch[static_cast<size_t>(k)]);
    }
  }
  CHECK_THROWS_AS(pe_2d(2, 2, 6), std::invalid_argument);
}

TEST_CASE("pe_2d distinguishes (0,1) from (1,0)") {
  std::vector<double> g = pe_2d(2, 3, 8);
  const double* a = g.data() + (0 * 3 + 1) * 8;
  const double* b = g.data() + (1 * 3 + 0) * 8;
  bool differ = false;
  for (int k = 0; k < 8; ++k) differ |= a[k] != b[k];
  CHECK(differ);
}

TEST_CASE("pe_doc concat: halves encode line and in-line position") {
  CHECK(pe_doc(0, 0, 8, DocPe::kConcat) == std::vector<double>{0, 1, 0, 1, 0, 1, 0, 1});
  // the line half does not depend on the in-line index
  for (int i : {0, 3, 9}) {
    std::vector<double> a = pe_doc(5, i, 16, DocPe::kConcat);
    std::vector<double> b = pe_doc(5, 0, 16, DocPe::kConcat);
    for (int k = 0; k < 8; ++k) CHECK(a[static_cast<size_t>(k)] == b[static_cast<size_t>(k)]);
  }
}

TEST_CASE("pe_doc sum equals the sum of full-width encodings") {
  std::vector<double> s = pe_doc(2, 5, 16, DocPe::kSum);
  std::vector<double> a = pe_1d(2, 16), b = pe_1d(5, 16);
  for (int k = 0; k < 16; ++k)
    CHECK(s[static_cast<size_t>(k)] ==
          doctest::Approx(a[static_cast<size_t>(k)] + b[static_cast<size_t>(k)]).epsilon(1e-15));
}

TEST_CASE("pe_doc rejects out-of-cap indices") {
  CHECK_THROWS_AS(pe_doc(256, 0, 8, DocPe::kConcat, 256, 256), std::invalid_argument);
  CHECK_THROWS_AS(pe_doc(0, 256, 8, DocPe::kConcat, 256, 256), std::invalid_argument);
}

TEST_CASE("concat document encoding is injective over a 64x64 grid") {
  std::set<std::vector<double>> seen;
  for (int j = 0; j < 64; ++j)
    for (int i = 0; i < 64; ++i) {
      auto v = pe_doc(j, i, 8, DocPe::kConcat);
      CHECK(seen.insert(v).second);
    }
}

TEST_CASE("sum document encoding is symmetric in (line, position)") {
  for (int a = 0; a < 8; ++a)
    for (int b = 0; b < 8; ++b)
      CHECK(pe_doc(a, b, 8, DocPe::kSum) == pe_doc(b, a, 8, DocPe::kSum));
}

TEST_CASE("positional tables agree with the direct functions") {
  PositionalTable t1 = PositionalTable::one_d(64, 16);
  for (int p : {0, 1, 17, 63}) {
    std::vector<double> want = pe_1d(p, 16);
    const double* got = t1.row(p);
    for (int k = 0; k < 16; ++k) CHECK(got[k] == want[static_cast<size_t>(k)]);
  }
  CHECK_THROWS_AS(t1.row(64), std::out_of_range);

  PositionalTable t2 = PositionalTable::two_d(3, 5, 8);
  std::vector<double> whole = pe_2d(3, 5, 8);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 5; ++c) {
      const double* got = t2.cell(r, c);
      const double* want = whole.data() + (static_cast<size_t>(r) * 5 + c) * 8;
      for (int k = 0; k < 8; ++k) CHECK(got[k] == want[k]);
    }

  for (DocPe variant : {DocPe::kConcat, DocPe::kSum}) {
    PositionalTable td = PositionalTable::doc(16, 16, 8, variant);
    for (int j : {0, 3, 15})
      for (int i : {0, 7, 15})
        CHECK(td.doc_vec(j, i) == pe_doc(j, i, 8, variant, 16, 16));
  }
}
