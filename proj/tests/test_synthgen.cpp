#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <map>

#include "fdan/synthgen.hpp"

using namespace fdan;

namespace {

Vocabulary gen_vocab() { return Vocabulary::from_alphabet("abcdefghij", {"P"}); }

DocSpec simple_spec(int lines = 2, uint64_t seed = 1) {
  DocSpec spec;
  spec.entity_classes = {0};
  spec.lines_per_entity = {lines};
  spec.seed = seed;
  return spec;
}

// Template-matching OCR: at zero noise every glyph appears verbatim, so
// exact window equality recovers the text and grouping by row recovers the
// lines. Independent of the renderer's bookkeeping.
std::string ocr_oracle(const Image& img, const Vocabulary& vocab, const GlyphSet& glyphs) {
  struct Hit {
    int y, x, ch;
  };
  std::vector<Hit> hits;
  for (int y = 0; y + glyphs.h <= img.h; ++y)
    for (int x = 0; x + glyphs.w <= img.w; ++x) {
      for (size_t c = 0; c < vocab.characters().size(); ++c) {
        const auto& bm = glyphs.bitmaps[c];
        bool match = true;
        for (int gy = 0; gy < glyphs.h && match; ++gy)
          for (int gx = 0; gx < glyphs.w && match; ++gx)
            if ((img.at(y + gy, x + gx) != 0) != (bm[static_cast<size_t>(gy) * glyphs.w + gx] != 0))
              match = false;
        if (match) hits.push_back({y, x, static_cast<int>(c)});
      }
    }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  std::string out;
  int last_y = -1000;
  bool first = true;
  for (const auto& h : hits) {
    if (!first && h.y != last_y) out += '\n';
    out += vocab.characters()[static_cast<size_t>(h.ch)];
    last_y = h.y;
    first = false;
  }
  return out;
}

}  // namespace

TEST_CASE("rendering is deterministic in the spec seed") {
  Vocabulary v = gen_vocab();
  GlyphSet g = GlyphSet::make(10, 42);
  Sample a = render_document(simple_spec(3, 9), v, g);
  Sample b = render_document(simple_spec(3, 9), v, g);
  CHECK(a.image.px == b.image.px);
  CHECK(a.truth == b.truth);
  Sample c = render_document(simple_spec(3, 10), v, g);
  CHECK(a.image.px != c.image.px);
}

TEST_CASE("glyphs are pairwise distinct with at least 20% ink") {
  GlyphSet g = GlyphSet::make(26, 1);
  for (size_t i = 0; i < g.bitmaps.size(); ++i) {
    CHECK(g.ink(static_cast<int>(i)) * 5 >= g.h * g.w);
    for (size_t j = i + 1; j < g.bitmaps.size(); ++j) CHECK(g.bitmaps[i] != g.bitmaps[j]);
  }
}

TEST_CASE("a two-glyph line has an ink bounding box 17 pixels wide") {
  Vocabulary v = Vocabulary::from_alphabet("ab");
  GlyphSet g = GlyphSet::make(2, 3);
  DocSpec spec;
  spec.entity_classes = {-1};
  spec.lines_per_entity = {1};
  spec.min_chars = 2;
  spec.max_chars = 2;
  spec.max_indent_glyphs = 0;
  Sample s = render_document(spec, v, g);
  int min_x = s.image.w, max_x = -1;
  for (int y = 0; y < s.image.h; ++y)
    for (int x = 0; x < s.image.w; ++x)
      if (s.image.at(y, x)) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
      }
  CHECK(max_x - min_x + 1 == 8 + 1 + 8);
}

TEST_CASE("canvas dimensions are multiples of the encoder stride") {
  Vocabulary v = gen_vocab();
  GlyphSet g = GlyphSet::make(10, 4);
  Rng rng(5);
  CurriculumConfig cc;
  for (int i = 0; i < 30; ++i) {
    DocSpec spec = curriculum_sampler(rng.uniform(), cc, rng);
    Sample s = render_document(spec, v, g);
    CHECK(s.image.h % 32 == 0);
    CHECK(s.image.w % 8 == 0);
  }
}

TEST_CASE("a fixed canvas that is too small is rejected with the needed size") {
  Vocabulary v = gen_vocab();
  GlyphSet g = GlyphSet::make(10, 4);
  DocSpec spec = simple_spec(4);
  spec.canvas_w = 8;
  spec.canvas_h = 32;
  CHECK_THROWS_WITH_AS(render_document(spec, v, g), doctest::Contains("needs"),
                       std::invalid_argument);
}

TEST_CASE("the truth matches the rendered pixels exactly (OCR oracle)") {
  Vocabulary v = gen_vocab();
  GlyphSet g = GlyphSet::make(10, 42);
  Rng rng(6);
  CurriculumConfig cc;
  cc.max_indent_glyphs = 2;
  for (int i = 0; i < 10; ++i) {
    DocSpec spec = curriculum_sampler(1.0, cc, rng);
    Sample s = render_document(spec, v, g);
    CHECK(ocr_oracle(s.image, v, g) == s.truth.text());
  }
}

TEST_CASE("curriculum fraction 0 pins the minimum, 1 releases the maximum") {
  CurriculumConfig cc;
  cc.min_lines = 2;
  cc.max_lines = 6;
  Rng rng(7);
  int max_seen_low = 0, max_seen_high = 0;
  double sum_low = 0, sum_high = 0;
  const int draws = 1000;
  for (int i = 0; i < draws; ++i) {
    DocSpec lo = curriculum_sampler(0.0, cc, rng);
    DocSpec hi = curriculum_sampler(1.0, cc, rng);
    max_seen_low = std::max(max_seen_low, lo.total_lines());
    max_seen_high = std::max(max_seen_high, hi.total_lines());
    sum_low += lo.total_lines();
    sum_high += hi.total_lines();
    CHECK(lo.total_lines() == cc.min_lines);
    CHECK(hi.total_lines() <= cc.max_lines);
    CHECK(hi.total_lines() >= cc.min_lines);
  }
  CHECK(max_seen_low == cc.min_lines);
  CHECK(max_seen_high == cc.max_lines);

  // expected line count is nondecreasing in the fraction
  double prev = 0.0;
  for (double f : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    double mean = 0.0;
    for (int i = 0; i < draws; ++i) mean += curriculum_sampler(f, cc, rng).total_lines();
    mean /= draws;
    CHECK(mean >= prev - 0.05);
    prev = mean;
  }
  CHECK_THROWS_AS(curriculum_sampler(1.5, cc, rng), std::invalid_argument);
}

TEST_CASE("pgm files round-trip and bad magics are rejected") {
  Image img;
  img.h = 3;
  img.w = 5;
  img.px = {0, 255, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13};
  write_pgm("pgm_roundtrip_test.pgm", img);
  Image back = read_pgm("pgm_roundtrip_test.pgm");
  CHECK(back.h == img.h);
  CHECK(back.w == img.w);
  CHECK(back.px == img.px);
  std::remove("pgm_roundtrip_test.pgm");

  write_text_file("bad_magic_test.pgm", "P2\n1 1\n255\n0\n");
  CHECK_THROWS_WITH_AS(read_pgm("bad_magic_test.pgm"), doctest::Contains("magic"),
                       std::runtime_error);
  std::remove("bad_magic_test.pgm");
}

TEST_CASE("manifests round-trip") {
  std::vector<ManifestEntry> entries{{"a.pgm", "a.txt"}, {"b.pgm", "b.txt"}};
  write_manifest("manifest_test.txt", entries);
  auto back = read_manifest("manifest_test.txt");
  REQUIRE(back.size() == 2);
  CHECK(back[0].image == "a.pgm");
  CHECK(back[1].truth == "b.txt");
  std::remove("manifest_test.txt");
}

TEST_CASE("salt-and-pepper noise flips pixels at roughly the configured rate") {
  Vocabulary v = gen_vocab();
  GlyphSet g = GlyphSet::make(10, 4);
  DocSpec clean = simple_spec(2, 11);
  DocSpec noisy = clean;
  noisy.noise = 0.05;
  Sample a = render_document(clean, v, g);
  Sample b = render_document(noisy, v, g);
  REQUIRE(a.image.px.size() == b.image.px.size());
  int flips = 0;
  for (size_t i = 0; i < a.image.px.size(); ++i) flips += a.image.px[i] != b.image.px[i];
  double rate = static_cast<double>(flips) / a.image.px.size();
  CHECK(rate > 0.02);
  CHECK(rate < 0.09);
}
