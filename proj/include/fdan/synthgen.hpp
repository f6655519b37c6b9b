#pragma once

#include <string>
#include <vector>

#include "fdan/image.hpp"
#include "fdan/util.hpp"
#include "fdan/vocab.hpp"

namespace fdan {

// Abstract glyph bitmaps derived from a seeded hash of the character id.
// Pairwise distinct with at least 20% ink, so recognition difficulty is
// controlled without any font machinery.
struct GlyphSet {
  int h = 12, w = 8;
  std::vector<std::vector<uint8_t>> bitmaps;  // per char index, h*w of 0/1

  static GlyphSet make(int n_chars, uint64_t seed, int h = 12, int w = 8);
  int ink(int idx) const;
};

enum class CharDist { kUniform, kZipf };

// Everything render_document needs to produce one sample. Content and
// geometry are derived deterministically from the seed.
struct DocSpec {
  std::vector<int> entity_classes;     // class index per entity, -1 anonymous
  std::vector<int> lines_per_entity;   // same length as entity_classes
  int min_chars = 4, max_chars = 10;   // per line
  CharDist char_dist = CharDist::kZipf;
  int margin_left = 8, margin_top = 8;
  std::vector<int> gap_choices = {20, 36, 52};  // px below each line
  int max_indent_glyphs = 0;           // extra per-line left indent
  int entity_gap = 16;                 // extra px between entities
  int canvas_w = 0, canvas_h = 0;      // 0 = fit content (stride-rounded)
  double noise = 0.0;                  // salt-and-pepper rate
  uint64_t seed = 1;

  int total_lines() const;
};

struct Sample {
  Image image;
  DocumentStructure truth;
};

// Entities stacked vertically, lines left-aligned, glyphs concatenated with
// 1px spacing; background 0, ink 255. The truth matches the pixels exactly.
Sample render_document(const DocSpec& spec, const Vocabulary& vocab, const GlyphSet& glyphs);

struct CurriculumConfig {
  int min_lines = 2, max_lines = 6;
  int min_chars = 4, max_chars = 10;
  int n_classes = 1;       // entity classes available (0 = no layout)
  int max_entities = 2;
  CharDist char_dist = CharDist::kZipf;
  int max_indent_glyphs = 0;
  double noise = 0.0;
};

// Document complexity grows with the epoch fraction: the line-count upper
// bound interpolates from min_lines at 0 to max_lines at 1.
DocSpec curriculum_sampler(double fraction, const CurriculumConfig& cfg, Rng& rng);

struct ManifestEntry {
  std::string image;
  std::string truth;
};

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

}  // namespace fdan
