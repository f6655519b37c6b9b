#include "fdan/synthgen.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fdan {

void write_pgm(const std::string& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write image: " + path);
  os << "P5\n" << img.w << " " << img.h << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.px.data()),
           static_cast<std::streamsize>(img.px.size()));
}

Image read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open image: " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5") throw std::runtime_error("bad PGM magic in " + path);
  auto next_int = [&]() {
    int v;
    // skip whitespace and '#' comments
    for (;;) {
      int c = is.peek();
      if (c == '#') {
        std::string line;
        std::getline(is, line);
      } else if (std::isspace(c)) {
        is.get();
      } else {
        break;
      }
    }
    if (!(is >> v)) throw std::runtime_error("truncated PGM header in " + path);
    return v;
  };
  Image img;
  img.w = next_int();
  img.h = next_int();
  int maxval = next_int();
  if (maxval != 255) throw std::runtime_error("unsupported PGM maxval in " + path);
  is.get();  // single whitespace after header
  img.px.resize(static_cast<size_t>(img.w) * img.h);
  is.read(reinterpret_cast<char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
  if (!is) throw std::runtime_error("truncated PGM data in " + path);
  return img;
}

GlyphSet GlyphSet::make(int n_chars, uint64_t seed, int h, int w) {
  GlyphSet g;
  g.h = h;
  g.w = w;
  int px = h * w;
  int min_ink = (px + 4) / 5;  // >= 20%
  for (int c = 0; c < n_chars; ++c) {
    for (uint64_t salt = 0;; ++salt) {
      Rng rng(seed ^ (static_cast<uint64_t>(c) * 0x9E3779B97F4A7C15ull) ^ (salt << 32));
      std::vector<uint8_t> bm(px);
      int ink = 0;
      for (int i = 0; i < px; ++i) {
        bm[i] = rng.uniform() < 0.45 ? 1 : 0;
        ink += bm[i];
      }
      bool distinct = true;
      for (const auto& other : g.bitmaps)
        if (other == bm) {
          distinct = false;
          break;
        }
      if (ink >= min_ink && distinct) {
        g.bitmaps.push_back(std::move(bm));
        break;
      }
    }
  }
  return g;
}

int GlyphSet::ink(int idx) const {
  int n = 0;
  for (uint8_t v : bitmaps[static_cast<size_t>(idx)]) n += v;
  return n;
}

int DocSpec::total_lines() const {
  int n = 0;
  for (int l : lines_per_entity) n += l;
  return n;
}

namespace {

int round_up(int v, int m) { return (v + m - 1) / m * m; }

// Zipf-ish weights over the alphabet; realistic text has a skewed unigram
// distribution, which also makes line-initial characters collide.
int draw_char(Rng& rng, int n_chars, CharDist dist) {
  if (dist == CharDist::kUniform) return rng.uniform_int(0, n_chars - 1);
  double u = rng.uniform();
  double total = 0.0;
  for (int k = 1; k <= n_chars; ++k) total += 1.0 / k;
  double acc = 0.0;
  for (int k = 1; k <= n_chars; ++k) {
    acc += 1.0 / k / total;
    if (u < acc) return k - 1;
  }
  return n_chars - 1;
}

}  // namespace

Sample render_document(const DocSpec& spec, const Vocabulary& vocab, const GlyphSet& glyphs) {
  if (spec.entity_classes.size() != spec.lines_per_entity.size())
    throw std::invalid_argument("render_document: entity/line spec mismatch");
  int n_chars = static_cast<int>(vocab.characters().size());
  if (n_chars > static_cast<int>(glyphs.bitmaps.size()))
    throw std::invalid_argument("render_document: glyph set smaller than the alphabet");

  Rng rng(spec.seed);
  int advance = glyphs.w + 1;

  // Content, geometry bookkeeping, then pixels.
  DocumentStructure truth;
  struct Placed {
    std::string text;
    int x, y;
  };
  std::vector<Placed> placed;
  int y = spec.margin_top;
  int max_right = 0;
  for (size_t e = 0; e < spec.entity_classes.size(); ++e) {
    LayoutEntity entity;
    if (spec.entity_classes[e] >= 0)
      entity.cls = vocab.entity_classes().at(static_cast<size_t>(spec.entity_classes[e]));
    for (int li = 0; li < spec.lines_per_entity[e]; ++li) {
      int len = rng.uniform_int(spec.min_chars, spec.max_chars);
      std::string text;
      for (int c = 0; c < len; ++c)
        text += vocab.characters()[static_cast<size_t>(draw_char(rng, n_chars, spec.char_dist))];
      int indent = spec.max_indent_glyphs > 0
                       ? rng.uniform_int(0, spec.max_indent_glyphs) * advance
                       : 0;
      int x = spec.margin_left + indent;
      placed.push_back({text, x, y});
      max_right = std::max(max_right, x + len * advance - 1);
      entity.lines.push_back(text);
      int gap = spec.gap_choices.empty()
                    ? 20
                    : spec.gap_choices[static_cast<size_t>(
                          rng.uniform_int(0, static_cast<int>(spec.gap_choices.size()) - 1))];
      y += glyphs.h + gap;
    }
    truth.entities.push_back(std::move(entity));
    y += spec.entity_gap;
  }

  int need_w = round_up(max_right + spec.margin_left, 8);
  int need_h = round_up(y, 32);
  int W = spec.canvas_w > 0 ? spec.canvas_w : need_w;
  int H = spec.canvas_h > 0 ? spec.canvas_h : need_h;
  if (need_w > W || need_h > H)
    throw std::invalid_argument("render_document: content needs " + std::to_string(need_w) +
                                "x" + std::to_string(need_h) + ", canvas is " +
                                std::to_string(W) + "x" + std::to_string(H));

  Image img;
  img.w = W;
  img.h = H;
  img.px.assign(static_cast<size_t>(W) * H, 0);
  for (const auto& pl : placed) {
    int x = pl.x;
    for (const std::string& cp : codepoints(pl.text)) {
      auto id = vocab.char_id(cp);
      if (!id) throw std::invalid_argument("render_document: '" + cp + "' not in vocabulary");
      const auto& bm = glyphs.bitmaps[static_cast<size_t>(*id)];
      for (int gy = 0; gy < glyphs.h; ++gy)
        for (int gx = 0; gx < glyphs.w; ++gx)
          if (bm[static_cast<size_t>(gy) * glyphs.w + gx])
            img.set(pl.y + gy, x + gx, 255);
      x += advance;
    }
  }
  if (spec.noise > 0.0) {
    for (size_t i = 0; i < img.px.size(); ++i)
      if (rng.uniform() < spec.noise) img.px[i] = img.px[i] ? 0 : 255;
  }
  return Sample{std::move(img), std::move(truth)};
}

DocSpec curriculum_sampler(double fraction, const CurriculumConfig& cfg, Rng& rng) {
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("curriculum_sampler: fraction outside [0,1]");
  int cap = static_cast<int>(std::lround(lerp(cfg.min_lines, cfg.max_lines, fraction)));
  int lines = rng.uniform_int(cfg.min_lines, std::max(cfg.min_lines, cap));

  DocSpec spec;
  spec.min_chars = cfg.min_chars;
  spec.max_chars = cfg.max_chars;
  spec.char_dist = cfg.char_dist;
  spec.max_indent_glyphs = cfg.max_indent_glyphs;
  spec.noise = cfg.noise;
  spec.seed = rng.next_u64();

  if (cfg.n_classes <= 0) {
    spec.entity_classes = {-1};
    spec.lines_per_entity = {lines};
    return spec;
  }
  int entities = rng.uniform_int(1, std::max(1, std::min({cfg.max_entities, lines})));
  spec.entity_classes.resize(static_cast<size_t>(entities));
  spec.lines_per_entity.assign(static_cast<size_t>(entities), 1);
  for (int e = 0; e < entities; ++e)
    spec.entity_classes[static_cast<size_t>(e)] = rng.uniform_int(0, cfg.n_classes - 1);
  for (int extra = lines - entities; extra > 0; --extra)
    ++spec.lines_per_entity[static_cast<size_t>(rng.uniform_int(0, entities - 1))];
  return spec;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ostringstream os;
  for (const auto& e : entries) os << e.image << '\t' << e.truth << '\n';
  write_text_file(path, os.str());
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::istringstream is(read_text_file(path));
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("manifest: malformed line '" + line + "'");
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

}  // namespace fdan
