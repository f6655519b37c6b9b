#include "fdan/metrics.hpp"

#include <algorithm>
#include <stdexcept>

#include "fdan/segment.hpp"
#include "fdan/util.hpp"

namespace fdan {

int edit_distance_units(const std::vector<std::string>& ref,
                        const std::vector<std::string>& hyp) {
  size_t n = ref.size(), m = hyp.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      int sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double cer(const std::string& reference, const std::string& hypothesis) {
  std::vector<std::string> ref = codepoints(reference);
  if (ref.empty()) throw std::invalid_argument("cer: empty reference");
  std::vector<std::string> hyp = codepoints(hypothesis);
  return static_cast<double>(edit_distance_units(ref, hyp)) / static_cast<double>(ref.size());
}

namespace {

std::vector<std::string> words_of(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ' || c == '\n') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

double wer(const std::string& reference, const std::string& hypothesis) {
  std::vector<std::string> ref = words_of(reference);
  if (ref.empty()) throw std::invalid_argument("wer: empty reference");
  std::vector<std::string> hyp = words_of(hypothesis);
  return static_cast<double>(edit_distance_units(ref, hyp)) / static_cast<double>(ref.size());
}

std::string document_text(const DocumentStructure& doc) { return doc.text(); }

LayoutGraph LayoutGraph::from_document(const DocumentStructure& doc) {
  LayoutGraph g;
  for (const auto& e : doc.entities)
    if (e.cls) g.classes.push_back(*e.cls);
  return g;
}

// The layout graphs are root-plus-chain with the roots always mapped to
// each other, so with m matched entities, s label mismatches and c
// preserved chain edges the cost is
//   nodes(T)+nodes(P)+edges(T)+edges(P) - 4m - 2c + s
// over the entity counts alone. Crossing mappings can be optimal (rotated
// entity orders preserve chain edges a monotone alignment loses), so we
// maximize f = 4m - s + 2c exactly with a bitmask DP over injective entity
// mappings. Beyond kExactGedEntities on the smaller side, a monotone
// alignment is used instead.
namespace {

constexpr int kExactGedEntities = 14;

int ged_gain_exact(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  int n = static_cast<int>(a.size());
  int m = static_cast<int>(b.size());
  size_t states = (static_cast<size_t>(1) << m) * static_cast<size_t>(m + 1);
  // prev = index a_{i-1} mapped to, or m when it was unmapped
  std::vector<int> cur(states, -1), next(states, -1);
  cur[static_cast<size_t>(m)] = 0;  // mask 0, prev = none
  for (int i = 0; i < n; ++i) {
    std::fill(next.begin(), next.end(), -1);
    for (uint32_t mask = 0; mask < (1u << m); ++mask)
      for (int prev = 0; prev <= m; ++prev) {
        int f = cur[static_cast<size_t>(mask) * (m + 1) + prev];
        if (f < 0) continue;
        size_t skip = static_cast<size_t>(mask) * (m + 1) + m;
        if (next[skip] < f) next[skip] = f;
        for (int j = 0; j < m; ++j) {
          if (mask & (1u << j)) continue;
          int gain = 4 - (a[static_cast<size_t>(i)] == b[static_cast<size_t>(j)] ? 0 : 1);
          if (prev != m && prev == j - 1) gain += 2;
          size_t to = (static_cast<size_t>(mask) | (1u << j)) * (m + 1) + j;
          if (next[to] < f + gain) next[to] = f + gain;
        }
      }
    std::swap(cur, next);
  }
  int best = 0;
  for (int v : cur) best = std::max(best, v);
  return best;
}

int ged_gain_aligned(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  int n = static_cast<int>(a.size());
  int m = static_cast<int>(b.size());
  std::vector<std::vector<int>> G(n + 1, std::vector<int>(m + 1, 0));
  std::vector<std::vector<int>> M(n + 1, std::vector<int>(m + 1, -1000000));
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= m; ++j) {
      int gain = 4 - (a[static_cast<size_t>(i - 1)] == b[static_cast<size_t>(j - 1)] ? 0 : 1);
      int best_prev = std::max(G[i - 1][j - 1], M[i - 1][j - 1] + 2);
      M[i][j] = gain + best_prev;
      G[i][j] = std::max({G[i - 1][j], G[i][j - 1], M[i][j]});
    }
  return G[n][m];
}

}  // namespace

int layout_ged(const LayoutGraph& a, const LayoutGraph& b) {
  int n = static_cast<int>(a.classes.size());
  int m = static_cast<int>(b.classes.size());
  const std::vector<std::string>* small = &b.classes;
  const std::vector<std::string>* large = &a.classes;
  if (n < m) std::swap(small, large);  // the cost is symmetric; mask the smaller side
  int gain = static_cast<int>(small->size()) <= kExactGedEntities
                 ? ged_gain_exact(*large, *small)
                 : ged_gain_aligned(*large, *small);
  int base = (n + (n > 0 ? 2 * n - 1 : 0)) + (m + (m > 0 ? 2 * m - 1 : 0));
  return base - gain;
}

double loer(const DocumentStructure& pred, const DocumentStructure& truth) {
  LayoutGraph gp = LayoutGraph::from_document(pred);
  LayoutGraph gt = LayoutGraph::from_document(truth);
  int denom = gt.nodes() + gt.edges();
  return static_cast<double>(layout_ged(gt, gp)) / static_cast<double>(denom);
}

namespace {

struct EntityRef {
  int doc = 0;
  int order = 0;  // reading order inside the document
  std::string text;
};

double entity_cer(const std::string& truth_text, const std::string& pred_text) {
  if (truth_text.empty()) return pred_text.empty() ? 0.0 : 1.0;
  return cer(truth_text, pred_text);
}

}  // namespace

double map_cer(const std::vector<DocumentStructure>& preds,
               const std::vector<DocumentStructure>& truths) {
  if (preds.size() != truths.size())
    throw std::invalid_argument("map_cer: prediction/truth count mismatch");

  // Pool classed entities per class, remembering their document.
  std::vector<std::string> classes;
  auto collect = [&](const std::vector<DocumentStructure>& docs, const std::string& cls) {
    std::vector<EntityRef> out;
    for (size_t k = 0; k < docs.size(); ++k) {
      int order = 0;
      for (const auto& e : docs[k].entities) {
        if (!e.cls) continue;
        if (*e.cls == cls) {
          LayoutEntity tmp = e;
          DocumentStructure d{{tmp}};
          out.push_back({static_cast<int>(k), order, d.text()});
        }
        ++order;
      }
    }
    return out;
  };
  for (const auto& doc : truths)
    for (const auto& e : doc.entities)
      if (e.cls && std::find(classes.begin(), classes.end(), *e.cls) == classes.end())
        classes.push_back(*e.cls);
  for (const auto& doc : preds)
    for (const auto& e : doc.entities)
      if (e.cls && std::find(classes.begin(), classes.end(), *e.cls) == classes.end())
        classes.push_back(*e.cls);
  if (classes.empty())
    throw std::invalid_argument("map_cer: no layout classes present");

  double weighted = 0.0;
  long total_truth = 0;
  for (const auto& cls : classes) {
    std::vector<EntityRef> t = collect(truths, cls);
    std::vector<EntityRef> p = collect(preds, cls);
    long w = static_cast<long>(t.size());
    total_truth += w;
    if (w == 0) continue;
    if (p.empty()) continue;  // AP 0 for a class never predicted

    // Candidate pairs inside the same document, cheapest CER first; ties
    // broken by reading order for determinism.
    struct Pair {
      double c;
      int ti, pi;
    };
    std::vector<Pair> pairs;
    for (size_t ti = 0; ti < t.size(); ++ti)
      for (size_t pi = 0; pi < p.size(); ++pi)
        if (t[ti].doc == p[pi].doc)
          pairs.push_back({entity_cer(t[ti].text, p[pi].text), static_cast<int>(ti),
                           static_cast<int>(pi)});
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
      if (a.c != b.c) return a.c < b.c;
      if (a.ti != b.ti) return a.ti < b.ti;
      return a.pi < b.pi;
    });

    double precision_sum = 0.0;
    int thresholds = 0;
    for (int pct = 5; pct <= 50; pct += 5) {
      double tau = pct / 100.0;
      std::vector<char> tu(t.size(), 0), pu(p.size(), 0);
      int matched = 0;
      for (const auto& pr : pairs) {
        if (pr.c > tau) break;
        if (tu[pr.ti] || pu[pr.pi]) continue;
        tu[pr.ti] = pu[pr.pi] = 1;
        ++matched;
      }
      precision_sum += static_cast<double>(matched) / static_cast<double>(p.size());
      ++thresholds;
    }
    weighted += w * (precision_sum / thresholds);
  }
  if (total_truth == 0) {
    for (const auto& doc : preds)
      if (doc.entity_count_with_class() > 0) return 0.0;
    return 100.0;
  }
  return 100.0 * weighted / static_cast<double>(total_truth);
}

std::string line_initial_string(const std::vector<TokenId>& initials,
                                const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : initials) {
    if (!vocab.valid(id)) continue;
    switch (vocab.kind(id)) {
      case Vocabulary::TokenKind::kChar:
        out += vocab.char_symbol(id);
        break;
      case Vocabulary::TokenKind::kEol:
        out += '\n';
        break;
      default:
        break;  // layout tokens and controls are stripped
    }
  }
  return out;
}

double first_pass_cer(const std::vector<std::vector<TokenId>>& pass1_tokens,
                      const std::vector<TokenSequence>& truths, const Vocabulary& vocab,
                      int l_max, int n_max_line) {
  if (pass1_tokens.size() != truths.size())
    throw std::invalid_argument("first_pass_cer: trace/truth count mismatch");
  long dist = 0, ref_len = 0;
  for (size_t k = 0; k < truths.size(); ++k) {
    LineSegmentedTarget seg = segment_lines(truths[k], vocab, l_max, n_max_line);
    std::vector<TokenId> truth_initials;
    for (const auto& line : seg.lines) truth_initials.push_back(line[0]);
    std::string ref = line_initial_string(truth_initials, vocab);
    std::string hyp = line_initial_string(pass1_tokens[k], vocab);
    std::vector<std::string> r = codepoints(ref), h = codepoints(hyp);
    dist += edit_distance_units(r, h);
    ref_len += static_cast<long>(r.size());
  }
  if (ref_len == 0) return 0.0;
  return static_cast<double>(dist) / static_cast<double>(ref_len);
}

}  // namespace fdan
