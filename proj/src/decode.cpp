#include "fdan/decode.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "fdan/util.hpp"

namespace fdan {

namespace {

using Clock = std::chrono::steady_clock;

void check_limits(const ModelParams& p, const DecodeLimits& lim) {
  if (lim.n_max_flat > p.cfg.n_max_flat || lim.l_max > p.cfg.l_max ||
      lim.n_max_line > p.cfg.n_max_line)
    throw std::invalid_argument("decode: limits exceed the caps the model was built with");
  if (lim.n_max_flat < 1 || lim.l_max < 1 || lim.n_max_line < 1)
    throw std::invalid_argument("decode: limits must be positive");
}

// y += x * W + b, W row-major [k x n]
void matvec_add(const double* x, int k, const TensorPtr& w, const TensorPtr& b, double* y) {
  int n = w->cols();
  if (b)
    for (int j = 0; j < n; ++j) y[j] = b->val[j];
  else
    std::fill(y, y + n, 0.0);
  const double* wv = w->val.data();
  for (int kk = 0; kk < k; ++kk) {
    double xv = x[kk];
    if (xv == 0.0) continue;
    const double* wrow = wv + static_cast<size_t>(kk) * n;
    for (int j = 0; j < n; ++j) y[j] += xv * wrow[j];
  }
}

void layernorm_row(const double* x, int n, const TensorPtr& g, const TensorPtr& b, double* y) {
  double mean = 0.0;
  for (int j = 0; j < n; ++j) mean += x[j];
  mean /= n;
  double var = 0.0;
  for (int j = 0; j < n; ++j) var += (x[j] - mean) * (x[j] - mean);
  var /= n;
  double rs = 1.0 / std::sqrt(var + 1e-5);
  for (int j = 0; j < n; ++j) y[j] = g->val[j] * (x[j] - mean) * rs + b->val[j];
}

double gelu_one(double v) {
  return 0.5 * v * (1.0 + std::erf(v * 0.7071067811865475244));
}

// Mirrors the visibility of model_mask() in schedule coordinates: line 0 is
// <sot>, content lines are 1-based, grid columns as in the duplicated grid.
bool coord_visible(Variant variant, const GridCoord& q, const GridCoord& k) {
  if (k.line == 0 && k.pos == 0) return true;  // <sot>
  if (q.pos == 0) return k.pos == 0 && k.line <= q.line;
  switch (variant) {
    case Variant::kSingleLineCtx:
      return k.line == q.line && k.pos <= q.pos;
    case Variant::kFirstPassCtx:
      return (k.line == q.line && k.pos <= q.pos) || k.pos == 0;
    default:
      return k.pos <= q.pos;
  }
}

// Key/value-cached decoder evaluating blocks of new query rows. All block
// rows join the cache before attention so multi-target siblings see each
// other, exactly as the training mask prescribes.
class IncrementalDecoder {
 public:
  IncrementalDecoder(const ModelParams& p, const FeatureGrid& feat, ThreadPool* pool,
                     bool use_coords)
      : p_(p), pool_(pool), use_coords_(use_coords), d_(p.cfg.d),
        heads_(p.cfg.heads), f_(feat.hf * feat.wf) {
    int layers = p.cfg.layers;
    kself_.resize(layers);
    vself_.resize(layers);
    kcross_.resize(layers);
    vcross_.resize(layers);
    const auto& f1d = feat.f1d->val;
    for (int l = 0; l < layers; ++l) {
      kcross_[l].assign(static_cast<size_t>(f_) * d_, 0.0);
      vcross_[l].assign(static_cast<size_t>(f_) * d_, 0.0);
      const auto& lp = p.layers[l];
      for (int r = 0; r < f_; ++r) {
        matvec_add(f1d.data() + static_cast<size_t>(r) * d_, d_, lp.cross_wk, lp.cross_bk,
                   kcross_[l].data() + static_cast<size_t>(r) * d_);
        matvec_add(f1d.data() + static_cast<size_t>(r) * d_, d_, lp.cross_wv, lp.cross_bv,
                   vcross_[l].data() + static_cast<size_t>(r) * d_);
      }
    }
  }

  int cached() const { return n_; }

  // rows: B x d embedded+positioned inputs, coords: per row (may be empty
  // when use_coords is false). outs: B x d decoder outputs (post final LN).
  void forward_block(std::vector<double> rows, const std::vector<GridCoord>& coords,
                     int B, std::vector<double>& outs) {
    int d = d_;
    int total = n_ + B;
    if (use_coords_) {
      coords_.insert(coords_.end(), coords.begin(), coords.end());
      if (static_cast<int>(coords_.size()) != total)
        throw std::logic_error("decoder cache: coordinate bookkeeping out of step");
    }
    std::vector<double>& x = rows;  // residual stream, B rows
    std::vector<double> h(static_cast<size_t>(B) * d), q(static_cast<size_t>(B) * d),
        att(static_cast<size_t>(B) * d);

    for (size_t l = 0; l < p_.layers.size(); ++l) {
      const auto& lp = p_.layers[l];
      auto& kc = kself_[l];
      auto& vc = vself_[l];
      kc.resize(static_cast<size_t>(total) * d);
      vc.resize(static_cast<size_t>(total) * d);

      pool_->parallel_for(B, [&](int b) {
        const double* xb = x.data() + static_cast<size_t>(b) * d;
        double* hb = h.data() + static_cast<size_t>(b) * d;
        layernorm_row(xb, d, lp.ln1_g, lp.ln1_b, hb);
        matvec_add(hb, d, lp.self_wq, lp.self_bq, q.data() + static_cast<size_t>(b) * d);
        matvec_add(hb, d, lp.self_wk, lp.self_bk,
                   kc.data() + static_cast<size_t>(n_ + b) * d);
        matvec_add(hb, d, lp.self_wv, lp.self_bv,
                   vc.data() + static_cast<size_t>(n_ + b) * d);
      });

      pool_->parallel_for(B, [&](int b) {
        attend_rows(q.data() + static_cast<size_t>(b) * d, kc.data(), vc.data(), total,
                    use_coords_ ? &coords_[n_ + b] : nullptr,
                    att.data() + static_cast<size_t>(b) * d);
        double* xb = x.data() + static_cast<size_t>(b) * d;
        double* hb = h.data() + static_cast<size_t>(b) * d;  // scratch for proj
        matvec_add(att.data() + static_cast<size_t>(b) * d, d, lp.self_wo, lp.self_bo, hb);
        for (int j = 0; j < d; ++j) xb[j] += hb[j];

        layernorm_row(xb, d, lp.ln2_g, lp.ln2_b, hb);
        double* qb = q.data() + static_cast<size_t>(b) * d;
        matvec_add(hb, d, lp.cross_wq, lp.cross_bq, qb);
        attend_rows(qb, kcross_[l].data(), vcross_[l].data(), f_, nullptr,
                    att.data() + static_cast<size_t>(b) * d);
        matvec_add(att.data() + static_cast<size_t>(b) * d, d, lp.cross_wo, lp.cross_bo, hb);
        for (int j = 0; j < d; ++j) xb[j] += hb[j];

        layernorm_row(xb, d, lp.ln3_g, lp.ln3_b, hb);
        std::vector<double> f1(static_cast<size_t>(lp.ffn_b1->size()));
        matvec_add(hb, d, lp.ffn_w1, lp.ffn_b1, f1.data());
        for (double& v : f1) v = gelu_one(v);
        matvec_add(f1.data(), static_cast<int>(f1.size()), lp.ffn_w2, lp.ffn_b2, hb);
        for (int j = 0; j < d; ++j) xb[j] += hb[j];
      });
    }

    outs.resize(static_cast<size_t>(B) * d);
    pool_->parallel_for(B, [&](int b) {
      layernorm_row(x.data() + static_cast<size_t>(b) * d, d, p_.final_g, p_.final_b,
                    outs.data() + static_cast<size_t>(b) * d);
    });
    n_ = total;
  }

  void project_row(const double* out_d, double* logits) const {
    matvec_add(out_d, d_, p_.proj, nullptr, logits);
  }

 private:
  void attend_rows(const double* qrow, const double* keys, const double* vals, int nkeys,
                   const GridCoord* qc, double* out) const {
    int dk = d_ / heads_;
    double scl = 1.0 / std::sqrt(static_cast<double>(dk));
    std::vector<double> p(nkeys);
    for (int hh = 0; hh < heads_; ++hh) {
      int off = hh * dk;
      double maxs = -1e300;
      for (int j = 0; j < nkeys; ++j) {
        if (qc && !coord_visible(p_.cfg.variant, *qc, coords_[j])) {
          p[j] = -1e300;
          continue;
        }
        const double* krow = keys + static_cast<size_t>(j) * d_ + off;
        double s = 0.0;
        for (int c = 0; c < dk; ++c) s += qrow[off + c] * krow[c];
        s *= scl;
        p[j] = s;
        if (s > maxs) maxs = s;
      }
      if (maxs == -1e300)
        throw std::logic_error("decode: query with no visible key");
      double denom = 0.0;
      for (int j = 0; j < nkeys; ++j) {
        if (p[j] == -1e300) {
          p[j] = 0.0;
          continue;
        }
        p[j] = std::exp(p[j] - maxs);
        denom += p[j];
      }
      double* orow = out + off;
      std::fill(orow, orow + dk, 0.0);
      for (int j = 0; j < nkeys; ++j) {
        if (p[j] == 0.0) continue;
        double w = p[j] / denom;
        const double* vrow = vals + static_cast<size_t>(j) * d_ + off;
        for (int c = 0; c < dk; ++c) orow[c] += w * vrow[c];
      }
    }
  }

  const ModelParams& p_;
  ThreadPool* pool_;
  bool use_coords_;
  int d_, heads_, f_;
  int n_ = 0;
  std::vector<GridCoord> coords_;
  std::vector<std::vector<double>> kself_, vself_, kcross_, vcross_;
};

FeatureGrid encode_silent(const ModelParams& params, const Image& img) {
  Tape tape;
  tape.recording = false;
  return encode_image(tape, params, img);
}

std::vector<double> embedded_row(const ModelParams& p, TokenId tok,
                                 const std::vector<double>& pe) {
  int d = p.cfg.d;
  std::vector<double> row(pe);
  const double* e = p.embedding->val.data() + static_cast<size_t>(tok) * d;
  for (int j = 0; j < d; ++j) row[j] += e[j];
  return row;
}

}  // namespace

OraclePolicy::OraclePolicy(const TokenSequence& truth, const Vocabulary& vocab,
                           const DecodeLimits& limits)
    : truth_(truth), eol_(vocab.eol_id()),
      seg_(segment_lines(truth, vocab, limits.l_max, limits.n_max_line)) {}

TokenId OraclePolicy::flat(int step) const {
  if (step < 0 || step >= truth_.size())
    throw std::out_of_range("oracle: sequential step beyond the ground truth");
  return truth_.ids[static_cast<size_t>(step)];
}

TokenId OraclePolicy::line_initial(int model_line) const {
  int j = model_line - 1;
  if (j < 0 || j >= seg_.line_count())
    throw std::out_of_range("oracle: line index beyond the ground truth");
  return seg_.lines[static_cast<size_t>(j)][0];
}

TokenId OraclePolicy::continuation(int model_line, int content_idx) const {
  int j = model_line - 1;
  if (j < 0 || j >= seg_.line_count() || content_idx < 0 ||
      content_idx >= seg_.lengths[static_cast<size_t>(j)])
    return eol_;
  return seg_.lines[static_cast<size_t>(j)][static_cast<size_t>(content_idx)];
}

DecodeTrace decode_dan(const ModelParams& params, const Image& img,
                       const DecodeLimits& limits, const OraclePolicy* oracle, int threads,
                       std::vector<std::vector<double>>* logit_capture) {
  check_limits(params, limits);
  auto t0 = Clock::now();
  DecodeTrace trace;
  const Vocabulary& vocab = params.vocab;
  ThreadPool pool(threads > 0 ? threads : ThreadPool::default_threads());
  FeatureGrid feat = encode_silent(params, img);
  IncrementalDecoder inc(params, feat, &pool, /*use_coords=*/false);

  std::vector<double> outs, logits(static_cast<size_t>(vocab.alphabet_size()));
  TokenId input = vocab.sot_id();
  for (int step = 0; step < limits.n_max_flat; ++step) {
    std::vector<double> row = embedded_row(params, input, query_pe_flat(params, step));
    inc.forward_block(std::move(row), {}, 1, outs);
    inc.project_row(outs.data(), logits.data());
    ++trace.decoder_invocations;
    TokenId tok = oracle ? oracle->flat(step)
                         : static_cast<TokenId>(argmax(logits.data(), vocab.alphabet_size()));
    if (logit_capture) logit_capture->emplace_back(logits);
    trace.tokens.ids.push_back(tok);
    if (tok == vocab.eot_id()) break;
    if (step + 1 == limits.n_max_flat) {
      trace.hit_flat_limit = true;
      break;
    }
    input = tok;
  }
  trace.paper_invocations = trace.decoder_invocations;
  trace.wall_clock_s = std::chrono::duration<double>(Clock::now() - t0).count();
  return trace;
}

DecodeTrace decode_fasterdan(const ModelParams& params, const Image& img,
                             const DecodeLimits& limits, const OraclePolicy* oracle,
                             int threads,
                             std::vector<std::vector<double>>* logit_capture) {
  check_limits(params, limits);
  auto t0 = Clock::now();
  DecodeTrace trace;
  const Vocabulary& vocab = params.vocab;
  int d = params.cfg.d;
  int na = vocab.alphabet_size();
  ThreadPool pool(threads > 0 ? threads : ThreadPool::default_threads());
  FeatureGrid feat = encode_silent(params, img);
  IncrementalDecoder inc(params, feat, &pool, /*use_coords=*/true);

  std::vector<double> outs, logits(static_cast<size_t>(na));
  auto is_unit_initial = [&](TokenId tok) {
    return vocab.is_markup(tok) || tok == vocab.eot_id() || tok == vocab.eol_id() ||
           tok == vocab.pad_id();
  };

  // First pass: autoregressive over line-initial cells. The emission of
  // step j is the initial of model line j+1; dec stops on <eot> or l_max.
  TokenId pending = vocab.sot_id();
  GridCoord pending_coord{0, 0};
  bool saw_eot = false;
  int L = 0;
  for (;;) {
    std::vector<double> row =
        embedded_row(params, pending, query_pe(params, pending_coord.line, 0, L));
    inc.forward_block(std::move(row), {pending_coord}, 1, outs);
    inc.project_row(outs.data(), logits.data());
    ++trace.pass1_invocations;
    TokenId tok = oracle ? oracle->line_initial(L + 1)
                         : static_cast<TokenId>(argmax(logits.data(), na));
    if (logit_capture) logit_capture->emplace_back(logits);
    trace.pass1_tokens.push_back(tok);
    ++L;
    LineResult lr;
    lr.tokens = {tok};
    if (tok == vocab.eot_id()) {
      lr.end = LineEnd::kUnit;
      trace.lines.push_back(std::move(lr));
      saw_eot = true;
      break;
    }
    if (vocab.is_markup(tok))
      lr.end = LineEnd::kUnit;
    else if (tok == vocab.eol_id())
      lr.end = LineEnd::kEol;  // an empty text line carries only its terminator
    else if (tok == vocab.pad_id()) {
      lr.end = LineEnd::kForced;
      lr.offending = tok;
      lr.tokens.clear();
    } else
      lr.end = LineEnd::kCap;  // provisional: completed during the second pass
    trace.lines.push_back(std::move(lr));
    if (L == limits.l_max) {
      trace.hit_line_limit = true;
      break;
    }
    pending = tok;
    pending_coord = {L, 0};
  }

  // Second pass: duplicate every line-initial into column 1 and complete
  // all unfinished lines in parallel, one grid column per iteration.
  std::vector<char> active(trace.lines.size(), 0);
  bool any_active = false;
  for (size_t j = 0; j < trace.lines.size(); ++j) {
    active[j] = trace.lines[j].end == LineEnd::kCap ? 1 : 0;
    any_active |= active[j] != 0;
  }

  if (any_active) {
    // Feed rows for grid column k; the final pass-1 emission joins the
    // first block because it was never an input during pass 1.
    std::vector<double> rows;
    std::vector<GridCoord> coords;
    auto push_row = [&](TokenId tok, GridCoord c) {
      std::vector<double> r = embedded_row(params, tok, query_pe(params, c.line, c.pos, L));
      rows.insert(rows.end(), r.begin(), r.end());
      coords.push_back(c);
    };
    TokenId last_initial = trace.pass1_tokens.back();
    if (last_initial != vocab.pad_id()) push_row(last_initial, {L, 0});
    std::vector<int> out_row_of_line(trace.lines.size(), -1);
    int nrows = static_cast<int>(coords.size());
    for (size_t j = 0; j < trace.lines.size(); ++j) {
      if (trace.lines[j].tokens.empty()) continue;  // forced at start
      push_row(trace.lines[j].tokens[0], {static_cast<int>(j) + 1, 1});
      out_row_of_line[j] = nrows++;
    }

    for (int k = 1;; ++k) {
      inc.forward_block(std::move(rows), coords, nrows, outs);
      ++trace.pass2_invocations;
      rows.clear();
      coords.clear();
      int next_nrows = 0;
      std::vector<int> next_out_row(trace.lines.size(), -1);
      bool still_active = false;
      for (size_t j = 0; j < trace.lines.size(); ++j) {
        if (out_row_of_line[j] < 0) continue;
        int r = out_row_of_line[j];
        if (!active[j]) continue;
        inc.project_row(outs.data() + static_cast<size_t>(r) * d, logits.data());
        TokenId tok = oracle ? oracle->continuation(static_cast<int>(j) + 1, k)
                             : static_cast<TokenId>(argmax(logits.data(), na));
        if (logit_capture) logit_capture->emplace_back(logits);
        LineResult& lr = trace.lines[j];
        if (tok == vocab.eol_id()) {
          lr.tokens.push_back(tok);
          lr.end = LineEnd::kEol;
          active[j] = 0;
          // the terminator still becomes a key for the remaining lines
          push_row(tok, {static_cast<int>(j) + 1, k + 1});
          next_out_row[j] = next_nrows++;
        } else if (is_unit_initial(tok)) {
          lr.end = LineEnd::kForced;
          lr.offending = tok;
          active[j] = 0;
        } else if (k + 1 >= limits.n_max_line) {
          lr.tokens.push_back(tok);
          lr.end = LineEnd::kCap;
          active[j] = 0;
          trace.hit_length_limit = true;
        } else {
          lr.tokens.push_back(tok);
          push_row(tok, {static_cast<int>(j) + 1, k + 1});
          next_out_row[j] = next_nrows++;
          still_active = true;
        }
      }
      out_row_of_line = std::move(next_out_row);
      nrows = next_nrows;
      if (!still_active) break;
    }
  }

  trace.decoder_invocations = trace.pass1_invocations + trace.pass2_invocations;
  int n_pred = 0;
  for (const auto& lr : trace.lines)
    n_pred = std::max(n_pred, static_cast<int>(lr.tokens.size()));
  trace.paper_invocations = L + std::max(n_pred, 1);
  trace.tokens = assemble_transcript(trace, vocab);
  trace.wall_clock_s = std::chrono::duration<double>(Clock::now() - t0).count();
  return trace;
}

TokenSequence assemble_transcript(const DecodeTrace& trace, const Vocabulary& vocab) {
  if (trace.lines.empty()) return trace.tokens;  // sequential trace is already flat
  TokenSequence seq;
  for (const auto& lr : trace.lines)
    seq.ids.insert(seq.ids.end(), lr.tokens.begin(), lr.tokens.end());
  return seq;
}

std::string DecodeTrace::report(const Vocabulary& vocab) const {
  std::ostringstream os;
  os << "decoder invocations: " << decoder_invocations;
  if (!lines.empty())
    os << " (pass1 " << pass1_invocations << ", pass2 " << pass2_invocations
       << "; duplication-counted " << paper_invocations << ")";
  os << "\nwall clock: " << wall_clock_s << " s\n";
  if (hit_line_limit) os << "hit line-count limit\n";
  if (hit_length_limit) os << "hit line-length limit\n";
  if (hit_flat_limit) os << "hit sequential iteration limit\n";
  if (!lines.empty()) {
    os << "pass-1 tokens:";
    for (TokenId t : pass1_tokens) os << " " << vocab.token_name(t);
    os << "\nlines:\n";
    for (size_t j = 0; j < lines.size(); ++j) {
      os << "  " << j + 1 << ": ";
      for (TokenId t : lines[j].tokens) os << vocab.token_name(t);
      switch (lines[j].end) {
        case LineEnd::kEol: os << "  [eol]"; break;
        case LineEnd::kUnit: os << "  [unit]"; break;
        case LineEnd::kCap: os << "  [cap]"; break;
        case LineEnd::kForced:
          os << "  [forced on " << vocab.token_name(lines[j].offending) << "]";
          break;
      }
      os << "\n";
    }
  }
  os << "transcript: " << display_string(tokens, vocab) << "\n";
  return os.str();
}

}  // namespace fdan
