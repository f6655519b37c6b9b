#include "fdan/net.hpp"

#include <cmath>
#include <stdexcept>

#include "fdan/util.hpp"

namespace fdan {

std::string to_string(Mode m) { return m == Mode::kDan ? "dan" : "fasterdan"; }

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kBase: return "base";
    case Variant::kNoLinePe: return "no_line_pe";
    case Variant::kSingleLineCtx: return "single_line_ctx";
    case Variant::kFirstPassCtx: return "first_pass_ctx";
    case Variant::kSumPe: return "sum_pe";
  }
  return "base";
}

Mode mode_from_string(const std::string& s) {
  if (s == "dan") return Mode::kDan;
  if (s == "fasterdan") return Mode::kFasterDan;
  throw std::invalid_argument("unknown mode '" + s + "' (expected dan|fasterdan)");
}

Variant variant_from_string(const std::string& s) {
  if (s == "base") return Variant::kBase;
  if (s == "no_line_pe") return Variant::kNoLinePe;
  if (s == "single_line_ctx") return Variant::kSingleLineCtx;
  if (s == "first_pass_ctx") return Variant::kFirstPassCtx;
  if (s == "sum_pe") return Variant::kSumPe;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

void ModelConfig::validate() const {
  if (d <= 0 || d % 2 != 0 || d % heads != 0 || d % 4 != 0)
    throw std::invalid_argument("model: d must be even, divisible by 4 and by heads");
  if (layers < 1 || heads < 1 || ffn_mult < 1)
    throw std::invalid_argument("model: layers, heads and ffn_mult must be positive");
  if (l_max < 2 || n_max_line < 2 || n_max_flat < 2)
    throw std::invalid_argument("model: caps must be at least 2");
  if (!enc_channels.empty() && enc_channels.size() != 5)
    throw std::invalid_argument("model: enc_channels must list 5 widths");
}

std::vector<int> ModelConfig::encoder_channels() const {
  if (!enc_channels.empty()) return enc_channels;
  auto clamp4 = [](int v) { return v < 4 ? 4 : v; };
  return {clamp4(d / 8), clamp4(d / 4), clamp4(d / 2), clamp4(d), d};
}

namespace {

constexpr int kStrideH[5] = {2, 2, 2, 2, 2};
constexpr int kStrideW[5] = {2, 2, 2, 1, 1};

TensorPtr param(std::vector<int> shape) { return make_tensor(std::move(shape), true); }

void fill_uniform(const TensorPtr& t, Rng& rng, double bound) {
  for (double& v : t->val) v = rng.uniform(-bound, bound);
}

void fill_ones(const TensorPtr& t) { std::fill(t->val.begin(), t->val.end(), 1.0); }

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, const Vocabulary& vocab) {
  cfg.validate();
  ModelParams p;
  p.cfg = cfg;
  p.vocab = vocab;
  int d = cfg.d;

  p.embedding = param({vocab.embedding_rows(), d});
  auto chans = cfg.encoder_channels();
  int ci = 1;
  for (int l = 0; l < 5; ++l) {
    ConvParams c;
    c.w = param({chans[l], ci, 3, 3});
    c.b = param({chans[l]});
    c.stride_h = kStrideH[l];
    c.stride_w = kStrideW[l];
    p.encoder.push_back(c);
    ci = chans[l];
  }
  if (ci != d)
    throw std::invalid_argument("model: last encoder channel width must equal d");

  for (int l = 0; l < cfg.layers; ++l) {
    DecoderLayerParams lp;
    lp.ln1_g = param({d}); lp.ln1_b = param({d});
    lp.ln2_g = param({d}); lp.ln2_b = param({d});
    lp.ln3_g = param({d}); lp.ln3_b = param({d});
    lp.self_wq = param({d, d}); lp.self_bq = param({d});
    lp.self_wk = param({d, d}); lp.self_bk = param({d});
    lp.self_wv = param({d, d}); lp.self_bv = param({d});
    lp.self_wo = param({d, d}); lp.self_bo = param({d});
    lp.cross_wq = param({d, d}); lp.cross_bq = param({d});
    lp.cross_wk = param({d, d}); lp.cross_bk = param({d});
    lp.cross_wv = param({d, d}); lp.cross_bv = param({d});
    lp.cross_wo = param({d, d}); lp.cross_bo = param({d});
    lp.ffn_w1 = param({d, cfg.ffn_mult * d}); lp.ffn_b1 = param({cfg.ffn_mult * d});
    lp.ffn_w2 = param({cfg.ffn_mult * d, d}); lp.ffn_b2 = param({d});
    p.layers.push_back(lp);
  }
  p.final_g = param({d});
  p.final_b = param({d});
  p.proj = param({d, vocab.alphabet_size()});

  // Seeded init: uniform(-1/sqrt(d), 1/sqrt(d)) for embeddings/projections,
  // fan-in bound for conv filters, identity layernorm, zero biases.
  Rng rng(cfg.seed);
  double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto& [name, t] : p.named_params()) {
    if (name.find(".b") != std::string::npos && name.find("ffn") == std::string::npos) {
      // conv/attention biases stay zero
      continue;
    }
    if (name.find("ln") != std::string::npos || name.find("final") != std::string::npos) {
      if (name.ends_with(".g")) fill_ones(t);
      continue;
    }
    if (name.find("enc.") == 0) {
      if (name.ends_with(".w")) {
        int fan_in = t->shape[1] * 9;
        fill_uniform(t, rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
      }
      continue;
    }
    if (name.ends_with(".b1") || name.ends_with(".b2") || name.ends_with(".bq") ||
        name.ends_with(".bk") || name.ends_with(".bv") || name.ends_with(".bo"))
      continue;
    fill_uniform(t, rng, bound);
  }

  DocPe pe = cfg.variant == Variant::kSumPe ? DocPe::kSum : DocPe::kConcat;
  p.pos_doc = std::make_shared<PositionalTable>(
      PositionalTable::doc(cfg.l_max + 2, cfg.n_max_line + 2, d, pe));
  p.pos_flat = std::make_shared<PositionalTable>(PositionalTable::one_d(cfg.n_max_flat, d));
  return p;
}

std::vector<std::pair<std::string, TensorPtr>> ModelParams::named_params() {
  std::vector<std::pair<std::string, TensorPtr>> out;
  out.emplace_back("embed.E", embedding);
  for (size_t i = 0; i < encoder.size(); ++i) {
    out.emplace_back("enc." + std::to_string(i) + ".w", encoder[i].w);
    out.emplace_back("enc." + std::to_string(i) + ".b", encoder[i].b);
  }
  for (size_t l = 0; l < layers.size(); ++l) {
    std::string base = "dec." + std::to_string(l) + ".";
    auto& lp = layers[l];
    out.emplace_back(base + "ln1.g", lp.ln1_g);
    out.emplace_back(base + "ln1.b", lp.ln1_b);
    out.emplace_back(base + "self.wq", lp.self_wq);
    out.emplace_back(base + "self.bq", lp.self_bq);
    out.emplace_back(base + "self.wk", lp.self_wk);
    out.emplace_back(base + "self.bk", lp.self_bk);
    out.emplace_back(base + "self.wv", lp.self_wv);
    out.emplace_back(base + "self.bv", lp.self_bv);
    out.emplace_back(base + "self.wo", lp.self_wo);
    out.emplace_back(base + "self.bo", lp.self_bo);
    out.emplace_back(base + "ln2.g", lp.ln2_g);
    out.emplace_back(base + "ln2.b", lp.ln2_b);
    out.emplace_back(base + "cross.wq", lp.cross_wq);
    out.emplace_back(base + "cross.bq", lp.cross_bq);
    out.emplace_back(base + "cross.wk", lp.cross_wk);
    out.emplace_back(base + "cross.bk", lp.cross_bk);
    out.emplace_back(base + "cross.wv", lp.cross_wv);
    out.emplace_back(base + "cross.bv", lp.cross_bv);
    out.emplace_back(base + "cross.wo", lp.cross_wo);
    out.emplace_back(base + "cross.bo", lp.cross_bo);
    out.emplace_back(base + "ln3.g", lp.ln3_g);
    out.emplace_back(base + "ln3.b", lp.ln3_b);
    out.emplace_back(base + "ffn.w1", lp.ffn_w1);
    out.emplace_back(base + "ffn.b1", lp.ffn_b1);
    out.emplace_back(base + "ffn.w2", lp.ffn_w2);
    out.emplace_back(base + "ffn.b2", lp.ffn_b2);
  }
  out.emplace_back("final.g", final_g);
  out.emplace_back("final.b", final_b);
  out.emplace_back("proj.wp", proj);
  return out;
}

std::vector<std::pair<std::string, TensorPtr>> ModelParams::named_params() const {
  return const_cast<ModelParams*>(this)->named_params();
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : named_params()) t->zero_grad();
}

namespace {

// [c x h x w] -> [(h*w) x c] so conv output rows line up with flat features.
TensorPtr channels_to_rows(Tape& tape, const TensorPtr& x) {
  int c = x->shape[0], h = x->shape[1], w = x->shape[2];
  auto out = make_tensor({h * w, c});
  if (x->requires_grad) out->ensure_grad();
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        out->val[(static_cast<size_t>(y) * w + xx) * c + ch] =
            x->val[(static_cast<size_t>(ch) * h + y) * w + xx];
  tape.push([x, out, c, h, w] {
    if (!x->requires_grad) return;
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          x->grad[(static_cast<size_t>(ch) * h + y) * w + xx] +=
              out->grad[(static_cast<size_t>(y) * w + xx) * c + ch];
  });
  return out;
}

}  // namespace

FeatureGrid encode_image(Tape& tape, const ModelParams& params, const Image& img) {
  if (img.h % kEncoderStrideH != 0 || img.w % kEncoderStrideW != 0)
    throw std::invalid_argument(
        "encode_image: image " + std::to_string(img.w) + "x" + std::to_string(img.h) +
        " not a multiple of the encoder stride (" + std::to_string(kEncoderStrideW) + "," +
        std::to_string(kEncoderStrideH) + ")");
  std::vector<double> px(img.px.size());
  for (size_t i = 0; i < img.px.size(); ++i) px[i] = img.px[i] / 255.0;
  TensorPtr x = make_tensor({1, img.h, img.w}, std::move(px));

  for (const auto& conv : params.encoder) {
    x = ops::conv2d(tape, x, conv.w, conv.b, conv.stride_h, conv.stride_w);
    x = ops::gelu(tape, x);
  }

  FeatureGrid grid;
  grid.hf = x->shape[1];
  grid.wf = x->shape[2];
  grid.f2d = channels_to_rows(tape, x);
  std::vector<double> pe = pe_2d(grid.hf, grid.wf, params.cfg.d);
  grid.f1d = ops::add_const_rows(tape, grid.f2d, pe);
  return grid;
}

TensorPtr decoder_forward(Tape& tape, const ModelParams& params, const TensorPtr& queries,
                          const FeatureGrid& feat, const AttentionMask& self_mask,
                          std::vector<std::vector<double>>* attn_probe) {
  if (self_mask.query_count() != queries->rows() || self_mask.key_count() != queries->rows())
    throw std::invalid_argument("decoder_forward: mask does not match query count");
  int heads = params.cfg.heads;
  TensorPtr x = queries;
  for (const auto& lp : params.layers) {
    TensorPtr h = ops::layernorm(tape, x, lp.ln1_g, lp.ln1_b);
    TensorPtr q = ops::linear(tape, h, lp.self_wq, lp.self_bq);
    TensorPtr k = ops::linear(tape, h, lp.self_wk, lp.self_bk);
    TensorPtr v = ops::linear(tape, h, lp.self_wv, lp.self_bv);
    TensorPtr att = ops::attention(tape, q, k, v, heads, &self_mask, attn_probe);
    x = ops::add(tape, x, ops::linear(tape, att, lp.self_wo, lp.self_bo));

    h = ops::layernorm(tape, x, lp.ln2_g, lp.ln2_b);
    q = ops::linear(tape, h, lp.cross_wq, lp.cross_bq);
    k = ops::linear(tape, feat.f1d, lp.cross_wk, lp.cross_bk);
    v = ops::linear(tape, feat.f1d, lp.cross_wv, lp.cross_bv);
    att = ops::attention(tape, q, k, v, heads, nullptr, attn_probe);
    x = ops::add(tape, x, ops::linear(tape, att, lp.cross_wo, lp.cross_bo));

    h = ops::layernorm(tape, x, lp.ln3_g, lp.ln3_b);
    TensorPtr f = ops::linear(tape, h, lp.ffn_w1, lp.ffn_b1);
    f = ops::gelu(tape, f);
    f = ops::linear(tape, f, lp.ffn_w2, lp.ffn_b2);
    x = ops::add(tape, x, f);
  }
  return ops::layernorm(tape, x, params.final_g, params.final_b);
}

TensorPtr project_logits(Tape& tape, const ModelParams& params, const TensorPtr& outputs) {
  return ops::matmul(tape, outputs, params.proj);
}

int flat_schedule_index(int line, int col, int total_lines) {
  if (col == 0) return line;
  return total_lines + 1 + (col - 1) * total_lines + (line - 1);
}

std::vector<double> query_pe(const ModelParams& params, int line, int col, int total_lines) {
  if (params.cfg.variant == Variant::kNoLinePe)
    return pe_1d(flat_schedule_index(line, col, total_lines), params.cfg.d);
  return params.pos_doc->doc_vec(line, col);
}

std::vector<double> query_pe_flat(const ModelParams& params, int flat_index) {
  const double* row = params.pos_flat->row(flat_index);
  return std::vector<double>(row, row + params.cfg.d);
}

AttentionMask model_mask(const LineSegmentedTarget& seg, Variant variant) {
  AttentionMask inner =
      variant == Variant::kSingleLineCtx
          ? ablation_mask(seg, MaskVariant::kSingleLine)
          : variant == Variant::kFirstPassCtx
                ? ablation_mask(seg, MaskVariant::kFirstPassCtx)
                : joint_training_mask(seg);
  int n = inner.query_count();
  AttentionMask m(n + 1, n + 1);
  m.query_coords.push_back({-1, 0});  // <sot>
  m.key_coords.push_back({-1, 0});
  for (const auto& c : inner.query_coords) m.query_coords.push_back(c);
  for (const auto& c : inner.key_coords) m.key_coords.push_back(c);
  m.set(0, 0, true);
  for (int q = 0; q < n; ++q) {
    m.set(q + 1, 0, true);  // <sot> is context for every query
    for (int k = 0; k < n; ++k) m.set(q + 1, k + 1, inner.visible(q, k));
  }
  return m;
}

namespace {

// Embedded + positioned input rows for [<sot>] + grid cells.
TensorPtr build_grid_queries(Tape& tape, const ModelParams& params,
                             const LineSegmentedTarget& seg, const GridLayout& layout) {
  int L = seg.line_count();
  std::vector<int> ids;
  std::vector<double> pe;
  int d = params.cfg.d;
  ids.reserve(layout.cells + 1);
  pe.reserve(static_cast<size_t>(layout.cells + 1) * d);

  auto push_pe = [&](int line, int col) {
    std::vector<double> v = query_pe(params, line, col, L);
    pe.insert(pe.end(), v.begin(), v.end());
  };
  ids.push_back(params.vocab.sot_id());
  push_pe(0, 0);
  for (int c = 0; c < layout.cells; ++c) {
    int j = layout.cell_line[c], i = layout.cell_col[c];
    ids.push_back(seg.grid[j][i]);
    push_pe(j + 1, i);  // model line index: <sot> is line 0
  }
  TensorPtr emb = ops::embed_rows(tape, params.embedding, ids);
  return ops::add_const_rows(tape, emb, pe);
}

}  // namespace

TeacherForced fasterdan_teacher_logits(Tape& tape, const ModelParams& params,
                                       const LineSegmentedTarget& seg,
                                       const FeatureGrid& feat,
                                       std::vector<std::vector<double>>* attn_probe) {
  GridLayout layout(seg);
  TensorPtr queries = build_grid_queries(tape, params, seg, layout);
  AttentionMask mask = model_mask(seg, params.cfg.variant);
  TensorPtr out = decoder_forward(tape, params, queries, feat, mask, attn_probe);
  return TeacherForced{project_logits(tape, params, out), std::move(mask)};
}

TensorPtr dan_teacher_logits(Tape& tape, const ModelParams& params,
                             const TokenSequence& tokens, const FeatureGrid& feat) {
  int n = tokens.size();  // rows: <sot> + all but the final token
  std::vector<int> ids;
  std::vector<double> pe;
  ids.reserve(n);
  ids.push_back(params.vocab.sot_id());
  for (int i = 0; i + 1 < n; ++i) ids.push_back(tokens.ids[i]);
  for (size_t i = 0; i < ids.size(); ++i) {
    const double* row = params.pos_flat->row(static_cast<int>(i));
    pe.insert(pe.end(), row, row + params.cfg.d);
  }
  TensorPtr emb = ops::embed_rows(tape, params.embedding, ids);
  TensorPtr queries = ops::add_const_rows(tape, emb, pe);

  AttentionMask causal(static_cast<int>(ids.size()), static_cast<int>(ids.size()));
  for (int q = 0; q < causal.query_count(); ++q)
    for (int k = 0; k <= q; ++k) causal.set(q, k, true);
  TensorPtr out = decoder_forward(tape, params, queries, feat, causal);
  return project_logits(tape, params, out);
}

}  // namespace fdan
