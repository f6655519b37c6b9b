#include <doctest.h>

#include <cmath>

#include "fdan/decode.hpp"
#include "fdan/train.hpp"
#include "fdan/util.hpp"

using namespace fdan;

namespace {

ModelConfig tiny_cfg(uint64_t seed = 1, int d = 8) {
  ModelConfig cfg;
  cfg.d = d;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.enc_channels = {4, 4, 4, d, d};
  cfg.l_max = 64;
  cfg.n_max_line = 64;
  cfg.n_max_flat = 256;
  cfg.seed = seed;
  return cfg;
}

Vocabulary tiny_vocab() { return Vocabulary::from_alphabet("abcd", {"P", "Q"}); }

Image random_image(int h, int w, Rng& rng) {
  Image img;
  img.h = h;
  img.w = w;
  img.px.resize(static_cast<size_t>(h) * w);
  for (auto& p : img.px) p = rng.uniform() < 0.3 ? 255 : 0;
  return img;
}

DocumentStructure random_doc(Rng& rng, const Vocabulary& vocab, int max_entities = 2,
                             int max_lines = 3, int max_chars = 5) {
  DocumentStructure d;
  int entities = rng.uniform_int(1, max_entities);
  for (int e = 0; e < entities; ++e) {
    LayoutEntity ent;
    ent.cls = vocab.entity_classes()[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int>(vocab.entity_classes().size()) - 1))];
    int lines = rng.uniform_int(1, max_lines);
    for (int l = 0; l < lines; ++l) {
      std::string s;
      int chars = rng.uniform_int(1, max_chars);
      for (int c = 0; c < chars; ++c)
        s += vocab.characters()[static_cast<size_t>(rng.uniform_int(
            0, static_cast<int>(vocab.characters().size()) - 1))];
      ent.lines.push_back(s);
    }
    d.entities.push_back(std::move(ent));
  }
  return d;
}

// The decode schedule, recomputed from scratch at every iteration through
// the parallel (tape) path. This shares no cache machinery with the
// incremental decoder, so agreement validates the cache.
struct ScheduleReference {
  const ModelParams& params;
  const LineSegmentedTarget& seg;
  const FeatureGrid& feat;

  // model-coordinate cells in processing order with their tokens
  std::vector<GridCoord> cells;
  std::vector<TokenId> toks;

  static bool rule(Variant v, const GridCoord& q, const GridCoord& k) {
    if (k.line == 0 && k.pos == 0) return true;
    if (q.pos == 0) return k.pos == 0 && k.line <= q.line;
    if (v == Variant::kSingleLineCtx) return k.line == q.line && k.pos <= q.pos;
    if (v == Variant::kFirstPassCtx)
      return (k.line == q.line && k.pos <= q.pos) || k.pos == 0;
    return k.pos <= q.pos;
  }

  // Runs decoder_forward over everything processed so far and returns the
  // logits of the rows added by the latest block.
  std::vector<std::vector<double>> run_block(const std::vector<GridCoord>& block,
                                             const std::vector<TokenId>& block_toks) {
    int L = seg.line_count();
    for (size_t i = 0; i < block.size(); ++i) {
      cells.push_back(block[i]);
      toks.push_back(block_toks[i]);
    }
    Tape tape;
    tape.recording = false;
    std::vector<int> ids(toks.begin(), toks.end());
    std::vector<double> pe;
    for (const auto& c : cells) {
      auto v = query_pe(params, c.line, c.pos, L);
      pe.insert(pe.end(), v.begin(), v.end());
    }
    TensorPtr emb = ops::embed_rows(tape, params.embedding, ids);
    TensorPtr queries = ops::add_const_rows(tape, emb, pe);
    AttentionMask mask(static_cast<int>(cells.size()), static_cast<int>(cells.size()));
    for (size_t q = 0; q < cells.size(); ++q)
      for (size_t k = 0; k < cells.size(); ++k)
        mask.set(static_cast<int>(q), static_cast<int>(k),
                 rule(params.cfg.variant, cells[q], cells[k]));
    TensorPtr out = decoder_forward(tape, params, queries, feat, mask);
    TensorPtr logits = project_logits(tape, params, out);
    int na = params.vocab.alphabet_size();
    std::vector<std::vector<double>> rows;
    for (size_t r = cells.size() - block.size(); r < cells.size(); ++r)
      rows.emplace_back(logits->val.begin() + static_cast<long>(r) * na,
                        logits->val.begin() + static_cast<long>(r + 1) * na);
    return rows;
  }
};

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("oracle fasterdan decoding reproduces the serialized ground truth") {
  Vocabulary vocab = tiny_vocab();
  Rng rng(100);
  for (int trial = 0; trial < 8; ++trial) {
    ModelParams params = ModelParams::init(tiny_cfg(trial + 1), vocab);
    DocumentStructure doc = random_doc(rng, vocab);
    TokenSequence truth = serialize_document(doc, vocab);
    Image img = random_image(64, 96, rng);
    DecodeLimits lim{256, 64, 64};
    OraclePolicy oracle(truth, vocab, lim);
    DecodeTrace trace = decode_fasterdan(params, img, lim, &oracle);
    CHECK(assemble_transcript(trace, vocab) == truth);
    CHECK(trace.tokens == truth);
    CHECK(deserialize_tokens(trace.tokens, vocab) == doc);
  }
}

TEST_CASE("invocation laws hold exactly under the oracle") {
  Vocabulary vocab = tiny_vocab();
  Rng rng(200);
  ModelParams params = ModelParams::init(tiny_cfg(3), vocab);
  for (int trial = 0; trial < 6; ++trial) {
    DocumentStructure doc = random_doc(rng, vocab);
    TokenSequence truth = serialize_document(doc, vocab);
    LineSegmentedTarget seg = segment_lines(truth, vocab);
    Image img = random_image(64, 64, rng);
    DecodeLimits lim{256, 64, 64};
    OraclePolicy oracle(truth, vocab, lim);

    DecodeTrace fd = decode_fasterdan(params, img, lim, &oracle);
    CHECK(fd.decoder_invocations == seg.line_count() + seg.n_max - 1);
    CHECK(fd.pass1_invocations == seg.line_count());
    CHECK(fd.paper_invocations == seg.line_count() + seg.n_max);

    DecodeTrace dan = decode_dan(params, img, lim, &oracle);
    CHECK(dan.decoder_invocations == truth.size());  // N + 1
    CHECK(dan.tokens == truth);
  }
}

TEST_CASE("a lone <eot> document decodes in one invocation") {
  Vocabulary vocab = tiny_vocab();
  ModelParams params = ModelParams::init(tiny_cfg(), vocab);
  Rng rng(5);
  TokenSequence truth;
  truth.ids = {vocab.eot_id()};
  DecodeLimits lim{256, 64, 64};
  OraclePolicy oracle(truth, vocab, lim);
  DecodeTrace trace = decode_fasterdan(params, random_image(64, 64, rng), lim, &oracle);
  CHECK(trace.decoder_invocations == 1);
  CHECK(trace.pass2_invocations == 0);
  CHECK(trace.tokens == truth);
}

TEST_CASE("the <P>ab.</P> schedule spends 4 + 2 invocations") {
  Vocabulary vocab = Vocabulary::from_alphabet("ab", {"P"});
  ModelParams params = ModelParams::init(tiny_cfg(), vocab);
  Rng rng(6);
  TokenSequence truth;
  truth.ids = {vocab.open_id(0), 0, 1, vocab.eol_id(), vocab.close_id(0), vocab.eot_id()};
  // the bare form without root markups: 4 segmentation lines
  DecodeLimits lim{256, 64, 64};
  OraclePolicy oracle(truth, vocab, lim);
  DecodeTrace trace = decode_fasterdan(params, random_image(64, 64, rng), lim, &oracle);
  CHECK(trace.pass1_invocations == 4);
  CHECK(trace.pass2_invocations == 2);
  CHECK(trace.decoder_invocations == 6);
  CHECK(trace.tokens == truth);
}

TEST_CASE("zero logits never emit <eot> and both engines hit their caps") {
  Vocabulary vocab = tiny_vocab();
  ModelParams params = ModelParams::init(tiny_cfg(), vocab);
  std::fill(params.proj->val.begin(), params.proj->val.end(), 0.0);
  Rng rng(7);
  Image img = random_image(64, 64, rng);

  DecodeLimits lim{17, 5, 6};
  DecodeTrace dan = decode_dan(params, img, lim);
  CHECK(dan.decoder_invocations == 17);
  CHECK(dan.hit_flat_limit);
  CHECK(dan.tokens.size() == 17);

  DecodeTrace fd = decode_fasterdan(params, img, lim);
  CHECK(fd.hit_line_limit);
  CHECK(fd.hit_length_limit);
  CHECK(static_cast<int>(fd.lines.size()) == 5);
  for (const auto& lr : fd.lines) {
    CHECK(lr.end == LineEnd::kCap);
    CHECK(static_cast<int>(lr.tokens.size()) == 6);
  }
}

TEST_CASE("teacher-forced parallel logits equal step-by-step decode logits") {
  Vocabulary vocab = tiny_vocab();
  Rng rng(300);
  for (int trial = 0; trial < 5; ++trial) {
    ModelParams params = ModelParams::init(tiny_cfg(trial + 11), vocab);
    DocumentStructure doc = random_doc(rng, vocab);
    TokenSequence truth = serialize_document(doc, vocab);
    LineSegmentedTarget seg = segment_lines(truth, vocab);
    Image img = random_image(64, 64, rng);
    DecodeLimits lim{256, 64, 64};
    OraclePolicy oracle(truth, vocab, lim);

    // two-pass engine
    std::vector<std::vector<double>> captured;
    decode_fasterdan(params, img, lim, &oracle, 1, &captured);

    Tape tape;
    tape.recording = false;
    FeatureGrid feat = encode_image(tape, params, img);
    TeacherForced tf = fasterdan_teacher_logits(tape, params, seg, feat);
    GridLayout layout(seg);
    int na = vocab.alphabet_size();
    auto teacher_row = [&](int row) {
      return std::vector<double>(tf.logits->val.begin() + static_cast<long>(row) * na,
                                 tf.logits->val.begin() + static_cast<long>(row + 1) * na);
    };

    size_t cap = 0;
    int L = seg.line_count();
    for (int j = 0; j < L; ++j) {  // pass-1 emission of line j's initial
      int row = j == 0 ? 0 : 1 + layout.index(j - 1, 0);
      CHECK(max_abs_diff(captured.at(cap++), teacher_row(row)) < 1e-10);
    }
    for (int k = 1; k < seg.n_max; ++k)
      for (int j = 0; j < L; ++j)
        if (seg.lengths[j] - 1 >= k)
          CHECK(max_abs_diff(captured.at(cap++), teacher_row(1 + layout.index(j, k))) < 1e-10);
    CHECK(cap == captured.size());

    // sequential engine
    captured.clear();
    decode_dan(params, img, lim, &oracle, 1, &captured);
    TensorPtr dan_logits = dan_teacher_logits(tape, params, truth, feat);
    REQUIRE(static_cast<int>(captured.size()) == dan_logits->rows());
    for (int t = 0; t < dan_logits->rows(); ++t) {
      std::vector<double> row(dan_logits->val.begin() + static_cast<long>(t) * na,
                              dan_logits->val.begin() + static_cast<long>(t + 1) * na);
      CHECK(max_abs_diff(captured[static_cast<size_t>(t)], row) < 1e-10);
    }
  }
}

TEST_CASE("cached decoding equals full recomputation at every step") {
  Vocabulary vocab = tiny_vocab();
  Rng rng(400);
  for (Variant variant : {Variant::kBase, Variant::kSingleLineCtx, Variant::kFirstPassCtx,
                          Variant::kSumPe}) {
    ModelConfig cfg = tiny_cfg(21);
    cfg.variant = variant;
    ModelParams params = ModelParams::init(cfg, vocab);
    DocumentStructure doc = random_doc(rng, vocab, 2, 3, 4);
    TokenSequence truth = serialize_document(doc, vocab);
    LineSegmentedTarget seg = segment_lines(truth, vocab);
    Image img = random_image(64, 64, rng);
    DecodeLimits lim{256, 64, 64};
    OraclePolicy oracle(truth, vocab, lim);

    std::vector<std::vector<double>> captured;
    decode_fasterdan(params, img, lim, &oracle, 1, &captured);

    Tape tape;
    tape.recording = false;
    FeatureGrid feat = encode_image(tape, params, img);
    ScheduleReference ref{params, seg, feat, {}, {}};

    size_t cap = 0;
    int L = seg.line_count();
    // pass 1, one cell per block
    TokenId pending = vocab.sot_id();
    for (int j = 0; j < L; ++j) {
      auto rows = ref.run_block({{j, 0}}, {pending});
      CHECK(max_abs_diff(captured.at(cap++), rows[0]) < 1e-10);
      pending = seg.lines[j][0];
    }
    // second pass: the last initial joins the duplicate block
    int n_pred = seg.n_max;
    if (n_pred >= 2) {
      std::vector<GridCoord> block{{L, 0}};
      std::vector<TokenId> toks{seg.lines[L - 1][0]};
      for (int j = 0; j < L; ++j) {
        block.push_back({j + 1, 1});
        toks.push_back(seg.lines[j][0]);
      }
      auto rows = ref.run_block(block, toks);
      for (int j = 0; j < L; ++j)
        if (seg.lengths[j] >= 2)
          CHECK(max_abs_diff(captured.at(cap++), rows[static_cast<size_t>(j) + 1]) < 1e-10);
      for (int k = 2; k < n_pred; ++k) {
        block.clear();
        toks.clear();
        std::vector<int> row_of(static_cast<size_t>(L), -1);
        for (int j = 0; j < L; ++j)
          if (seg.lengths[j] >= k) {  // the cell (j, k) holds content k-1
            row_of[static_cast<size_t>(j)] = static_cast<int>(block.size());
            block.push_back({j + 1, k});
            toks.push_back(seg.lines[j][static_cast<size_t>(k - 1)]);
          }
        rows = ref.run_block(block, toks);
        for (int j = 0; j < L; ++j)
          if (seg.lengths[j] - 1 >= k)
            CHECK(max_abs_diff(captured.at(cap++),
                               rows[static_cast<size_t>(row_of[static_cast<size_t>(j)])]) <
                  1e-10);
      }
    }
    CHECK(cap == captured.size());
  }
}

TEST_CASE("multi-target blocks give the same result on one or two threads") {
  Vocabulary vocab = tiny_vocab();
  Rng rng(500);
  ModelParams params = ModelParams::init(tiny_cfg(31, 16), vocab);
  DocumentStructure doc = random_doc(rng, vocab, 2, 4, 6);
  TokenSequence truth = serialize_document(doc, vocab);
  Image img = random_image(64, 96, rng);
  DecodeLimits lim{256, 64, 64};
  OraclePolicy oracle(truth, vocab, lim);

  std::vector<std::vector<double>> one, two;
  DecodeTrace t1 = decode_fasterdan(params, img, lim, &oracle, 1, &one);
  DecodeTrace t2 = decode_fasterdan(params, img, lim, &oracle, 2, &two);
  CHECK(t1.tokens == t2.tokens);
  REQUIRE(one.size() == two.size());
  for (size_t i = 0; i < one.size(); ++i) CHECK(one[i] == two[i]);
}

TEST_CASE("two-pass decoding needs strictly fewer invocations on multi-line docs") {
  Vocabulary vocab = tiny_vocab();
  Rng rng(600);
  ModelParams params = ModelParams::init(tiny_cfg(41), vocab);
  int checked = 0;
  while (checked < 5) {
    DocumentStructure doc = random_doc(rng, vocab, 2, 4, 6);
    int multi = 0;
    for (const auto& e : doc.entities)
      for (const auto& l : e.lines)
        if (!l.empty()) ++multi;
    if (multi < 2) continue;
    TokenSequence truth = serialize_document(doc, vocab);
    Image img = random_image(64, 64, rng);
    DecodeLimits lim{256, 64, 64};
    OraclePolicy oracle(truth, vocab, lim);
    DecodeTrace fd = decode_fasterdan(params, img, lim, &oracle);
    DecodeTrace dan = decode_dan(params, img, lim, &oracle);
    CHECK(fd.decoder_invocations < dan.decoder_invocations);
    ++checked;
  }
}

TEST_CASE("assemble_transcript concatenates lines and never stores duplicates") {
  Vocabulary vocab = tiny_vocab();
  DecodeTrace trace;
  trace.lines.push_back({{vocab.open_id(0)}, LineEnd::kUnit, -1});
  trace.lines.push_back({{0, 1, vocab.eol_id()}, LineEnd::kEol, -1});
  trace.lines.push_back({{vocab.close_id(0)}, LineEnd::kUnit, -1});
  trace.lines.push_back({{vocab.eot_id()}, LineEnd::kUnit, -1});
  TokenSequence seq = assemble_transcript(trace, vocab);
  CHECK(seq.ids == std::vector<TokenId>{vocab.open_id(0), 0, 1, vocab.eol_id(),
                                        vocab.close_id(0), vocab.eot_id()});
}

TEST_CASE("decode trace report names pass invocations and line ends") {
  Vocabulary vocab = tiny_vocab();
  ModelParams params = ModelParams::init(tiny_cfg(), vocab);
  Rng rng(8);
  TokenSequence truth;
  truth.ids = {vocab.open_id(0), 0, vocab.eol_id(), vocab.close_id(0), vocab.eot_id()};
  DecodeLimits lim{256, 64, 64};
  OraclePolicy oracle(truth, vocab, lim);
  DecodeTrace trace = decode_fasterdan(params, random_image(64, 64, rng), lim, &oracle);
  std::string report = trace.report(vocab);
  CHECK(report.find("pass1") != std::string::npos);
  CHECK(report.find("[unit]") != std::string::npos);
  CHECK(report.find("transcript:") != std::string::npos);
}
