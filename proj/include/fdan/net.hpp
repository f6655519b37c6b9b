#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fdan/image.hpp"
#include "fdan/masks.hpp"
#include "fdan/posenc.hpp"
#include "fdan/segment.hpp"
#include "fdan/tensor.hpp"
#include "fdan/vocab.hpp"

namespace fdan {

enum class Mode { kDan, kFasterDan };

// Wiring variants of the two-pass model. kBase is the full method; the
// others reproduce the context/encoding ablations.
enum class Variant { kBase, kNoLinePe, kSingleLineCtx, kFirstPassCtx, kSumPe };

std::string to_string(Mode m);
std::string to_string(Variant v);
Mode mode_from_string(const std::string& s);
Variant variant_from_string(const std::string& s);

// Encoder stride plan is fixed at total (32, 8): five 3x3 convolutions with
// strides (2,2),(2,2),(2,2),(2,1),(2,1). Channel widths are configurable.
inline constexpr int kEncoderStrideH = 32;
inline constexpr int kEncoderStrideW = 8;

struct ModelConfig {
  int d = 64;
  int layers = 2;
  int heads = 4;
  int ffn_mult = 4;
  std::vector<int> enc_channels;  // empty: derived from d
  int l_max = 256;
  int n_max_line = 256;
  int n_max_flat = 3000;
  Variant variant = Variant::kBase;
  uint64_t seed = 1;

  void validate() const;
  std::vector<int> encoder_channels() const;
};

struct DecoderLayerParams {
  TensorPtr ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
  TensorPtr self_wq, self_bq, self_wk, self_bk, self_wv, self_bv, self_wo, self_bo;
  TensorPtr cross_wq, cross_bq, cross_wk, cross_bk, cross_wv, cross_bv, cross_wo, cross_bo;
  TensorPtr ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct ConvParams {
  TensorPtr w, b;
  int stride_h, stride_w;
};

// All learnable arrays plus the fixed positional tables derived from the
// config. Read-only during decoding and shareable across threads.
struct ModelParams {
  ModelConfig cfg;
  Vocabulary vocab;

  TensorPtr embedding;  // [(|A|+1) x d], row sot_id() holds <sot>
  std::vector<ConvParams> encoder;
  std::vector<DecoderLayerParams> layers;
  TensorPtr final_g, final_b;
  TensorPtr proj;  // [d x |A|], no bias: s = W_p . o

  std::shared_ptr<const PositionalTable> pos_doc;   // concat or sum per variant
  std::shared_ptr<const PositionalTable> pos_flat;  // full 1d, n_max_flat rows
  std::shared_ptr<const PositionalTable> pos_2d_cache;  // rebuilt per feature size

  static ModelParams init(const ModelConfig& cfg, const Vocabulary& vocab);

  // Fixed registry order; checkpoint layout and Adam state follow it.
  std::vector<std::pair<std::string, TensorPtr>> named_params();
  std::vector<std::pair<std::string, TensorPtr>> named_params() const;
  void zero_grad();
};

struct FeatureGrid {
  int hf = 0, wf = 0;
  TensorPtr f2d;  // [(hf*wf) x d], row r*wf+c holds feature (r, c)
  TensorPtr f1d;  // f2d + 2D positional encoding, same layout
};

// Runs the convolutional encoder. Image sides must be multiples of the
// total stride; callers pad beforehand.
FeatureGrid encode_image(Tape& tape, const ModelParams& params, const Image& img);

// One pass of the full decoder stack over a block of embedded+positioned
// queries. Pre-norm residual layers: masked self-attention, cross-attention
// over f1d, position-wise feed-forward; final layernorm on the way out.
TensorPtr decoder_forward(Tape& tape, const ModelParams& params, const TensorPtr& queries,
                          const FeatureGrid& feat, const AttentionMask& self_mask,
                          std::vector<std::vector<double>>* attn_probe = nullptr);

TensorPtr project_logits(Tape& tape, const ModelParams& params, const TensorPtr& outputs);

// --- model coordinates -------------------------------------------------
// The decoder works on (line, column) pairs where line 0 column 0 is the
// <sot> cell and segmentation row j maps to line j+1. Column indices follow
// the duplicated grid (0 initial, 1 duplicate, 2.. shifted).

// Positional vector for a query under the model's wiring variant.
// total_lines = number of content lines L (needed by the flat ablation).
std::vector<double> query_pe(const ModelParams& params, int line, int col, int total_lines);
// Flat 1D position for sequential decoding.
std::vector<double> query_pe_flat(const ModelParams& params, int flat_index);
// Emission-schedule index used when line encoding is ablated away.
int flat_schedule_index(int line, int col, int total_lines);

// Visibility mask over [<sot>] + grid cells: sub-block is the joint (or
// ablation) mask; the <sot> column is visible to every query and the <sot>
// row attends to itself.
AttentionMask model_mask(const LineSegmentedTarget& seg, Variant variant);

struct TeacherForced {
  TensorPtr logits;     // [(1 + cells) x |A|]; row 0 is the <sot> cell
  AttentionMask mask;   // the mask the block ran under
  // Flat row of grid cell (j, i) inside `logits` (offset by the sot row).
  int row(const GridLayout& layout, int j, int i) const { return 1 + layout.index(j, i); }
};

// Full teacher-forced parallel pass for the two-pass model.
TeacherForced fasterdan_teacher_logits(Tape& tape, const ModelParams& params,
                                       const LineSegmentedTarget& seg,
                                       const FeatureGrid& feat,
                                       std::vector<std::vector<double>>* attn_probe = nullptr);

// Teacher-forced causal pass for the sequential baseline. Row t of the
// result predicts tokens.ids[t].
TensorPtr dan_teacher_logits(Tape& tape, const ModelParams& params,
                             const TokenSequence& tokens, const FeatureGrid& feat);

}  // namespace fdan
