#pragma once

#include <string>
#include <vector>

#include "fdan/net.hpp"
#include "fdan/segment.hpp"

namespace fdan {

struct DecodeLimits {
  int n_max_flat = 3000;  // sequential iteration cap
  int l_max = 256;        // first-pass line cap
  int n_max_line = 256;   // per-line token cap
};

enum class LineEnd { kEol, kUnit, kForced, kCap };

struct LineResult {
  std::vector<TokenId> tokens;  // decoded content, terminator included
  LineEnd end = LineEnd::kEol;
  TokenId offending = -1;  // the emission that forced termination, if any
};

struct DecodeTrace {
  TokenSequence tokens;  // assembled transcript
  int decoder_invocations = 0;
  int pass1_invocations = 0;
  int pass2_invocations = 0;
  // L + max_j(n_j): the counting that treats the duplication as an
  // iteration. decoder_invocations counts one fewer (L + n_pred - 1).
  int paper_invocations = 0;
  std::vector<LineResult> lines;      // two-pass engine only
  std::vector<TokenId> pass1_tokens;  // line-initial emissions in order
  bool hit_line_limit = false;
  bool hit_length_limit = false;
  bool hit_flat_limit = false;
  double wall_clock_s = 0.0;

  std::string report(const Vocabulary& vocab) const;
};

// Scripted emissions for schedule testing: forwards still run, argmax is
// replaced by ground-truth tokens.
class OraclePolicy {
 public:
  OraclePolicy(const TokenSequence& truth, const Vocabulary& vocab,
               const DecodeLimits& limits);
  TokenId flat(int step) const;
  TokenId line_initial(int model_line) const;        // lines are 1-based
  TokenId continuation(int model_line, int content_idx) const;
  const LineSegmentedTarget& segmentation() const { return seg_; }

 private:
  TokenSequence truth_;
  TokenId eol_;
  LineSegmentedTarget seg_;
};

// Greedy sequential decoding from <sot> under flat 1D positions.
// Captured logits (optional) are the consumed output rows in emission order.
DecodeTrace decode_dan(const ModelParams& params, const Image& img,
                       const DecodeLimits& limits, const OraclePolicy* oracle = nullptr,
                       int threads = 0,
                       std::vector<std::vector<double>>* logit_capture = nullptr);

// Two-pass decoding: autoregressive line-initial pass, then parallel
// multi-target completion of all unfinished lines.
DecodeTrace decode_fasterdan(const ModelParams& params, const Image& img,
                             const DecodeLimits& limits,
                             const OraclePolicy* oracle = nullptr, int threads = 0,
                             std::vector<std::vector<double>>* logit_capture = nullptr);

// Lines concatenated in first-pass emission order; duplicates are never
// stored, so this is a plain concatenation of the per-line tokens.
TokenSequence assemble_transcript(const DecodeTrace& trace, const Vocabulary& vocab);

}  // namespace fdan
