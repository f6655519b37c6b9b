#pragma once

#include <string>
#include <vector>

#include "fdan/checkpoint.hpp"
#include "fdan/net.hpp"
#include "fdan/synthgen.hpp"

namespace fdan {

// Training configuration, readable from a `key = value` file with '#'
// comments. Unknown keys are rejected.
struct TrainConfig {
  Mode mode = Mode::kFasterDan;
  Variant variant = Variant::kBase;
  double lr = 1e-4;
  int batch_size = 4;
  int epochs = 10;
  int steps_per_epoch = 50;
  double curriculum_warmup = 0.2;  // fraction of epochs to reach full bounds
  int min_lines = 2, max_lines = 6;
  int val_every = 5;
  // forward/backward workers per batch; sample-to-worker assignment and the
  // gradient reduction order are fixed, so a given thread count is exactly
  // reproducible
  int train_threads = 1;
  uint64_t seed = 1;
  std::string alphabet;  // empty: derive (sorted) from the corpus
  ModelConfig model;

  static TrainConfig from_file(const std::string& path);
  void validate() const;
};

// Target rows of the two-pass teacher-forced loss: line-initial tokens are
// predicted from the previous line's column-0 output (<sot> for the first),
// continuations from column i-1. Duplicates (i = 1) and pad never appear.
std::vector<std::pair<int, int>> fasterdan_loss_rows(const LineSegmentedTarget& seg,
                                                     const GridLayout& layout);

TensorPtr loss_fasterdan(Tape& tape, const TeacherForced& tf, const LineSegmentedTarget& seg);

// Next-token cross-entropy over the whole sequence from <sot>.
TensorPtr loss_dan(Tape& tape, const TensorPtr& logits, const TokenSequence& tokens);

struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t t = 0;
  std::vector<std::vector<double>> m, v;  // parameter registry order
};

// Standard Adam update from the accumulated gradients. Rejects non-finite
// gradients by throwing; train_loop screens batches instead.
void adam_step(const std::vector<std::pair<std::string, TensorPtr>>& params,
               AdamState& state, double lr);
bool grads_finite(const std::vector<std::pair<std::string, TensorPtr>>& params);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double val_cer = -1.0;             // -1: not evaluated this epoch
  double val_first_pass_cer = -1.0;
};

struct Corpus {
  Vocabulary vocab;
  std::vector<Image> images;
  std::vector<DocumentStructure> truths;
  std::vector<TokenSequence> tokens;
  std::vector<int> text_lines;

  // Reads manifest.txt under dir. The vocabulary is the explicit alphabet
  // when given, otherwise the sorted union of corpus characters; classes
  // come from the truth headers.
  static Corpus load(const std::string& dir, const std::string& alphabet);
};

struct TrainResult {
  std::vector<EpochLog> log;
  int nan_batches = 0;
  int epochs_run = 0;
};

// Teacher-forced training with curriculum filtering: at epoch fraction f
// only documents with at most round(lerp(min_lines, max_lines, ramp(f)))
// text lines are sampled. Writes the checkpoint (with optimizer and rng
// state for exact resume) and a CSV log row per epoch. stop_after pauses a
// run after that many total epochs; resuming later continues bit-exactly
// because the curriculum schedule is a function of cfg.epochs alone.
TrainResult train_loop(const TrainConfig& cfg, const std::string& data_dir,
                       const std::string& val_dir, const std::string& out_ckpt,
                       const std::string& log_csv, bool resume = false,
                       int stop_after = -1);

}  // namespace fdan
