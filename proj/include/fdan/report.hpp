#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fdan/decode.hpp"
#include "fdan/metrics.hpp"
#include "fdan/synthgen.hpp"

namespace fdan {

struct DocEval {
  std::string image;
  double cer = 0, wer = 0, loer = 0;
};

struct EvalReport {
  double cer = 0, wer = 0;
  double first_pass_cer = -1;  // two-pass decode only
  double loer = 0;
  double map_cer = -1;  // layout corpora only
  double mean_invocations = 0;
  double mean_wall_s = 0;
  std::vector<DocEval> per_doc;

  std::string csv() const;
  std::string table() const;
};

struct EvalOptions {
  Mode mode = Mode::kFasterDan;
  DecodeLimits limits;
  bool oracle = false;
  int jobs = 1;
  int decode_threads = 0;  // 0 = auto
};

EvalReport run_eval(const ModelParams& params, const std::string& data_dir,
                    const EvalOptions& opt);

struct BenchEngine {
  double mean_invocations = 0;
  double mean_paper_invocations = 0;
  double mean_wall_s = 0;
};

struct BenchReport {
  // corpus shape, averaged over documents
  double width = 0, height = 0, chars = 0, lines = 0, chars_per_line = 0, layout_tokens = 0;
  BenchEngine dan, fasterdan;
  double speed_factor = 0;      // dan wall / fasterdan wall
  double invocation_ratio = 0;  // dan invocations / fasterdan invocations

  std::string csv() const;
  std::string table() const;
};

BenchReport run_bench(const ModelParams& dan_params, const ModelParams& fdan_params,
                      const std::string& data_dir, const EvalOptions& opt);

}  // namespace fdan
