#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>

#include "fdan/checkpoint.hpp"
#include "fdan/decode.hpp"
#include "fdan/report.hpp"
#include "fdan/synthgen.hpp"
#include "fdan/train.hpp"
#include "fdan/util.hpp"

namespace fs = std::filesystem;
using namespace fdan;

namespace {

constexpr uint64_t kGlyphSeed = 7777;  // shared across corpora by design

struct GenArgs {
  std::string out;
  int num_docs = 10;
  int min_lines = 2, max_lines = 6;
  std::string chars_per_line = "4:10";
  std::string classes = "P";
  std::string alphabet = "abcdefghijklmnopqrst";
  std::string char_dist = "zipf";
  int max_entities = 2;
  int indent = 0;
  double noise = 0.0;
  uint64_t seed = 1;
};

int cmd_gen(const GenArgs& a) {
  auto parts = split(a.chars_per_line, ':');
  if (parts.size() != 2)
    throw std::invalid_argument("--chars-per-line expects lo:hi");
  int lo = std::stoi(parts[0]), hi = std::stoi(parts[1]);
  if (lo < 1 || hi < lo) throw std::invalid_argument("--chars-per-line bounds invalid");
  if (a.min_lines < 1 || a.max_lines < a.min_lines)
    throw std::invalid_argument("--min-lines/--max-lines bounds invalid");
  if (a.num_docs < 0) throw std::invalid_argument("--num-docs must be >= 0");

  std::vector<std::string> classes;
  for (const auto& c : split(a.classes, ','))
    if (!trim(c).empty()) classes.push_back(trim(c));
  Vocabulary vocab = classes.empty() ? Vocabulary::from_alphabet(a.alphabet)
                                     : Vocabulary::from_alphabet(a.alphabet, classes);
  GlyphSet glyphs = GlyphSet::make(static_cast<int>(vocab.characters().size()), kGlyphSeed);

  CurriculumConfig cc;
  cc.min_lines = a.min_lines;
  cc.max_lines = a.max_lines;
  cc.min_chars = lo;
  cc.max_chars = hi;
  cc.n_classes = static_cast<int>(classes.size());
  cc.max_entities = a.max_entities;
  cc.char_dist = a.char_dist == "uniform" ? CharDist::kUniform : CharDist::kZipf;
  cc.max_indent_glyphs = a.indent;
  cc.noise = a.noise;

  fs::create_directories(a.out);
  Rng rng(a.seed);
  std::vector<ManifestEntry> manifest;
  for (int i = 0; i < a.num_docs; ++i) {
    DocSpec spec = curriculum_sampler(1.0, cc, rng);
    Sample s = render_document(spec, vocab, glyphs);
    char name[32];
    std::snprintf(name, sizeof(name), "doc_%05d", i);
    std::string img = std::string(name) + ".pgm";
    std::string truth = std::string(name) + ".txt";
    write_pgm((fs::path(a.out) / img).string(), s.image);
    write_truth_file((fs::path(a.out) / truth).string(), s.truth, vocab);
    manifest.push_back({img, truth});
  }
  write_manifest((fs::path(a.out) / "manifest.txt").string(), manifest);
  std::cout << "wrote " << a.num_docs << " documents to " << a.out << "\n";
  return 0;
}

Mode checkpoint_mode(const LoadedModel& lm, const std::string& override_mode) {
  if (!override_mode.empty()) return mode_from_string(override_mode);
  auto it = lm.meta.find("mode");
  return it == lm.meta.end() ? Mode::kFasterDan : mode_from_string(it->second);
}

DecodeLimits limits_for(const ModelParams& p, int l_max, int n_max_line, int n_max_flat) {
  DecodeLimits lim{p.cfg.n_max_flat, p.cfg.l_max, p.cfg.n_max_line};
  if (l_max > 0) lim.l_max = l_max;
  if (n_max_line > 0) lim.n_max_line = n_max_line;
  if (n_max_flat > 0) lim.n_max_flat = n_max_flat;
  return lim;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FasterDAN two-pass handwritten-document-recognition toolkit"};
  app.require_subcommand(1);

  // gen
  GenArgs g;
  auto* gen = app.add_subcommand("gen", "generate a synthetic document corpus");
  gen->add_option("--out", g.out, "output directory")->required();
  gen->add_option("--num-docs", g.num_docs, "number of documents");
  gen->add_option("--min-lines", g.min_lines, "minimum text lines per document");
  gen->add_option("--max-lines", g.max_lines, "maximum text lines per document");
  gen->add_option("--chars-per-line", g.chars_per_line, "lo:hi characters per line");
  gen->add_option("--classes", g.classes, "comma list of layout classes (empty: none)");
  gen->add_option("--alphabet", g.alphabet, "character set");
  gen->add_option("--char-dist", g.char_dist, "uniform|zipf");
  gen->add_option("--max-entities", g.max_entities, "max layout entities per document");
  gen->add_option("--indent", g.indent, "max per-line indent in glyph widths");
  gen->add_option("--noise", g.noise, "salt-and-pepper rate");
  gen->add_option("--seed", g.seed, "corpus seed");

  // train
  std::string tr_data, tr_val, tr_config, tr_mode, tr_variant, tr_out = "model.fdan";
  std::string tr_log;
  bool tr_resume = false;
  int tr_stop = -1;
  auto* train = app.add_subcommand("train", "teacher-forced training");
  train->add_option("--data", tr_data, "training corpus directory")->required();
  train->add_option("--config", tr_config, "key = value config file")->required();
  train->add_option("--val-data", tr_val, "held-out corpus for validation CER");
  train->add_option("--mode", tr_mode, "dan|fasterdan (overrides config)");
  train->add_option("--variant", tr_variant, "base|no_line_pe|single_line_ctx|first_pass_ctx|sum_pe");
  train->add_option("--out", tr_out, "checkpoint path");
  train->add_option("--log", tr_log, "metric log CSV path");
  train->add_flag("--resume", tr_resume, "continue from the checkpoint");
  train->add_option("--stop-epoch", tr_stop, "pause after this many total epochs");

  // decode
  std::string de_model, de_image, de_mode, de_trace, de_oracle;
  int de_threads = 0, de_lmax = 0, de_nmax = 0, de_flat = 0;
  auto* decode = app.add_subcommand("decode", "decode one image");
  decode->add_option("--model", de_model, "checkpoint")->required();
  decode->add_option("--image", de_image, "PGM image")->required();
  decode->add_option("--mode", de_mode, "dan|fasterdan (default: checkpoint)");
  decode->add_option("--dump-trace", de_trace, "write the decode trace here");
  decode->add_option("--oracle", de_oracle, "ground-truth file replacing argmax");
  decode->add_option("--threads", de_threads, "decoder threads (0 = auto)");
  decode->add_option("--l-max", de_lmax, "line-count limit");
  decode->add_option("--n-max-line", de_nmax, "line-length limit");
  decode->add_option("--n-max-flat", de_flat, "sequential iteration limit");

  // eval
  std::string ev_model, ev_data, ev_mode, ev_csv;
  bool ev_oracle = false;
  int ev_jobs = 1;
  auto* eval = app.add_subcommand("eval", "evaluate a model on a corpus");
  eval->add_option("--model", ev_model, "checkpoint")->required();
  eval->add_option("--data", ev_data, "corpus directory")->required();
  eval->add_option("--mode", ev_mode, "dan|fasterdan (default: checkpoint)");
  eval->add_option("--csv", ev_csv, "write the CSV report here");
  eval->add_flag("--oracle", ev_oracle, "replace argmax with ground truth");
  eval->add_option("--jobs", ev_jobs, "documents decoded concurrently");

  // bench
  std::string be_dan, be_fdan, be_data, be_csv;
  bool be_oracle = false;
  int be_threads = 0;
  auto* bench = app.add_subcommand("bench", "iteration/speedup comparison");
  bench->add_option("--model-dan", be_dan, "sequential baseline checkpoint")->required();
  bench->add_option("--model-fdan", be_fdan, "two-pass checkpoint")->required();
  bench->add_option("--data", be_data, "corpus directory")->required();
  bench->add_option("--csv", be_csv, "write the CSV report here");
  bench->add_flag("--oracle", be_oracle, "replace argmax with ground truth");
  bench->add_option("--threads", be_threads, "decoder threads (0 = auto)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(g);

    if (train->parsed()) {
      TrainConfig cfg = TrainConfig::from_file(tr_config);
      if (!tr_mode.empty()) cfg.mode = mode_from_string(tr_mode);
      if (!tr_variant.empty()) cfg.variant = variant_from_string(tr_variant);
      cfg.validate();
      TrainResult res = train_loop(cfg, tr_data, tr_val, tr_out, tr_log, tr_resume, tr_stop);
      std::cout << "trained " << res.epochs_run << " epochs";
      if (!res.log.empty()) {
        std::cout << ", final loss " << res.log.back().loss;
        if (res.log.back().val_cer >= 0)
          std::cout << ", val CER " << 100 * res.log.back().val_cer << "%";
      }
      if (res.nan_batches) std::cout << ", rejected " << res.nan_batches << " NaN batches";
      std::cout << "\ncheckpoint: " << tr_out << "\n";
      return 0;
    }

    if (decode->parsed()) {
      LoadedModel lm = load_model(de_model);
      Mode mode = checkpoint_mode(lm, de_mode);
      DecodeLimits lim = limits_for(lm.params, de_lmax, de_nmax, de_flat);
      Image img = read_pgm(de_image);
      std::optional<OraclePolicy> oracle;
      if (!de_oracle.empty()) {
        DocumentStructure truth = read_truth_file(de_oracle);
        oracle.emplace(serialize_document(truth, lm.params.vocab), lm.params.vocab, lim);
      }
      DecodeTrace trace = mode == Mode::kDan
                              ? decode_dan(lm.params, img, lim, oracle ? &*oracle : nullptr,
                                           de_threads)
                              : decode_fasterdan(lm.params, img, lim,
                                                 oracle ? &*oracle : nullptr, de_threads);
      std::cout << display_string(trace.tokens, lm.params.vocab) << "\n";
      if (!de_trace.empty()) write_text_file(de_trace, trace.report(lm.params.vocab));
      return 0;
    }

    if (eval->parsed()) {
      LoadedModel lm = load_model(ev_model);
      EvalOptions opt;
      opt.mode = checkpoint_mode(lm, ev_mode);
      opt.limits = limits_for(lm.params, 0, 0, 0);
      opt.oracle = ev_oracle;
      opt.jobs = ev_jobs;
      EvalReport rep = run_eval(lm.params, ev_data, opt);
      std::cout << rep.table();
      if (!ev_csv.empty()) write_text_file(ev_csv, rep.csv());
      return 0;
    }

    if (bench->parsed()) {
      LoadedModel dan = load_model(be_dan);
      LoadedModel fdan = load_model(be_fdan);
      EvalOptions opt;
      opt.limits = limits_for(fdan.params, 0, 0, 0);
      opt.oracle = be_oracle;
      opt.decode_threads = be_threads;
      BenchReport rep = run_bench(dan.params, fdan.params, be_data, opt);
      std::cout << rep.table();
      if (!be_csv.empty()) write_text_file(be_csv, rep.csv());
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
