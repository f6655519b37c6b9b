#include "fdan/report.hpp"

#include <filesystem>
#include <iomanip>
#include <sstream>

#include "fdan/util.hpp"

namespace fs = std::filesystem;

namespace fdan {

namespace {

struct DocJob {
  Image image;
  DocumentStructure truth;
  TokenSequence truth_tokens;
};

std::vector<DocJob> load_jobs(const std::string& dir, const Vocabulary& vocab) {
  auto entries = read_manifest((fs::path(dir) / "manifest.txt").string());
  std::vector<DocJob> jobs;
  for (const auto& e : entries) {
    DocJob j;
    j.image = read_pgm((fs::path(dir) / e.image).string());
    j.truth = read_truth_file((fs::path(dir) / e.truth).string());
    j.truth_tokens = serialize_document(j.truth, vocab);
    jobs.push_back(std::move(j));
  }
  return jobs;
}

std::string fmt(double v, int prec = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

}  // namespace

EvalReport run_eval(const ModelParams& params, const std::string& data_dir,
                    const EvalOptions& opt) {
  auto entries = read_manifest((fs::path(data_dir) / "manifest.txt").string());
  std::vector<DocJob> jobs = load_jobs(data_dir, params.vocab);

  std::vector<DecodeTrace> traces(jobs.size());
  int decode_threads = opt.jobs > 1 ? 1 : opt.decode_threads;
  ThreadPool pool(opt.jobs > 0 ? opt.jobs : 1);
  pool.parallel_for(static_cast<int>(jobs.size()), [&](int i) {
    std::optional<OraclePolicy> oracle;
    if (opt.oracle) oracle.emplace(jobs[i].truth_tokens, params.vocab, opt.limits);
    traces[i] = opt.mode == Mode::kDan
                    ? decode_dan(params, jobs[i].image, opt.limits,
                                 oracle ? &*oracle : nullptr, decode_threads)
                    : decode_fasterdan(params, jobs[i].image, opt.limits,
                                       oracle ? &*oracle : nullptr, decode_threads);
  });

  EvalReport rep;
  long dist_c = 0, len_c = 0, dist_w = 0, len_w = 0;
  long ged_sum = 0, ged_norm = 0;
  std::vector<DocumentStructure> preds;
  std::vector<std::vector<TokenId>> pass1;
  std::vector<TokenSequence> truth_tokens;
  for (size_t i = 0; i < jobs.size(); ++i) {
    DocumentStructure pred = deserialize_tokens(traces[i].tokens, params.vocab);
    std::string rc = jobs[i].truth.text(), hc = pred.text();
    std::vector<std::string> r = codepoints(rc), h = codepoints(hc);
    long d = edit_distance_units(r, h);
    dist_c += d;
    len_c += static_cast<long>(r.size());
    DocEval de;
    de.image = entries[i].image;
    de.cer = r.empty() ? 0.0 : static_cast<double>(d) / r.size();
    {
      std::vector<std::string> rw = split(rc, '\n'), hw = split(hc, '\n');
      // words: split further on spaces
      std::vector<std::string> rwords, hwords;
      for (const auto& l : rw)
        for (const auto& w : split(l, ' '))
          if (!w.empty()) rwords.push_back(w);
      for (const auto& l : hw)
        for (const auto& w : split(l, ' '))
          if (!w.empty()) hwords.push_back(w);
      long dw = edit_distance_units(rwords, hwords);
      dist_w += dw;
      len_w += static_cast<long>(rwords.size());
      de.wer = rwords.empty() ? 0.0 : static_cast<double>(dw) / rwords.size();
    }
    LayoutGraph gt = LayoutGraph::from_document(jobs[i].truth);
    int g = layout_ged(gt, LayoutGraph::from_document(pred));
    ged_sum += g;
    ged_norm += gt.nodes() + gt.edges();
    de.loer = static_cast<double>(g) / (gt.nodes() + gt.edges());
    rep.per_doc.push_back(de);
    rep.mean_invocations += traces[i].decoder_invocations;
    rep.mean_wall_s += traces[i].wall_clock_s;
    preds.push_back(std::move(pred));
    if (opt.mode == Mode::kFasterDan) {
      pass1.push_back(traces[i].pass1_tokens);
      truth_tokens.push_back(jobs[i].truth_tokens);
    }
  }
  size_t n = jobs.size();
  if (n) {
    rep.mean_invocations /= static_cast<double>(n);
    rep.mean_wall_s /= static_cast<double>(n);
  }
  rep.cer = len_c ? static_cast<double>(dist_c) / len_c : 0.0;
  rep.wer = len_w ? static_cast<double>(dist_w) / len_w : 0.0;
  rep.loer = ged_norm ? static_cast<double>(ged_sum) / ged_norm : 0.0;
  if (opt.mode == Mode::kFasterDan)
    rep.first_pass_cer = first_pass_cer(pass1, truth_tokens, params.vocab,
                                        opt.limits.l_max, opt.limits.n_max_line);
  if (params.vocab.layout_enabled()) {
    std::vector<DocumentStructure> truths;
    for (auto& j : jobs) truths.push_back(j.truth);
    rep.map_cer = map_cer(preds, truths);
  }
  return rep;
}

std::string EvalReport::csv() const {
  std::ostringstream os;
  os << "metric,value\n";
  os << "cer," << cer << "\n";
  os << "wer," << wer << "\n";
  if (first_pass_cer >= 0) os << "first_pass_cer," << first_pass_cer << "\n";
  os << "loer," << loer << "\n";
  if (map_cer >= 0) os << "map_cer," << map_cer << "\n";
  os << "mean_invocations," << mean_invocations << "\n";
  os << "mean_wall_s," << mean_wall_s << "\n";
  os << "image,cer,wer,loer\n";
  for (const auto& d : per_doc)
    os << d.image << "," << d.cer << "," << d.wer << "," << d.loer << "\n";
  return os.str();
}

std::string EvalReport::table() const {
  std::ostringstream os;
  os << "CER%    WER%    ";
  if (first_pass_cer >= 0) os << "1st-CER%  ";
  os << "LOER%   ";
  if (map_cer >= 0) os << "mAP_CER  ";
  os << "\n";
  os << fmt(100 * cer) << "   " << fmt(100 * wer) << "   ";
  if (first_pass_cer >= 0) os << fmt(100 * first_pass_cer) << "     ";
  os << fmt(100 * loer) << "   ";
  if (map_cer >= 0) os << fmt(map_cer) << "    ";
  os << "\n";
  return os.str();
}

BenchReport run_bench(const ModelParams& dan_params, const ModelParams& fdan_params,
                      const std::string& data_dir, const EvalOptions& opt) {
  std::vector<DocJob> jobs = load_jobs(data_dir, fdan_params.vocab);
  BenchReport rep;
  for (const auto& j : jobs) {
    rep.width += j.image.w;
    rep.height += j.image.h;
    int chars = 0, lines = 0;
    for (const auto& l : j.truth.all_lines()) {
      chars += static_cast<int>(codepoints(l).size());
      ++lines;
    }
    rep.chars += chars;
    rep.lines += lines;
    rep.layout_tokens += 2.0 * (j.truth.entity_count_with_class() +
                                (fdan_params.vocab.layout_enabled() ? 1 : 0));
  }
  size_t n = jobs.size();
  if (n == 0) throw std::runtime_error("bench: empty manifest");
  rep.width /= static_cast<double>(n);
  rep.height /= static_cast<double>(n);
  rep.chars /= static_cast<double>(n);
  rep.lines /= static_cast<double>(n);
  rep.layout_tokens /= static_cast<double>(n);
  rep.chars_per_line = rep.lines > 0 ? rep.chars / rep.lines : 0.0;

  auto engine_run = [&](const ModelParams& params, bool fdan) {
    BenchEngine eng;
    for (const auto& j : jobs) {
      TokenSequence tokens = serialize_document(j.truth, params.vocab);
      std::optional<OraclePolicy> oracle;
      if (opt.oracle) oracle.emplace(tokens, params.vocab, opt.limits);
      DecodeTrace t = fdan ? decode_fasterdan(params, j.image, opt.limits,
                                              oracle ? &*oracle : nullptr, opt.decode_threads)
                           : decode_dan(params, j.image, opt.limits,
                                        oracle ? &*oracle : nullptr, opt.decode_threads);
      eng.mean_invocations += t.decoder_invocations;
      eng.mean_paper_invocations += t.paper_invocations;
      eng.mean_wall_s += t.wall_clock_s;
    }
    eng.mean_invocations /= static_cast<double>(n);
    eng.mean_paper_invocations /= static_cast<double>(n);
    eng.mean_wall_s /= static_cast<double>(n);
    return eng;
  };
  rep.dan = engine_run(dan_params, false);
  rep.fasterdan = engine_run(fdan_params, true);
  rep.speed_factor = rep.fasterdan.mean_wall_s > 0
                         ? rep.dan.mean_wall_s / rep.fasterdan.mean_wall_s
                         : 0.0;
  rep.invocation_ratio = rep.fasterdan.mean_invocations > 0
                             ? rep.dan.mean_invocations / rep.fasterdan.mean_invocations
                             : 0.0;
  return rep;
}

std::string BenchReport::csv() const {
  std::ostringstream os;
  os << "key,value\n"
     << "width," << width << "\n"
     << "height," << height << "\n"
     << "chars," << chars << "\n"
     << "lines," << lines << "\n"
     << "chars_per_line," << chars_per_line << "\n"
     << "layout_tokens," << layout_tokens << "\n"
     << "dan_invocations," << dan.mean_invocations << "\n"
     << "dan_wall_s," << dan.mean_wall_s << "\n"
     << "fasterdan_invocations," << fasterdan.mean_invocations << "\n"
     << "fasterdan_invocations_dup_counted," << fasterdan.mean_paper_invocations << "\n"
     << "fasterdan_wall_s," << fasterdan.mean_wall_s << "\n"
     << "speed_factor," << speed_factor << "\n"
     << "invocation_ratio," << invocation_ratio << "\n";
  return os.str();
}

std::string BenchReport::table() const {
  std::ostringstream os;
  os << "corpus: " << fmt(width, 0) << "x" << fmt(height, 0) << " px, " << fmt(chars, 1)
     << " chars, " << fmt(lines, 1) << " lines, " << fmt(chars_per_line, 1)
     << " chars/line, " << fmt(layout_tokens, 1) << " layout tokens\n";
  os << "engine      invocations  (dup-counted)  wall s\n";
  os << "dan         " << fmt(dan.mean_invocations, 1) << "       "
     << fmt(dan.mean_paper_invocations, 1) << "        " << fmt(dan.mean_wall_s, 4) << "\n";
  os << "fasterdan   " << fmt(fasterdan.mean_invocations, 1) << "         "
     << fmt(fasterdan.mean_paper_invocations, 1) << "          "
     << fmt(fasterdan.mean_wall_s, 4) << "\n";
  os << "speed factor x" << fmt(speed_factor, 2) << ", invocation ratio x"
     << fmt(invocation_ratio, 2) << "\n";
  return os.str();
}

}  // namespace fdan
