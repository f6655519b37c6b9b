#include "fdan/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "fdan/decode.hpp"
#include "fdan/metrics.hpp"
#include "fdan/util.hpp"

namespace fs = std::filesystem;

namespace fdan {

namespace {

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::istringstream is(read_text_file(path));
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string s = line;
    size_t hash = s.find('#');
    if (hash != std::string::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 'key = value'");
    kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
  }
  return kv;
}

}  // namespace

TrainConfig TrainConfig::from_file(const std::string& path) {
  auto kv = parse_kv_file(path);
  TrainConfig c;
  std::set<std::string> known;
  auto take = [&](const std::string& k) -> const std::string* {
    known.insert(k);
    auto it = kv.find(k);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto* v = take("mode")) c.mode = mode_from_string(*v);
  if (auto* v = take("variant")) c.variant = variant_from_string(*v);
  if (auto* v = take("lr")) c.lr = std::stod(*v);
  if (auto* v = take("batch_size")) c.batch_size = std::stoi(*v);
  if (auto* v = take("epochs")) c.epochs = std::stoi(*v);
  if (auto* v = take("steps_per_epoch")) c.steps_per_epoch = std::stoi(*v);
  if (auto* v = take("curriculum_warmup")) c.curriculum_warmup = std::stod(*v);
  if (auto* v = take("min_lines")) c.min_lines = std::stoi(*v);
  if (auto* v = take("max_lines")) c.max_lines = std::stoi(*v);
  if (auto* v = take("val_every")) c.val_every = std::stoi(*v);
  if (auto* v = take("train_threads")) c.train_threads = std::stoi(*v);
  if (auto* v = take("seed")) c.seed = std::stoull(*v);
  if (auto* v = take("alphabet")) c.alphabet = *v;
  if (auto* v = take("d")) c.model.d = std::stoi(*v);
  if (auto* v = take("layers")) c.model.layers = std::stoi(*v);
  if (auto* v = take("heads")) c.model.heads = std::stoi(*v);
  if (auto* v = take("ffn_mult")) c.model.ffn_mult = std::stoi(*v);
  if (auto* v = take("l_max")) c.model.l_max = std::stoi(*v);
  if (auto* v = take("n_max_line")) c.model.n_max_line = std::stoi(*v);
  if (auto* v = take("n_max_flat")) c.model.n_max_flat = std::stoi(*v);
  if (auto* v = take("enc_channels")) {
    c.model.enc_channels.clear();
    for (const auto& p : split(*v, ','))
      if (!trim(p).empty()) c.model.enc_channels.push_back(std::stoi(trim(p)));
  }
  for (const auto& [k, v] : kv)
    if (!known.count(k))
      throw std::runtime_error(path + ": unknown config key '" + k + "'");
  return c;
}

void TrainConfig::validate() const {
  if (variant != Variant::kBase && mode != Mode::kFasterDan)
    throw std::invalid_argument("train: variants require mode = fasterdan");
  if (lr <= 0 || batch_size < 1 || epochs < 0 || steps_per_epoch < 1)
    throw std::invalid_argument("train: bad optimizer settings");
  if (min_lines < 1 || max_lines < min_lines)
    throw std::invalid_argument("train: invalid curriculum bounds");
  if (curriculum_warmup < 0.0 || curriculum_warmup > 1.0)
    throw std::invalid_argument("train: curriculum_warmup outside [0,1]");
  if (val_every < 1) throw std::invalid_argument("train: val_every must be >= 1");
  if (train_threads < 1) throw std::invalid_argument("train: train_threads must be >= 1");
  model.validate();
}

std::vector<std::pair<int, int>> fasterdan_loss_rows(const LineSegmentedTarget& seg,
                                                     const GridLayout& layout) {
  std::vector<std::pair<int, int>> rows;
  for (int j = 0; j < seg.line_count(); ++j) {
    int predictor = j == 0 ? 0 : 1 + layout.index(j - 1, 0);
    rows.emplace_back(predictor, seg.lines[j][0]);
    for (int i = 2; i <= seg.lengths[j]; ++i)
      rows.emplace_back(1 + layout.index(j, i - 1), seg.grid[j][i]);
  }
  return rows;
}

TensorPtr loss_fasterdan(Tape& tape, const TeacherForced& tf, const LineSegmentedTarget& seg) {
  GridLayout layout(seg);
  return ops::cross_entropy_mean(tape, tf.logits, fasterdan_loss_rows(seg, layout));
}

TensorPtr loss_dan(Tape& tape, const TensorPtr& logits, const TokenSequence& tokens) {
  std::vector<std::pair<int, int>> rows;
  for (int t = 0; t < tokens.size(); ++t) rows.emplace_back(t, tokens.ids[t]);
  return ops::cross_entropy_mean(tape, logits, rows);
}

void adam_step(const std::vector<std::pair<std::string, TensorPtr>>& params,
               AdamState& state, double lr) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].second->val.size(), 0.0);
      state.v[i].assign(params[i].second->val.size(), 0.0);
    }
  }
  if (!grads_finite(params)) throw std::invalid_argument("adam_step: non-finite gradient");
  ++state.t;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i].second;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (size_t k = 0; k < p.val.size(); ++k) {
      double g = p.grad[k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      p.val[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + state.eps);
    }
  }
}

bool grads_finite(const std::vector<std::pair<std::string, TensorPtr>>& params) {
  for (const auto& [name, t] : params)
    for (double g : t->grad)
      if (!std::isfinite(g)) return false;
  return true;
}

Corpus Corpus::load(const std::string& dir, const std::string& alphabet) {
  auto entries = read_manifest((fs::path(dir) / "manifest.txt").string());
  Corpus c;
  std::vector<std::string> classes;
  std::set<std::string> chars;
  std::vector<DocumentStructure> docs;
  for (const auto& e : entries) {
    std::vector<std::string> doc_classes;
    DocumentStructure doc =
        read_truth_file((fs::path(dir) / e.truth).string(), &doc_classes);
    if (classes.empty()) classes = doc_classes;
    for (const auto& line : doc.all_lines())
      for (const auto& cp : codepoints(line)) chars.insert(cp);
    docs.push_back(std::move(doc));
    c.images.push_back(read_pgm((fs::path(dir) / e.image).string()));
  }
  std::vector<std::string> char_list;
  if (!alphabet.empty())
    for (const auto& cp : codepoints(alphabet)) char_list.push_back(cp);
  else
    char_list.assign(chars.begin(), chars.end());
  c.vocab = classes.empty() ? Vocabulary::chars_only(char_list)
                            : Vocabulary::with_layout(char_list, classes);
  for (auto& doc : docs) {
    c.tokens.push_back(serialize_document(doc, c.vocab));
    c.text_lines.push_back(static_cast<int>(doc.all_lines().size()));
    c.truths.push_back(std::move(doc));
  }
  return c;
}

namespace {

struct OptPayload {
  AdamState adam;
  uint64_t rng_state = 0;
  int next_epoch = 0;
};

std::vector<NamedArray> opt_arrays(const ModelParams& params, const OptPayload& op) {
  std::vector<NamedArray> out;
  auto named = params.named_params();
  for (size_t i = 0; i < named.size(); ++i) {
    NamedArray m{"opt.m." + named[i].first, {op.adam.m[i].size()}, op.adam.m[i]};
    NamedArray v{"opt.v." + named[i].first, {op.adam.v[i].size()}, op.adam.v[i]};
    out.push_back(std::move(m));
    out.push_back(std::move(v));
  }
  out.push_back({"opt.t", {1}, {static_cast<double>(op.adam.t)}});
  out.push_back({"opt.epoch", {1}, {static_cast<double>(op.next_epoch)}});
  // split so the u64 survives the f64 payload exactly
  out.push_back({"opt.rng", {2},
                 {static_cast<double>(op.rng_state >> 32),
                  static_cast<double>(op.rng_state & 0xffffffffull)}});
  return out;
}

bool restore_opt(const std::vector<NamedArray>& arrays, const ModelParams& params,
                 OptPayload& op) {
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& a : arrays) by_name[a.name] = &a;
  if (!by_name.count("opt.t")) return false;
  auto named = params.named_params();
  op.adam.m.resize(named.size());
  op.adam.v.resize(named.size());
  for (size_t i = 0; i < named.size(); ++i) {
    auto* m = by_name.count("opt.m." + named[i].first) ? by_name["opt.m." + named[i].first]
                                                       : nullptr;
    auto* v = by_name.count("opt.v." + named[i].first) ? by_name["opt.v." + named[i].first]
                                                       : nullptr;
    if (!m || !v) return false;
    op.adam.m[i] = m->f64;
    op.adam.v[i] = v->f64;
  }
  op.adam.t = static_cast<int64_t>(by_name["opt.t"]->f64[0]);
  op.next_epoch = static_cast<int>(by_name["opt.epoch"]->f64[0]);
  const auto& rng = by_name["opt.rng"]->f64;
  op.rng_state = (static_cast<uint64_t>(rng[0]) << 32) | static_cast<uint64_t>(rng[1]);
  return true;
}

double validate_cer(const ModelParams& params, const Corpus& val, Mode mode,
                    double* first_pass_out) {
  DecodeLimits limits{params.cfg.n_max_flat, params.cfg.l_max, params.cfg.n_max_line};
  long dist = 0, ref_len = 0;
  std::vector<std::vector<TokenId>> pass1;
  std::vector<TokenSequence> truths;
  for (size_t i = 0; i < val.images.size(); ++i) {
    DecodeTrace trace = mode == Mode::kDan
                            ? decode_dan(params, val.images[i], limits)
                            : decode_fasterdan(params, val.images[i], limits);
    DocumentStructure pred = deserialize_tokens(trace.tokens, params.vocab);
    std::string ref = val.truths[i].text();
    std::vector<std::string> r = codepoints(ref), h = codepoints(pred.text());
    dist += edit_distance_units(r, h);
    ref_len += static_cast<long>(r.size());
    if (mode == Mode::kFasterDan) {
      pass1.push_back(trace.pass1_tokens);
      truths.push_back(val.tokens[i]);
    }
  }
  if (first_pass_out) {
    *first_pass_out = mode == Mode::kFasterDan
                          ? first_pass_cer(pass1, truths, params.vocab, params.cfg.l_max,
                                           params.cfg.n_max_line)
                          : -1.0;
  }
  return ref_len == 0 ? 0.0 : static_cast<double>(dist) / static_cast<double>(ref_len);
}

}  // namespace

TrainResult train_loop(const TrainConfig& cfg_in, const std::string& data_dir,
                       const std::string& val_dir, const std::string& out_ckpt,
                       const std::string& log_csv, bool resume, int stop_after) {
  TrainConfig cfg = cfg_in;
  cfg.model.variant = cfg.mode == Mode::kDan ? Variant::kBase : cfg.variant;
  cfg.model.seed = cfg.seed;
  cfg.validate();

  Corpus corpus = Corpus::load(data_dir, cfg.alphabet);
  Corpus val;
  if (!val_dir.empty()) val = Corpus::load(val_dir, cfg.alphabet);

  ModelParams params = ModelParams::init(cfg.model, corpus.vocab);
  OptPayload op;
  op.rng_state = cfg.seed ^ 0xA5A5A5A5A5A5A5A5ull;
  if (resume) {
    LoadedModel lm = load_model(out_ckpt);
    params = std::move(lm.params);
    if (!restore_opt(lm.extra_arrays, params, op))
      throw std::runtime_error("resume: checkpoint has no optimizer state");
  }
  auto named = params.named_params();
  if (op.adam.m.empty()) {
    op.adam.m.resize(named.size());
    op.adam.v.resize(named.size());
    for (size_t i = 0; i < named.size(); ++i) {
      op.adam.m[i].assign(named[i].second->val.size(), 0.0);
      op.adam.v[i].assign(named[i].second->val.size(), 0.0);
    }
  }
  Rng rng(0);
  rng.set_state(op.rng_state);

  std::ofstream log;
  if (!log_csv.empty()) {
    bool fresh = !resume || !fs::exists(log_csv);
    log.open(log_csv, fresh ? std::ios::trunc : std::ios::app);
    if (fresh) log << "epoch,loss,val_cer,val_first_pass_cer\n";
  }

  TrainResult result;
  DecodeLimits seg_limits{cfg.model.n_max_flat, cfg.model.l_max, cfg.model.n_max_line};

  auto sample_loss = [&](Tape& tape, const ModelParams& model, int idx) -> TensorPtr {
    FeatureGrid feat = encode_image(tape, model, corpus.images[static_cast<size_t>(idx)]);
    if (cfg.mode == Mode::kDan) {
      TensorPtr logits =
          dan_teacher_logits(tape, model, corpus.tokens[static_cast<size_t>(idx)], feat);
      return loss_dan(tape, logits, corpus.tokens[static_cast<size_t>(idx)]);
    }
    LineSegmentedTarget seg =
        segment_lines(corpus.tokens[static_cast<size_t>(idx)], corpus.vocab,
                      seg_limits.l_max, seg_limits.n_max_line);
    TeacherForced tf = fasterdan_teacher_logits(tape, model, seg, feat);
    return loss_fasterdan(tape, tf, seg);
  };

  // Batch workers hold full parameter mirrors; values are re-synced after
  // every optimizer step and gradients reduced in a fixed worker order.
  int workers = std::min(cfg.train_threads, cfg.batch_size);
  std::vector<ModelParams> mirrors;
  std::vector<std::vector<std::pair<std::string, TensorPtr>>> mirror_named;
  auto sync_mirrors = [&] {
    for (auto& mn : mirror_named)
      for (size_t i = 0; i < named.size(); ++i) mn[i].second->val = named[i].second->val;
  };
  if (workers > 1) {
    for (int w = 0; w < workers; ++w)
      mirrors.push_back(ModelParams::init(cfg.model, corpus.vocab));
    for (auto& m : mirrors) mirror_named.push_back(m.named_params());
    sync_mirrors();
  }

  int last_epoch = stop_after >= 0 ? std::min(cfg.epochs, stop_after) : cfg.epochs;
  for (int epoch = op.next_epoch; epoch < last_epoch; ++epoch) {
    double progress = cfg.epochs <= 1 ? 1.0 : static_cast<double>(epoch) / (cfg.epochs - 1);
    double ramp = cfg.curriculum_warmup <= 0.0
                      ? 1.0
                      : std::min(1.0, progress / cfg.curriculum_warmup);
    int cap = static_cast<int>(std::lround(lerp(cfg.min_lines, cfg.max_lines, ramp)));
    std::vector<int> eligible;
    for (size_t i = 0; i < corpus.images.size(); ++i)
      if (corpus.text_lines[i] <= cap) eligible.push_back(static_cast<int>(i));
    if (eligible.empty())
      for (size_t i = 0; i < corpus.images.size(); ++i) eligible.push_back(static_cast<int>(i));

    double epoch_loss = 0.0;
    int counted = 0;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      std::vector<int> batch(static_cast<size_t>(cfg.batch_size));
      for (auto& idx : batch)
        idx = eligible[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int>(eligible.size()) - 1))];

      double step_loss = 0.0;
      if (workers <= 1) {
        Tape tape;
        TensorPtr total;
        for (int idx : batch) {
          TensorPtr l = sample_loss(tape, params, idx);
          total = total ? ops::add(tape, total, l) : l;
        }
        TensorPtr loss = ops::scale(tape, total, 1.0 / cfg.batch_size);
        params.zero_grad();
        tape.backward(loss);
        step_loss = loss->val[0];
      } else {
        std::vector<double> worker_loss(static_cast<size_t>(workers), 0.0);
        for (auto& m : mirrors) m.zero_grad();
        std::vector<std::thread> threads;
        for (int w = 0; w < workers; ++w)
          threads.emplace_back([&, w] {
            for (int b = w; b < cfg.batch_size; b += workers) {
              Tape tape;
              TensorPtr l = sample_loss(tape, mirrors[static_cast<size_t>(w)],
                                        batch[static_cast<size_t>(b)]);
              TensorPtr scaled = ops::scale(tape, l, 1.0 / cfg.batch_size);
              tape.backward(scaled);
              worker_loss[static_cast<size_t>(w)] += scaled->val[0];
            }
          });
        for (auto& t : threads) t.join();
        params.zero_grad();
        for (int w = 0; w < workers; ++w) {
          step_loss += worker_loss[static_cast<size_t>(w)];
          for (size_t i = 0; i < named.size(); ++i) {
            const auto& src = mirror_named[static_cast<size_t>(w)][i].second->grad;
            auto& dst = named[i].second->grad;
            for (size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
          }
        }
      }
      if (!grads_finite(named)) {
        ++result.nan_batches;
        continue;
      }
      adam_step(named, op.adam, cfg.lr);
      if (workers > 1) sync_mirrors();
      epoch_loss += step_loss;
      ++counted;
    }

    EpochLog el;
    el.epoch = epoch;
    el.loss = counted ? epoch_loss / counted : 0.0;
    bool do_val = !val_dir.empty() &&
                  ((epoch + 1) % cfg.val_every == 0 || epoch + 1 == last_epoch);
    if (do_val) el.val_cer = validate_cer(params, val, cfg.mode, &el.val_first_pass_cer);
    result.log.push_back(el);
    if (log.is_open()) {
      log << el.epoch << "," << el.loss << ",";
      if (el.val_cer >= 0) log << el.val_cer;
      log << ",";
      if (el.val_first_pass_cer >= 0) log << el.val_first_pass_cer;
      log << "\n" << std::flush;
    }
    ++result.epochs_run;
    op.next_epoch = epoch + 1;
  }

  op.rng_state = rng.state();
  std::vector<std::pair<std::string, std::string>> meta{{"mode", to_string(cfg.mode)}};
  save_model(out_ckpt, params, meta, opt_arrays(params, op));
  return result;
}

}  // namespace fdan
