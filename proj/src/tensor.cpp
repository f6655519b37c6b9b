#include "fdan/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace fdan {

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->val.assign(static_cast<size_t>(t->size()), 0.0);
  if (requires_grad) t->ensure_grad();
  return t;
}

TensorPtr make_tensor(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  if (static_cast<int64_t>(values.size()) != t->size())
    throw std::invalid_argument("make_tensor: value count does not match shape");
  t->val = std::move(values);
  if (requires_grad) t->ensure_grad();
  return t;
}

TensorPtr make_scalar(double v, bool requires_grad) {
  return make_tensor({1}, {v}, requires_grad);
}

void Tape::backward(const TensorPtr& root) {
  if (ops_.empty()) throw std::logic_error("Tape::backward: no recorded forward graph");
  if (root->size() != 1) throw std::invalid_argument("Tape::backward: root must be scalar");
  if (!root->requires_grad) throw std::invalid_argument("Tape::backward: root has no grad");
  root->grad[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

namespace ops {

namespace {

TensorPtr result_like(std::vector<int> shape, bool grad) {
  auto t = make_tensor(std::move(shape));
  if (grad) t->ensure_grad();
  return t;
}

inline bool wants(const TensorPtr& t) { return t && t->requires_grad; }

}  // namespace

TensorPtr embed_rows(Tape& tape, const TensorPtr& table, const std::vector<int>& ids) {
  int d = table->cols();
  auto out = result_like({static_cast<int>(ids.size()), d}, wants(table));
  for (size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= table->rows())
      throw std::out_of_range("embed_rows: id outside table");
    const double* src = table->val.data() + static_cast<size_t>(ids[r]) * d;
    std::copy(src, src + d, out->val.data() + r * d);
  }
  tape.push([table, out, ids, d] {
    if (!table->requires_grad) return;
    for (size_t r = 0; r < ids.size(); ++r) {
      double* dst = table->grad.data() + static_cast<size_t>(ids[r]) * d;
      const double* g = out->grad.data() + r * d;
      for (int c = 0; c < d; ++c) dst[c] += g[c];
    }
  });
  return out;
}

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  if (a->shape != b->shape) throw std::invalid_argument("add: shape mismatch");
  auto out = result_like(a->shape, wants(a) || wants(b));
  for (size_t i = 0; i < a->val.size(); ++i) out->val[i] = a->val[i] + b->val[i];
  tape.push([a, b, out] {
    if (a->requires_grad)
      for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i];
    if (b->requires_grad)
      for (size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += out->grad[i];
  });
  return out;
}

TensorPtr add_const_rows(Tape& tape, const TensorPtr& x, const std::vector<double>& rows) {
  if (rows.size() != x->val.size())
    throw std::invalid_argument("add_const_rows: size mismatch");
  auto out = result_like(x->shape, wants(x));
  for (size_t i = 0; i < x->val.size(); ++i) out->val[i] = x->val[i] + rows[i];
  tape.push([x, out] {
    if (!x->requires_grad) return;
    for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[i];
  });
  return out;
}

TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->cols() != b->rows())
    throw std::invalid_argument("matmul: incompatible shapes");
  int m = a->rows(), k = a->cols(), n = b->cols();
  auto out = result_like({m, n}, wants(a) || wants(b));
  for (int i = 0; i < m; ++i) {
    const double* arow = a->val.data() + static_cast<size_t>(i) * k;
    double* orow = out->val.data() + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = b->val.data() + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  tape.push([a, b, out, m, k, n] {
    if (a->requires_grad) {
      for (int i = 0; i < m; ++i) {
        const double* grow = out->grad.data() + static_cast<size_t>(i) * n;
        double* arow = a->grad.data() + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
          const double* brow = b->val.data() + static_cast<size_t>(kk) * n;
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          arow[kk] += acc;
        }
      }
    }
    if (b->requires_grad) {
      for (int i = 0; i < m; ++i) {
        const double* arow = a->val.data() + static_cast<size_t>(i) * k;
        const double* grow = out->grad.data() + static_cast<size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
          double av = arow[kk];
          if (av == 0.0) continue;
          double* brow = b->grad.data() + static_cast<size_t>(kk) * n;
          for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
        }
      }
    }
  });
  return out;
}

TensorPtr linear(Tape& tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
  auto out = matmul(tape, x, w);
  if (!b) return out;
  int m = out->rows(), n = out->cols();
  if (b->size() != n) throw std::invalid_argument("linear: bias width mismatch");
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out->val[static_cast<size_t>(i) * n + j] += b->val[j];
  tape.push([b, out, m, n] {
    if (!b->requires_grad) return;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) b->grad[j] += out->grad[static_cast<size_t>(i) * n + j];
  });
  return out;
}

TensorPtr layernorm(Tape& tape, const TensorPtr& x, const TensorPtr& gain,
                    const TensorPtr& bias, double eps) {
  int m = x->rows(), n = x->cols();
  if (gain->size() != n || bias->size() != n)
    throw std::invalid_argument("layernorm: gain/bias width mismatch");
  auto out = result_like(x->shape, wants(x) || wants(gain) || wants(bias));
  auto xhat = std::make_shared<std::vector<double>>(x->val.size());
  auto rstd = std::make_shared<std::vector<double>>(m);
  for (int i = 0; i < m; ++i) {
    const double* row = x->val.data() + static_cast<size_t>(i) * n;
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += row[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= n;
    double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[i] = rs;
    double* hrow = xhat->data() + static_cast<size_t>(i) * n;
    double* orow = out->val.data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      hrow[j] = (row[j] - mean) * rs;
      orow[j] = gain->val[j] * hrow[j] + bias->val[j];
    }
  }
  tape.push([x, gain, bias, out, xhat, rstd, m, n] {
    for (int i = 0; i < m; ++i) {
      const double* g = out->grad.data() + static_cast<size_t>(i) * n;
      const double* h = xhat->data() + static_cast<size_t>(i) * n;
      if (gain->requires_grad)
        for (int j = 0; j < n; ++j) gain->grad[j] += g[j] * h[j];
      if (bias->requires_grad)
        for (int j = 0; j < n; ++j) bias->grad[j] += g[j];
      if (x->requires_grad) {
        double sum_gg = 0.0, sum_ggh = 0.0;
        for (int j = 0; j < n; ++j) {
          double gg = g[j] * gain->val[j];
          sum_gg += gg;
          sum_ggh += gg * h[j];
        }
        double* xg = x->grad.data() + static_cast<size_t>(i) * n;
        double rs = (*rstd)[i];
        for (int j = 0; j < n; ++j) {
          double gg = g[j] * gain->val[j];
          xg[j] += rs * (gg - sum_gg / n - h[j] * sum_ggh / n);
        }
      }
    }
  });
  return out;
}

TensorPtr gelu(Tape& tape, const TensorPtr& x) {
  auto out = result_like(x->shape, wants(x));
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  for (size_t i = 0; i < x->val.size(); ++i) {
    double v = x->val[i];
    out->val[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  tape.push([x, out] {
    if (!x->requires_grad) return;
    for (size_t i = 0; i < x->val.size(); ++i) {
      double v = x->val[i];
      double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      x->grad[i] += out->grad[i] * (cdf + v * pdf);
    }
  });
  return out;
}

TensorPtr attention(Tape& tape, const TensorPtr& q, const TensorPtr& k, const TensorPtr& v,
                    int heads, const AttentionMask* mask,
                    std::vector<std::vector<double>>* attn_probe) {
  int Q = q->rows(), K = k->rows(), d = q->cols();
  if (k->cols() != d || v->cols() != d || v->rows() != K)
    throw std::invalid_argument("attention: shape mismatch");
  if (d % heads != 0) throw std::invalid_argument("attention: d not divisible by heads");
  if (mask && (mask->query_count() != Q || mask->key_count() != K))
    throw std::invalid_argument("attention: mask does not match query/key counts");
  int dk = d / heads;
  double scl = 1.0 / std::sqrt(static_cast<double>(dk));

  auto out = result_like({Q, d}, wants(q) || wants(k) || wants(v));
  // Post-softmax weights per head, kept for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(
      static_cast<size_t>(heads) * Q * K, 0.0);

  for (int h = 0; h < heads; ++h) {
    int off = h * dk;
    for (int i = 0; i < Q; ++i) {
      const double* qrow = q->val.data() + static_cast<size_t>(i) * d + off;
      double* prow = probs->data() + (static_cast<size_t>(h) * Q + i) * K;
      double maxs = -1e300;
      for (int j = 0; j < K; ++j) {
        if (mask && !mask->visible(i, j)) continue;
        const double* krow = k->val.data() + static_cast<size_t>(j) * d + off;
        double s = 0.0;
        for (int c = 0; c < dk; ++c) s += qrow[c] * krow[c];
        s *= scl;
        prow[j] = s;
        if (s > maxs) maxs = s;
      }
      if (maxs == -1e300)
        throw std::invalid_argument("attention: query row with no visible key");
      double denom = 0.0;
      for (int j = 0; j < K; ++j) {
        if (mask && !mask->visible(i, j)) continue;
        prow[j] = std::exp(prow[j] - maxs);
        denom += prow[j];
      }
      double* orow = out->val.data() + static_cast<size_t>(i) * d + off;
      for (int j = 0; j < K; ++j) {
        if (mask && !mask->visible(i, j)) {
          prow[j] = 0.0;
          continue;
        }
        prow[j] /= denom;
        const double* vrow = v->val.data() + static_cast<size_t>(j) * d + off;
        for (int c = 0; c < dk; ++c) orow[c] += prow[j] * vrow[c];
      }
    }
    if (attn_probe) {
      attn_probe->emplace_back(probs->begin() + static_cast<size_t>(h) * Q * K,
                               probs->begin() + static_cast<size_t>(h + 1) * Q * K);
    }
  }

  tape.push([q, k, v, out, probs, heads, Q, K, d, dk, scl] {
    std::vector<double> ds(K);
    for (int h = 0; h < heads; ++h) {
      int off = h * dk;
      for (int i = 0; i < Q; ++i) {
        const double* prow = probs->data() + (static_cast<size_t>(h) * Q + i) * K;
        const double* grow = out->grad.data() + static_cast<size_t>(i) * d + off;
        // dp_j = <dout, V_j>; ds = p * (dp - sum p*dp)
        double dot = 0.0;
        for (int j = 0; j < K; ++j) {
          if (prow[j] == 0.0) {
            ds[j] = 0.0;
            continue;
          }
          const double* vrow = v->val.data() + static_cast<size_t>(j) * d + off;
          double dp = 0.0;
          for (int c = 0; c < dk; ++c) dp += grow[c] * vrow[c];
          ds[j] = dp;
          dot += prow[j] * dp;
          if (v->requires_grad) {
            double* vg = v->grad.data() + static_cast<size_t>(j) * d + off;
            for (int c = 0; c < dk; ++c) vg[c] += prow[j] * grow[c];
          }
        }
        const double* qrow = q->val.data() + static_cast<size_t>(i) * d + off;
        double* qg = q->requires_grad ? q->grad.data() + static_cast<size_t>(i) * d + off
                                      : nullptr;
        for (int j = 0; j < K; ++j) {
          if (prow[j] == 0.0) continue;
          double dscore = prow[j] * (ds[j] - dot) * scl;
          if (dscore == 0.0) continue;
          const double* krow = k->val.data() + static_cast<size_t>(j) * d + off;
          if (qg)
            for (int c = 0; c < dk; ++c) qg[c] += dscore * krow[c];
          if (k->requires_grad) {
            double* kg = k->grad.data() + static_cast<size_t>(j) * d + off;
            for (int c = 0; c < dk; ++c) kg[c] += dscore * qrow[c];
          }
        }
      }
    }
  });
  return out;
}

TensorPtr cross_entropy_mean(Tape& tape, const TensorPtr& logits,
                             const std::vector<std::pair<int, int>>& rows) {
  if (rows.empty()) throw std::invalid_argument("cross_entropy_mean: no target rows");
  int n = logits->cols();
  auto out = make_scalar(0.0);
  if (wants(logits)) out->ensure_grad();
  auto soft = std::make_shared<std::vector<double>>(rows.size() * static_cast<size_t>(n));
  double total = 0.0;
  for (size_t r = 0; r < rows.size(); ++r) {
    auto [row, target] = rows[r];
    if (row < 0 || row >= logits->rows() || target < 0 || target >= n)
      throw std::out_of_range("cross_entropy_mean: row or target out of range");
    const double* l = logits->val.data() + static_cast<size_t>(row) * n;
    double maxv = l[0];
    for (int j = 1; j < n; ++j) maxv = std::max(maxv, l[j]);
    double denom = 0.0;
    for (int j = 0; j < n; ++j) denom += std::exp(l[j] - maxv);
    double lse = maxv + std::log(denom);
    total += lse - l[target];
    double* srow = soft->data() + r * n;
    for (int j = 0; j < n; ++j) srow[j] = std::exp(l[j] - lse);
  }
  out->val[0] = total / static_cast<double>(rows.size());
  tape.push([logits, out, rows, soft, n] {
    if (!logits->requires_grad) return;
    double g = out->grad[0] / static_cast<double>(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) {
      auto [row, target] = rows[r];
      const double* srow = soft->data() + r * n;
      double* lg = logits->grad.data() + static_cast<size_t>(row) * n;
      for (int j = 0; j < n; ++j) lg[j] += g * srow[j];
      lg[target] -= g;
    }
  });
  return out;
}

TensorPtr sum(Tape& tape, const TensorPtr& x) {
  auto out = make_scalar(0.0);
  if (wants(x)) out->ensure_grad();
  double acc = 0.0;
  for (double v : x->val) acc += v;
  out->val[0] = acc;
  tape.push([x, out] {
    if (!x->requires_grad) return;
    for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[0];
  });
  return out;
}

TensorPtr scale(Tape& tape, const TensorPtr& x, double s) {
  auto out = result_like(x->shape, wants(x));
  for (size_t i = 0; i < x->val.size(); ++i) out->val[i] = x->val[i] * s;
  tape.push([x, out, s] {
    if (!x->requires_grad) return;
    for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += s * out->grad[i];
  });
  return out;
}

TensorPtr conv2d(Tape& tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b,
                 int stride_h, int stride_w) {
  if (x->shape.size() != 3 || w->shape.size() != 4)
    throw std::invalid_argument("conv2d: expects x[ci,h,w], w[co,ci,3,3]");
  int ci = x->shape[0], h = x->shape[1], wd = x->shape[2];
  int co = w->shape[0];
  if (w->shape[1] != ci || w->shape[2] != 3 || w->shape[3] != 3)
    throw std::invalid_argument("conv2d: kernel shape mismatch");
  if (h % stride_h != 0 || wd % stride_w != 0)
    throw std::invalid_argument("conv2d: input not divisible by stride");
  int oh = h / stride_h, ow = wd / stride_w;
  auto out = result_like({co, oh, ow}, wants(x) || wants(w) || wants(b));

  auto at_x = [&](int c, int y, int xx) -> double {
    if (y < 0 || y >= h || xx < 0 || xx >= wd) return 0.0;
    return x->val[(static_cast<size_t>(c) * h + y) * wd + xx];
  };
  for (int o = 0; o < co; ++o)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = b ? b->val[o] : 0.0;
        for (int c = 0; c < ci; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx)
              acc += w->val[((static_cast<size_t>(o) * ci + c) * 3 + ky) * 3 + kx] *
                     at_x(c, oy * stride_h + ky - 1, ox * stride_w + kx - 1);
        out->val[(static_cast<size_t>(o) * oh + oy) * ow + ox] = acc;
      }

  tape.push([x, w, b, out, ci, h, wd, co, oh, ow, stride_h, stride_w] {
    for (int o = 0; o < co; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double g = out->grad[(static_cast<size_t>(o) * oh + oy) * ow + ox];
          if (g == 0.0) continue;
          if (b && b->requires_grad) b->grad[o] += g;
          for (int c = 0; c < ci; ++c)
            for (int ky = 0; ky < 3; ++ky) {
              int y = oy * stride_h + ky - 1;
              if (y < 0 || y >= h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                int xx = ox * stride_w + kx - 1;
                if (xx < 0 || xx >= wd) continue;
                size_t widx = ((static_cast<size_t>(o) * ci + c) * 3 + ky) * 3 + kx;
                size_t xidx = (static_cast<size_t>(c) * h + y) * wd + xx;
                if (w->requires_grad) w->grad[widx] += g * x->val[xidx];
                if (x->requires_grad) x->grad[xidx] += g * w->val[widx];
              }
            }
        }
  });
  return out;
}

}  // namespace ops

void softmax_rows(const double* in, double* out, int rows, int n) {
  for (int r = 0; r < rows; ++r) {
    const double* irow = in + static_cast<size_t>(r) * n;
    double* orow = out + static_cast<size_t>(r) * n;
    double maxv = irow[0];
    for (int j = 1; j < n; ++j) maxv = std::max(maxv, irow[j]);
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
      orow[j] = std::exp(irow[j] - maxv);
      denom += orow[j];
    }
    for (int j = 0; j < n; ++j) orow[j] /= denom;
  }
}

std::vector<double> softmax(const std::vector<double>& scores) {
  std::vector<double> out(scores.size());
  softmax_rows(scores.data(), out.data(), 1, static_cast<int>(scores.size()));
  return out;
}

int argmax(const double* v, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace fdan
