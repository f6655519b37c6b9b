#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "fdan/masks.hpp"

namespace fdan {

// Dense f64 array with an optional gradient of the same shape. Everything
// in the model is rank 1..3 and small, so shapes are plain int vectors and
// values row-major.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> val;
  std::vector<double> grad;  // empty unless requires_grad
  bool requires_grad = false;

  int64_t size() const {
    int64_t n = 1;
    for (int s : shape) n *= s;
    return n;
  }
  int rows() const { return shape.at(0); }
  int cols() const { return shape.at(1); }

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
  void ensure_grad() {
    requires_grad = true;
    grad.assign(val.size(), 0.0);
  }
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad = false);
TensorPtr make_tensor(std::vector<int> shape, std::vector<double> values,
                      bool requires_grad = false);
TensorPtr make_scalar(double v, bool requires_grad = false);

// Reverse-mode tape: ops run their forward eagerly and push a backward
// closure. backward() seeds the scalar root with 1 and replays in reverse.
class Tape {
 public:
  bool recording = true;

  void push(std::function<void()> fn) {
    if (recording) ops_.push_back(std::move(fn));
  }
  void backward(const TensorPtr& root);
  void clear() { ops_.clear(); }
  size_t op_count() const { return ops_.size(); }

 private:
  std::vector<std::function<void()>> ops_;
  bool ran_forward_ = false;
};

namespace ops {

// rows of E indexed by ids -> [n x d]
TensorPtr embed_rows(Tape& t, const TensorPtr& table, const std::vector<int>& ids);

TensorPtr add(Tape& t, const TensorPtr& a, const TensorPtr& b);
// x [m x n] plus a constant row buffer (no grad through the row).
TensorPtr add_const_rows(Tape& t, const TensorPtr& x, const std::vector<double>& rows);
TensorPtr matmul(Tape& t, const TensorPtr& a, const TensorPtr& b);
// x [m x k] * w [k x n] + b[n]; b may be null.
TensorPtr linear(Tape& t, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);
TensorPtr layernorm(Tape& t, const TensorPtr& x, const TensorPtr& gain,
                    const TensorPtr& bias, double eps = 1e-5);
TensorPtr gelu(Tape& t, const TensorPtr& x);

// Multi-head scaled dot-product attention. q [Q x d], k/v [K x d].
// `mask` restricts which keys each query sees (null = all visible).
// When `attn_probe` is non-null the post-softmax weights are appended to it
// per head ([Q x K] row-major), which tests use to check normalization.
TensorPtr attention(Tape& t, const TensorPtr& q, const TensorPtr& k, const TensorPtr& v,
                    int heads, const AttentionMask* mask,
                    std::vector<std::vector<double>>* attn_probe = nullptr);

// Mean cross-entropy of `logits` rows against target ids, restricted to
// `rows` (pairs of row index and target id).
TensorPtr cross_entropy_mean(Tape& t, const TensorPtr& logits,
                             const std::vector<std::pair<int, int>>& rows);

TensorPtr sum(Tape& t, const TensorPtr& x);
TensorPtr scale(Tape& t, const TensorPtr& x, double s);

// x [ci x h x w] -> [co x h' x w'], 3x3 kernel, zero padding 1.
TensorPtr conv2d(Tape& t, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b,
                 int stride_h, int stride_w);

}  // namespace ops

// Row-wise softmax without a tape; rows of width n.
void softmax_rows(const double* in, double* out, int rows, int n);
std::vector<double> softmax(const std::vector<double>& scores);
int argmax(const double* v, int n);

}  // namespace fdan
