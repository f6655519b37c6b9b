#include "fdan/posenc.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace fdan {

namespace {

void pe_1d_into(double* out, int pos, int d) {
  for (int k = 0; 2 * k < d; ++k) {
    double freq = std::pow(10000.0, static_cast<double>(2 * k) / d);
    double angle = pos / freq;
    out[2 * k] = std::sin(angle);
    out[2 * k + 1] = std::cos(angle);
  }
}

void check_1d_args(int pos, int d) {
  if (pos < 0) throw std::invalid_argument("pe_1d: negative position");
  if (d <= 0 || d % 2 != 0)
    throw std::invalid_argument("pe_1d: width must be positive and even, got " +
                                std::to_string(d));
}

}  // namespace

std::vector<double> pe_1d(int pos, int d) {
  check_1d_args(pos, d);
  std::vector<double> out(d);
  pe_1d_into(out.data(), pos, d);
  return out;
}

std::vector<double> pe_1d_half(int pos, int d) {
  if (d % 2 != 0) throw std::invalid_argument("pe_1d_half: width must be even");
  return pe_1d(pos, d / 2);
}

std::vector<double> pe_2d(int hf, int wf, int d) {
  if (d % 4 != 0)
    throw std::invalid_argument("pe_2d: width must be divisible by 4, got " +
                                std::to_string(d));
  if (hf <= 0 || wf <= 0) throw std::invalid_argument("pe_2d: empty grid");
  std::vector<double> out(static_cast<size_t>(hf) * wf * d);
  int half = d / 2;
  for (int r = 0; r < hf; ++r)
    for (int c = 0; c < wf; ++c) {
      double* cell = out.data() + (static_cast<size_t>(r) * wf + c) * d;
      pe_1d_into(cell, r, half);
      pe_1d_into(cell + half, c, half);
    }
  return out;
}

std::vector<double> pe_doc(int line, int pos, int d, DocPe variant, int l_max, int n_max) {
  if (line < 0 || line >= l_max)
    throw std::invalid_argument("pe_doc: line index " + std::to_string(line) +
                                " outside cap " + std::to_string(l_max));
  if (pos < 0 || pos >= n_max)
    throw std::invalid_argument("pe_doc: in-line position " + std::to_string(pos) +
                                " outside cap " + std::to_string(n_max));
  std::vector<double> out(d);
  if (variant == DocPe::kConcat) {
    if (d % 4 != 0) throw std::invalid_argument("pe_doc: concat needs d divisible by 4");
    pe_1d_into(out.data(), line, d / 2);
    pe_1d_into(out.data() + d / 2, pos, d / 2);
  } else {
    check_1d_args(line, d);
    std::vector<double> a(d), b(d);
    pe_1d_into(a.data(), line, d);
    pe_1d_into(b.data(), pos, d);
    for (int i = 0; i < d; ++i) out[i] = a[i] + b[i];
  }
  return out;
}

PositionalTable PositionalTable::one_d(int max_pos, int d) {
  check_1d_args(0, d);
  PositionalTable t;
  t.kind_ = Kind::k1dFull;
  t.d_ = d;
  t.max_pos_ = max_pos;
  t.stride_ = d;
  t.values_.resize(static_cast<size_t>(max_pos) * d);
  for (int p = 0; p < max_pos; ++p) pe_1d_into(t.values_.data() + static_cast<size_t>(p) * d, p, d);
  return t;
}

PositionalTable PositionalTable::one_d_half(int max_pos, int d) {
  if (d % 4 != 0) throw std::invalid_argument("PositionalTable: half table needs d % 4 == 0");
  PositionalTable t = one_d(max_pos, d / 2);
  t.kind_ = Kind::k1dHalf;
  t.d_ = d;
  return t;
}

PositionalTable PositionalTable::two_d(int hf, int wf, int d) {
  PositionalTable t;
  t.kind_ = Kind::k2d;
  t.d_ = d;
  t.hf_ = hf;
  t.wf_ = wf;
  t.stride_ = d;
  t.values_ = pe_2d(hf, wf, d);
  return t;
}

PositionalTable PositionalTable::doc(int l_max, int n_max, int d, DocPe variant) {
  PositionalTable t;
  t.kind_ = variant == DocPe::kConcat ? Kind::kDocConcat : Kind::kDocSum;
  t.d_ = d;
  t.l_max_ = l_max;
  t.n_max_ = n_max;
  if (variant == DocPe::kConcat) {
    if (d % 4 != 0) throw std::invalid_argument("PositionalTable: concat needs d % 4 == 0");
    t.stride_ = d / 2;
    t.values_.resize(static_cast<size_t>(l_max) * (d / 2));
    t.aux_.resize(static_cast<size_t>(n_max) * (d / 2));
    for (int j = 0; j < l_max; ++j)
      pe_1d_into(t.values_.data() + static_cast<size_t>(j) * (d / 2), j, d / 2);
    for (int i = 0; i < n_max; ++i)
      pe_1d_into(t.aux_.data() + static_cast<size_t>(i) * (d / 2), i, d / 2);
  } else {
    check_1d_args(0, d);
    t.stride_ = d;
    t.values_.resize(static_cast<size_t>(l_max) * d);
    t.aux_.resize(static_cast<size_t>(n_max) * d);
    for (int j = 0; j < l_max; ++j)
      pe_1d_into(t.values_.data() + static_cast<size_t>(j) * d, j, d);
    for (int i = 0; i < n_max; ++i)
      pe_1d_into(t.aux_.data() + static_cast<size_t>(i) * d, i, d);
  }
  return t;
}

const double* PositionalTable::row(int pos) const {
  if (kind_ != Kind::k1dFull && kind_ != Kind::k1dHalf)
    throw std::logic_error("PositionalTable::row: not a 1d table");
  if (pos < 0 || pos >= max_pos_)
    throw std::out_of_range("PositionalTable::row: position " + std::to_string(pos) +
                            " outside cap " + std::to_string(max_pos_));
  return values_.data() + static_cast<size_t>(pos) * stride_;
}

const double* PositionalTable::cell(int r, int c) const {
  if (kind_ != Kind::k2d) throw std::logic_error("PositionalTable::cell: not a 2d table");
  if (r < 0 || r >= hf_ || c < 0 || c >= wf_)
    throw std::out_of_range("PositionalTable::cell: index outside grid");
  return values_.data() + (static_cast<size_t>(r) * wf_ + c) * stride_;
}

void PositionalTable::doc_into(double* out, int line, int pos) const {
  if (kind_ != Kind::kDocConcat && kind_ != Kind::kDocSum)
    throw std::logic_error("PositionalTable::doc_into: not a doc table");
  if (line < 0 || line >= l_max_ || pos < 0 || pos >= n_max_)
    throw std::out_of_range("PositionalTable::doc_into: (" + std::to_string(line) + "," +
                            std::to_string(pos) + ") outside caps");
  const double* lrow = values_.data() + static_cast<size_t>(line) * stride_;
  const double* prow = aux_.data() + static_cast<size_t>(pos) * stride_;
  if (kind_ == Kind::kDocConcat) {
    std::memcpy(out, lrow, sizeof(double) * stride_);
    std::memcpy(out + stride_, prow, sizeof(double) * stride_);
  } else {
    for (int i = 0; i < d_; ++i) out[i] = lrow[i] + prow[i];
  }
}

std::vector<double> PositionalTable::doc_vec(int line, int pos) const {
  std::vector<double> out(d_);
  doc_into(out.data(), line, pos);
  return out;
}

}  // namespace fdan
