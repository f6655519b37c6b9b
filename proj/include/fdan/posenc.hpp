#pragma once

#include <vector>

namespace fdan {

// Fixed sinusoidal encodings. Channel 2k of a width-d encoding holds
// sin(pos / 10000^(2k/d)), channel 2k+1 the matching cosine.
std::vector<double> pe_1d(int pos, int d);

// Half-width variant used as a building block: pe_1d(pos, d/2).
std::vector<double> pe_1d_half(int pos, int d);

// 2D grid encoding, row-major [hf x wf x d]: the first d/2 channels encode
// the row index, the last d/2 the column index. Requires d % 4 == 0.
std::vector<double> pe_2d(int hf, int wf, int d);

enum class DocPe { kConcat, kSum };

// Document encoding of (line j, in-line position i). Concat stacks the two
// half-width encodings; sum adds the two full-width ones.
std::vector<double> pe_doc(int line, int pos, int d, DocPe variant,
                           int l_max = 256, int n_max = 256);

// Precomputed read-only encoding table, shared across uses of one (cap, d).
class PositionalTable {
 public:
  enum class Kind { k1dFull, k1dHalf, k2d, kDocConcat, kDocSum };

  static PositionalTable one_d(int max_pos, int d);
  static PositionalTable one_d_half(int max_pos, int d);
  static PositionalTable two_d(int hf, int wf, int d);
  static PositionalTable doc(int l_max, int n_max, int d, DocPe variant);

  Kind kind() const { return kind_; }
  int width() const { return d_; }

  // Row accessors; each writes d doubles (d/2 for the half table).
  const double* row(int pos) const;                    // 1d kinds
  const double* cell(int r, int c) const;              // 2d kind
  void doc_into(double* out, int line, int pos) const; // doc kinds
  std::vector<double> doc_vec(int line, int pos) const;

  int max_pos() const { return max_pos_; }
  int l_max() const { return l_max_; }
  int n_max() const { return n_max_; }

 private:
  PositionalTable() = default;
  Kind kind_ = Kind::k1dFull;
  int d_ = 0, max_pos_ = 0, hf_ = 0, wf_ = 0, l_max_ = 0, n_max_ = 0;
  int stride_ = 0;
  std::vector<double> values_;
  std::vector<double> aux_;  // position-axis table for doc kinds
};

}  // namespace fdan
