#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "fairbide/matrix.hpp"

namespace fairbide::ad {

class Tape;

// Lightweight handle to a node on a tape. Copies are cheap.
class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  const Matrix& grad() const;
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run reverse-mode tape over Matrix values. A fresh tape is built
// every iteration; backward() visits nodes once in reverse creation order.
// Gradients are only materialized for nodes on a path from a parameter leaf.
class Tape {
 public:
  Var parameter(Matrix value);
  Var constant(Matrix value);
  Var scalar(double v) { return constant(Matrix(1, 1, v)); }

  void backward(const Var& loss);

  const Matrix& value(const Var& v) const { return nodes_[v.id_].value; }
  const Matrix& grad(const Var& v);  // zeros when nothing reached the node
  std::size_t node_count() const { return nodes_.size(); }

  // -- operations ---------------------------------------------------------
  Var matmul(Var a, Var b);
  Var matmul_tn(Var a, Var b);                 // transpose(a) * b, cache-friendly
  Var spmm(const SparseMatrix& s, Var x);      // s is a constant
  // Same, with the transposed structure supplied by the caller; s_t must
  // outlive the tape.
  Var spmm(const SparseMatrix* s, const SparseMatrix* s_t, Var x);
  // dot(w, a) as a 1x1 node; w is caller-owned and must outlive the tape.
  Var weighted_sum(Var a, const Matrix* w);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);                       // elementwise
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var cos(Var a);
  Var square(Var a);
  Var softplus(Var a);                         // log(1 + e^x), stable
  Var rsqrt(Var a);                            // x^{-1/2}
  Var sum(Var a);                              // 1x1
  Var mean(Var a);                             // 1x1
  Var frobenius_sq(Var a);                     // 1x1
  Var transpose(Var a);
  Var row_select(Var a, std::vector<std::size_t> rows);
  Var concat_cols(Var a, Var b);
  Var broadcast_add_row(Var a, Var r);         // a: n x m, r: 1 x m
  Var broadcast_mul_row(Var a, Var r);
  Var col_mean(Var a);                         // 1 x m

  // Per-column standardization (zero mean, unit variance) built from
  // primitive ops so the gradient flows through mean and variance.
  Var standardize_cols(Var a, double eps = 1e-12);

  // amp * cos(proj + phase) rowwise; phase is caller-owned (1 x cols) and
  // must outlive the tape.
  Var cos_features(Var proj, const Matrix* phase, double amp);

 private:
  struct Node {
    Matrix value;
    Matrix grad;       // allocated lazily during backward
    bool wants_grad = false;
    bool grad_ready = false;
    std::function<void(Tape&)> backprop;  // empty for leaves
  };

  std::size_t push(Matrix value, bool wants_grad, std::function<void(Tape&)> backprop);
  Matrix& grad_buffer(std::size_t id);
  void accumulate(std::size_t id, const Matrix& g);
  Var wrap(std::size_t id) { return Var(this, id); }
  void check_same_tape(const Var& v) const;

  std::vector<Node> nodes_;
  friend class Var;
};

// Free-function spellings; these forward to the tape of the first argument.
inline Var matmul(Var a, Var b) { return a.tape()->matmul(a, b); }
inline Var add(Var a, Var b) { return a.tape()->add(a, b); }
inline Var sub(Var a, Var b) { return a.tape()->sub(a, b); }
inline Var mul(Var a, Var b) { return a.tape()->mul(a, b); }
inline Var scale(Var a, double c) { return a.tape()->scale(a, c); }
inline Var relu(Var a) { return a.tape()->relu(a); }
inline Var sigmoid(Var a) { return a.tape()->sigmoid(a); }
inline Var sum(Var a) { return a.tape()->sum(a); }

}  // namespace fairbide::ad
