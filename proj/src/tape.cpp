#include "fairbide/tape.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "fairbide/fastmath.hpp"

namespace fairbide::ad {

const Matrix& Var::value() const { return tape_->value(*this); }
const Matrix& Var::grad() const { return tape_->grad(*this); }

std::size_t Tape::push(Matrix value, bool wants_grad, std::function<void(Tape&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.wants_grad = wants_grad;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

Var Tape::parameter(Matrix value) { return wrap(push(std::move(value), true, {})); }
Var Tape::constant(Matrix value) { return wrap(push(std::move(value), false, {})); }

Matrix& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad_ready) {
    n.grad = Matrix(n.value.rows(), n.value.cols(), 0.0);
    n.grad_ready = true;
  }
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.grad_ready) {
    n.grad = g;
    n.grad_ready = true;
    return;
  }
  Matrix& dst = n.grad;
  double* __restrict__ d = dst.data();
  const double* __restrict__ s = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

const Matrix& Tape::grad(const Var& v) {
  return grad_buffer(v.id_);
}

void Tape::check_same_tape(const Var& v) const {
  if (v.tape_ != this) throw Error("tape: operands from different tapes");
}

void Tape::backward(const Var& loss) {
  check_same_tape(loss);
  const Node& l = nodes_[loss.id_];
  if (l.value.rows() != 1 || l.value.cols() != 1)
    throw DimensionError("backward: loss is not scalar");
  grad_buffer(loss.id_)(0, 0) = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.wants_grad && n.grad_ready && n.backprop) n.backprop(*this);
  }
}

// ---------------------------------------------------------------------------

namespace {

void check_shapes(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

}  // namespace

Var Tape::matmul(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  const std::size_t ia = a.id_, ib = b.id_;
  Matrix out = fairbide::matmul(nodes_[ia].value, nodes_[ib].value);
  const bool wg = nodes_[ia].wants_grad || nodes_[ib].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia, ib](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      if (t.nodes_[ia].wants_grad)
        gemm_nt(g, t.nodes_[ib].value, t.grad_buffer(ia), /*accumulate=*/true);
      if (t.nodes_[ib].wants_grad)
        gemm_tn(t.nodes_[ia].value, g, t.grad_buffer(ib), /*accumulate=*/true);
    };
  }
  return wrap(id);
}

Var Tape::matmul_tn(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  const std::size_t ia = a.id_, ib = b.id_;
  Matrix out = fairbide::matmul_tn(nodes_[ia].value, nodes_[ib].value);
  const bool wg = nodes_[ia].wants_grad || nodes_[ib].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    // C = A^T B: dA = B dC^T, dB = A dC
    nodes_[id].backprop = [id, ia, ib](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      if (t.nodes_[ia].wants_grad)
        gemm_nt(t.nodes_[ib].value, g, t.grad_buffer(ia), /*accumulate=*/true);
      if (t.nodes_[ib].wants_grad)
        gemm_nn(t.nodes_[ia].value, g, t.grad_buffer(ib), /*accumulate=*/true);
    };
  }
  return wrap(id);
}

Var Tape::spmm(const SparseMatrix& s, Var x) {
  check_same_tape(x);
  const std::size_t ix = x.id_;
  Matrix out;
  s.multiply(nodes_[ix].value, out);
  const bool wg = nodes_[ix].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    // dX = s^T * dY; the transposed structure is rebuilt lazily per call site,
    // so callers on hot paths should prefer passing both orientations.
    nodes_[id].backprop = [id, ix, st = s.transposed()](Tape& t) {
      st.multiply(t.nodes_[id].grad, t.grad_buffer(ix), /*accumulate=*/true);
    };
  }
  return wrap(id);
}

Var Tape::spmm(const SparseMatrix* s, const SparseMatrix* s_t, Var x) {
  check_same_tape(x);
  const std::size_t ix = x.id_;
  Matrix out;
  s->multiply(nodes_[ix].value, out);
  const bool wg = nodes_[ix].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ix, s_t](Tape& t) {
      s_t->multiply(t.nodes_[id].grad, t.grad_buffer(ix), /*accumulate=*/true);
    };
  }
  return wrap(id);
}

Var Tape::weighted_sum(Var a, const Matrix* w) {
  check_same_tape(a);
  check_shapes(nodes_[a.id_].value, *w, "weighted_sum");
  const std::size_t ia = a.id_;
  Matrix out(1, 1, fairbide::dot(nodes_[ia].value, *w));
  const bool wg = nodes_[ia].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia, w](Tape& t) {
      const double g = t.nodes_[id].grad(0, 0);
      Matrix& dst = t.grad_buffer(ia);
      const double* wd = w->data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += g * wd[i];
    };
  }
  return wrap(id);
}

Var Tape::add(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  check_shapes(nodes_[a.id_].value, nodes_[b.id_].value, "add");
  const std::size_t ia = a.id_, ib = b.id_;
  Matrix out = fairbide::add(nodes_[ia].value, nodes_[ib].value);
  const bool wg = nodes_[ia].wants_grad || nodes_[ib].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia, ib](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      if (t.nodes_[ia].wants_grad) t.accumulate(ia, g);
      if (t.nodes_[ib].wants_grad) t.accumulate(ib, g);
    };
  }
  return wrap(id);
}

Var Tape::sub(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  check_shapes(nodes_[a.id_].value, nodes_[b.id_].value, "sub");
  const std::size_t ia = a.id_, ib = b.id_;
  Matrix out = fairbide::sub(nodes_[ia].value, nodes_[ib].value);
  const bool wg = nodes_[ia].wants_grad || nodes_[ib].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia, ib](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      if (t.nodes_[ia].wants_grad) t.accumulate(ia, g);
      if (t.nodes_[ib].wants_grad) {
        Matrix& dst = t.grad_buffer(ib);
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] -= g.data()[i];
      }
    };
  }
  return wrap(id);
}

Var Tape::mul(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  check_shapes(nodes_[a.id_].value, nodes_[b.id_].value, "mul");
  const std::size_t ia = a.id_, ib = b.id_;
  Matrix out = hadamard(nodes_[ia].value, nodes_[ib].value);
  const bool wg = nodes_[ia].wants_grad || nodes_[ib].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia, ib](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      if (t.nodes_[ia].wants_grad) {
        Matrix& dst = t.grad_buffer(ia);
        const double* o = t.nodes_[ib].value.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += g.data()[i] * o[i];
      }
      if (t.nodes_[ib].wants_grad) {
        Matrix& dst = t.grad_buffer(ib);
        const double* o = t.nodes_[ia].value.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += g.data()[i] * o[i];
      }
    };
  }
  return wrap(id);
}

Var Tape::scale(Var a, double c) {
  check_same_tape(a);
  const std::size_t ia = a.id_;
  Matrix out = fairbide::scale(nodes_[ia].value, c);
  const bool wg = nodes_[ia].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia, c](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      Matrix& dst = t.grad_buffer(ia);
      for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += c * g.data()[i];
    };
  }
  return wrap(id);
}

Var Tape::add_scalar(Var a, double c) {
  check_same_tape(a);
  const std::size_t ia = a.id_;
  Matrix out = nodes_[ia].value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += c;
  const bool wg = nodes_[ia].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia](Tape& t) { t.accumulate(ia, t.nodes_[id].grad); };
  }
  return wrap(id);
}

Var Tape::relu(Var a) {
  check_same_tape(a);
  const std::size_t ia = a.id_;
  Matrix out = nodes_[ia].value;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out.data()[i] < 0.0) out.data()[i] = 0.0;
  const bool wg = nodes_[ia].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      const Matrix& in = t.nodes_[ia].value;
      Matrix& dst = t.grad_buffer(ia);
      for (std::size_t i = 0; i < dst.size(); ++i)
        if (in.data()[i] > 0.0) dst.data()[i] += g.data()[i];
    };
  }
  return wrap(id);
}

Var Tape::sigmoid(Var a) {
  check_same_tape(a);
  const std::size_t ia = a.id_;
  const Matrix& in = nodes_[ia].value;
  Matrix out(in.rows(), in.cols());
  fastmath::sigmoid_to(out.data(), in.data(), out.size());
  const bool wg = nodes_[ia].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      const Matrix& y = t.nodes_[id].value;
      Matrix& dst = t.grad_buffer(ia);
      for (std::size_t i = 0; i < dst.size(); ++i) {
        const double s = y.data()[i];
        dst.data()[i] += g.data()[i] * s * (1.0 - s);
      }
    };
  }
  return wrap(id);
}

Var Tape::exp(Var a) {
  check_same_tape(a);
  const std::size_t ia = a.id_;
  const Matrix& in = nodes_[ia].value;
  Matrix out(in.rows(), in.cols());
  fastmath::exp_to(out.data(), in.data(), out.size());
  const bool wg = nodes_[ia].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      const Matrix& y = t.nodes_[id].value;
      Matrix& dst = t.grad_buffer(ia);
      for (std::size_t i = 0; i < dst.size(); ++i)
        dst.data()[i] += g.data()[i] * y.data()[i];
    };
  }
  return wrap(id);
}

Var Tape::log(Var a) {
  check_same_tape(a);
  const std::size_t ia = a.id_;
  Matrix out = nodes_[ia].value;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(out.data()[i] > 0.0)) throw NumericError("log: nonpositive entry");
    out.data()[i] = std::log(out.data()[i]);
  }
  const bool wg = nodes_[ia].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      const Matrix& in = t.nodes_[ia].value;
      Matrix& dst = t.grad_buffer(ia);
      for (std::size_t i = 0; i < dst.size(); ++i)
        dst.data()[i] += g.data()[i] / in.data()[i];
    };
  }
  return wrap(id);
}

Var Tape::cos(Var a) {
  check_same_tape(a);
  const std::size_t ia = a.id_;
  Matrix out = nodes_[ia].value;
  fastmath::cos_inplace(out.data(), out.size());
  const bool wg = nodes_[ia].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      const Matrix& in = t.nodes_[ia].value;
      Matrix& dst = t.grad_buffer(ia);
      fastmath::sub_sin_product(dst.data(), g.data(), in.data(), dst.size());
    };
  }
  return wrap(id);
}

Var Tape::square(Var a) {
  check_same_tape(a);
  const std::size_t ia = a.id_;
  Matrix out = nodes_[ia].value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= out.data()[i];
  const bool wg = nodes_[ia].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      const Matrix& in = t.nodes_[ia].value;
      Matrix& dst = t.grad_buffer(ia);
      for (std::size_t i = 0; i < dst.size(); ++i)
        dst.data()[i] += 2.0 * g.data()[i] * in.data()[i];
    };
  }
  return wrap(id);
}

Var Tape::softplus(Var a) {
  check_same_tape(a);
  const std::size_t ia = a.id_;
  const Matrix& in = nodes_[ia].value;
  Matrix out(in.rows(), in.cols());
  fastmath::softplus_to(out.data(), in.data(), out.size());
  const bool wg = nodes_[ia].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      const Matrix& in = t.nodes_[ia].value;
      Matrix& dst = t.grad_buffer(ia);
      fastmath::add_sigmoid_product(dst.data(), g.data(), in.data(), dst.size());
    };
  }
  return wrap(id);
}

Var Tape::rsqrt(Var a) {
  check_same_tape(a);
  const std::size_t ia = a.id_;
  Matrix out = nodes_[ia].value;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(out.data()[i] > 0.0)) throw NumericError("rsqrt: nonpositive entry");
    out.data()[i] = 1.0 / std::sqrt(out.data()[i]);
  }
  const bool wg = nodes_[ia].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      const Matrix& y = t.nodes_[id].value;
      Matrix& dst = t.grad_buffer(ia);
      for (std::size_t i = 0; i < dst.size(); ++i) {
        const double v = y.data()[i];
        dst.data()[i] += g.data()[i] * (-0.5 * v * v * v);
      }
    };
  }
  return wrap(id);
}

Var Tape::sum(Var a) {
  check_same_tape(a);
  const std::size_t ia = a.id_;
  Matrix out(1, 1, fairbide::sum(nodes_[ia].value));
  const bool wg = nodes_[ia].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia](Tape& t) {
      const double g = t.nodes_[id].grad(0, 0);
      Matrix& dst = t.grad_buffer(ia);
      for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += g;
    };
  }
  return wrap(id);
}

Var Tape::mean(Var a) {
  check_same_tape(a);
  const std::size_t ia = a.id_;
  const double inv = 1.0 / static_cast<double>(nodes_[ia].value.size());
  Matrix out(1, 1, fairbide::sum(nodes_[ia].value) * inv);
  const bool wg = nodes_[ia].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia, inv](Tape& t) {
      const double g = t.nodes_[id].grad(0, 0) * inv;
      Matrix& dst = t.grad_buffer(ia);
      for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += g;
    };
  }
  return wrap(id);
}

Var Tape::frobenius_sq(Var a) {
  check_same_tape(a);
  const std::size_t ia = a.id_;
  Matrix out(1, 1, fairbide::frobenius_sq(nodes_[ia].value));
  const bool wg = nodes_[ia].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia](Tape& t) {
      const double g = 2.0 * t.nodes_[id].grad(0, 0);
      const Matrix& in = t.nodes_[ia].value;
      Matrix& dst = t.grad_buffer(ia);
      for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += g * in.data()[i];
    };
  }
  return wrap(id);
}

Var Tape::transpose(Var a) {
  check_same_tape(a);
  const std::size_t ia = a.id_;
  Matrix out = fairbide::transpose(nodes_[ia].value);
  const bool wg = nodes_[ia].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      Matrix& dst = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) dst(j, i) += g(i, j);
    };
  }
  return wrap(id);
}

Var Tape::row_select(Var a, std::vector<std::size_t> rows) {
  check_same_tape(a);
  const std::size_t ia = a.id_;
  const Matrix& in = nodes_[ia].value;
  Matrix out(rows.size(), in.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= in.rows()) throw DimensionError("row_select: index out of range");
    std::copy(in.row(rows[r]), in.row(rows[r]) + in.cols(), out.row(r));
  }
  const bool wg = nodes_[ia].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia, rows = std::move(rows)](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      Matrix& dst = t.grad_buffer(ia);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        double* d = dst.row(rows[r]);
        const double* s = g.row(r);
        for (std::size_t j = 0; j < g.cols(); ++j) d[j] += s[j];
      }
    };
  }
  return wrap(id);
}

Var Tape::concat_cols(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  const std::size_t ia = a.id_, ib = b.id_;
  const Matrix& ma = nodes_[ia].value;
  const Matrix& mb = nodes_[ib].value;
  if (ma.rows() != mb.rows()) throw DimensionError("concat_cols: row mismatch");
  Matrix out(ma.rows(), ma.cols() + mb.cols());
  for (std::size_t i = 0; i < ma.rows(); ++i) {
    std::copy(ma.row(i), ma.row(i) + ma.cols(), out.row(i));
    std::copy(mb.row(i), mb.row(i) + mb.cols(), out.row(i) + ma.cols());
  }
  const bool wg = nodes_[ia].wants_grad || nodes_[ib].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    const std::size_t ca = ma.cols();
    nodes_[id].backprop = [id, ia, ib, ca](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      if (t.nodes_[ia].wants_grad) {
        Matrix& da = t.grad_buffer(ia);
        for (std::size_t i = 0; i < da.rows(); ++i)
          for (std::size_t j = 0; j < ca; ++j) da(i, j) += g(i, j);
      }
      if (t.nodes_[ib].wants_grad) {
        Matrix& db = t.grad_buffer(ib);
        for (std::size_t i = 0; i < db.rows(); ++i)
          for (std::size_t j = 0; j < db.cols(); ++j) db(i, j) += g(i, ca + j);
      }
    };
  }
  return wrap(id);
}

Var Tape::broadcast_add_row(Var a, Var r) {
  check_same_tape(a);
  check_same_tape(r);
  const std::size_t ia = a.id_, ir = r.id_;
  const Matrix& ma = nodes_[ia].value;
  const Matrix& mr = nodes_[ir].value;
  if (mr.rows() != 1 || mr.cols() != ma.cols())
    throw DimensionError("broadcast_add_row: row vector shape mismatch");
  Matrix out = ma;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    double* orow = out.row(i);
    for (std::size_t j = 0; j < out.cols(); ++j) orow[j] += mr.data()[j];
  }
  const bool wg = nodes_[ia].wants_grad || nodes_[ir].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia, ir](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      if (t.nodes_[ia].wants_grad) t.accumulate(ia, g);
      if (t.nodes_[ir].wants_grad) {
        Matrix& dr = t.grad_buffer(ir);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          const double* grow = g.row(i);
          for (std::size_t j = 0; j < g.cols(); ++j) dr.data()[j] += grow[j];
        }
      }
    };
  }
  return wrap(id);
}

Var Tape::broadcast_mul_row(Var a, Var r) {
  check_same_tape(a);
  check_same_tape(r);
  const std::size_t ia = a.id_, ir = r.id_;
  const Matrix& ma = nodes_[ia].value;
  const Matrix& mr = nodes_[ir].value;
  if (mr.rows() != 1 || mr.cols() != ma.cols())
    throw DimensionError("broadcast_mul_row: row vector shape mismatch");
  Matrix out = ma;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    double* orow = out.row(i);
    for (std::size_t j = 0; j < out.cols(); ++j) orow[j] *= mr.data()[j];
  }
  const bool wg = nodes_[ia].wants_grad || nodes_[ir].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia, ir](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      const Matrix& ma = t.nodes_[ia].value;
      const Matrix& mr = t.nodes_[ir].value;
      if (t.nodes_[ia].wants_grad) {
        Matrix& da = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          const double* grow = g.row(i);
          double* drow = da.row(i);
          for (std::size_t j = 0; j < g.cols(); ++j) drow[j] += grow[j] * mr.data()[j];
        }
      }
      if (t.nodes_[ir].wants_grad) {
        Matrix& dr = t.grad_buffer(ir);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          const double* grow = g.row(i);
          const double* arow = ma.row(i);
          for (std::size_t j = 0; j < g.cols(); ++j) dr.data()[j] += grow[j] * arow[j];
        }
      }
    };
  }
  return wrap(id);
}

Var Tape::col_mean(Var a) {
  check_same_tape(a);
  const std::size_t ia = a.id_;
  Matrix out = fairbide::col_mean(nodes_[ia].value);
  const bool wg = nodes_[ia].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    const double inv = 1.0 / static_cast<double>(nodes_[ia].value.rows());
    nodes_[id].backprop = [id, ia, inv](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      Matrix& dst = t.grad_buffer(ia);
      for (std::size_t i = 0; i < dst.rows(); ++i) {
        double* drow = dst.row(i);
        for (std::size_t j = 0; j < dst.cols(); ++j) drow[j] += g.data()[j] * inv;
      }
    };
  }
  return wrap(id);
}

Var Tape::cos_features(Var proj, const Matrix* phase, double amp) {
  check_same_tape(proj);
  const std::size_t ia = proj.id_;
  const Matrix& in = nodes_[ia].value;
  if (phase->rows() != 1 || phase->cols() != in.cols())
    throw DimensionError("cos_features: phase shape mismatch");
  Matrix out(in.rows(), in.cols());
  fastmath::cos_features(out.data(), in.data(), phase->data(), in.rows(), in.cols(), amp);
  const bool wg = nodes_[ia].wants_grad;
  const std::size_t id = push(std::move(out), wg, {});
  if (wg) {
    nodes_[id].backprop = [id, ia, phase, amp](Tape& t) {
      const Matrix& g = t.nodes_[id].grad;
      const Matrix& in = t.nodes_[ia].value;
      Matrix& dst = t.grad_buffer(ia);
      fastmath::cos_features_backward(dst.data(), g.data(), in.data(), phase->data(),
                                      in.rows(), in.cols(), amp);
    };
  }
  return wrap(id);
}

Var Tape::standardize_cols(Var a, double eps) {
  Var m = col_mean(a);
  Var centered = broadcast_add_row(a, scale(m, -1.0));
  Var variance = col_mean(square(centered));
  Var inv_std = rsqrt(add_scalar(variance, eps));
  return broadcast_mul_row(centered, inv_std);
}

}  // namespace fairbide::ad
