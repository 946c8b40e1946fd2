#include "trade/numkit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "trade/errors.hpp"
#include "trade/numkit/kernels.hpp"

namespace trade::numkit {

namespace {

const Tensor& val(Var v) { return v.tape->value(v); }

void require_vector(const Tensor& t, const char* op) {
  if (t.rank() != 1) throw ShapeError(std::string(op) + ": expected a vector, got " + shape_string(t.shape()));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

void require_scalar(const Tensor& t, const char* op) {
  if (t.size() != 1) throw ShapeError(std::string(op) + ": expected a scalar, got " + shape_string(t.shape()));
}

// Adds g into the gradient of `v` when it participates in differentiation.
void accumulate(Tape& t, Var v, std::span<const double> g) {
  if (!t.requires_grad(v)) return;
  kernels::serial::axpy(1.0, g, t.grad(v).data());
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double sigmoid(double x) { return sigmoid_scalar(x); }

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw ShapeError("softmax of an empty vector");
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError("softmax input is not finite");
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

Var add(Var a, Var b) {
  require_same_shape(val(a), val(b), "add");
  Tensor out = val(a);
  kernels::serial::axpy(1.0, val(b).data(), out.data());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    accumulate(t, a, g.data());
    accumulate(t, b, g.data());
  });
}

Var sub(Var a, Var b) {
  require_same_shape(val(a), val(b), "sub");
  Tensor out = val(a);
  kernels::serial::axpy(-1.0, val(b).data(), out.data());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    accumulate(t, a, g.data());
    if (t.requires_grad(b)) kernels::serial::axpy(-1.0, g.data(), t.grad(b).data());
  });
}

Var mul(Var a, Var b) {
  require_same_shape(val(a), val(b), "mul");
  Tensor out = val(a);
  const Tensor& bv = val(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = val(a);
  for (double& x : out.storage()) x *= factor;
  return a.tape->record(std::move(out), {a}, [a, factor](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) kernels::serial::axpy(factor, g.data(), t.grad(a).data());
  });
}

Var mul_scalar(Var v, Var s) {
  require_scalar(val(s), "mul_scalar");
  const double sv = val(s).item();
  Tensor out = val(v);
  for (double& x : out.storage()) x *= sv;
  return v.tape->record(std::move(out), {v, s}, [v, s](Tape& t, const Tensor& g) {
    const double sv = t.value(s).item();
    if (t.requires_grad(v)) kernels::serial::axpy(sv, g.data(), t.grad(v).data());
    if (t.requires_grad(s)) {
      const Tensor& vv = t.value(v);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * vv[i];
      t.grad(s)[0] += acc;
    }
  });
}

Var one_minus(Var a) {
  Tensor out = val(a);
  for (double& x : out.storage()) x = 1.0 - x;
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) kernels::serial::axpy(-1.0, g.data(), t.grad(a).data());
  });
}

Var sigmoid(Var a) {
  Tensor out = val(a);
  for (double& x : out.storage()) x = sigmoid_scalar(x);
  Tensor y = out;
  return a.tape->record(std::move(out), {a}, [a, y = std::move(y)](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var tanh(Var a) {
  Tensor out = val(a);
  for (double& x : out.storage()) x = std::tanh(x);
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    if (!t.requires_grad(a)) return;
    const Tensor& av = t.value(a);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = std::tanh(av[i]);
      ga[i] += g[i] * (1.0 - y * y);
    }
  });
}

Var mask(Var a, const Tensor& m) {
  require_same_shape(val(a), m, "mask");
  Tensor out = val(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= m[i];
  return a.tape->record(std::move(out), {a}, [a, m](Tape& t, const Tensor& g) {
    if (!t.requires_grad(a)) return;
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * m[i];
  });
}

Var matvec(Var w, Var x) {
  const Tensor& wv = val(w);
  const Tensor& xv = val(x);
  require_matrix(wv, "matvec");
  require_vector(xv, "matvec");
  if (wv.cols() != xv.size()) {
    throw ShapeError("matvec: " + shape_string(wv.shape()) + " times " + shape_string(xv.shape()));
  }
  Tensor out(Shape{wv.rows()});
  kernels::matvec(wv.data(), wv.rows(), wv.cols(), xv.data(), out.data());
  return w.tape->record(std::move(out), {w, x}, [w, x](Tape& t, const Tensor& g) {
    const Tensor& wv = t.value(w);
    if (t.requires_grad(w)) kernels::outer_acc(t.grad(w).data(), wv.rows(), wv.cols(), g.data(), t.value(x).data());
    if (t.requires_grad(x)) kernels::matvec_transposed_acc(wv.data(), wv.rows(), wv.cols(), g.data(), t.grad(x).data());
  });
}

Var matvec_transposed(Var m, Var p) {
  const Tensor& mv = val(m);
  const Tensor& pv = val(p);
  require_matrix(mv, "matvec_transposed");
  require_vector(pv, "matvec_transposed");
  if (mv.rows() != pv.size()) {
    throw ShapeError("matvec_transposed: " + shape_string(mv.shape()) + " with " + shape_string(pv.shape()));
  }
  Tensor out(Shape{mv.cols()});
  kernels::matvec_transposed_acc(mv.data(), mv.rows(), mv.cols(), pv.data(), out.data());
  return m.tape->record(std::move(out), {m, p}, [m, p](Tape& t, const Tensor& g) {
    const Tensor& mv = t.value(m);
    // out = M^T p  =>  dM += p g^T, dp += M g
    if (t.requires_grad(m)) kernels::outer_acc(t.grad(m).data(), mv.rows(), mv.cols(), t.value(p).data(), g.data());
    if (t.requires_grad(p)) {
      Tensor tmp(Shape{mv.rows()});
      kernels::matvec(mv.data(), mv.rows(), mv.cols(), g.data(), tmp.data());
      kernels::serial::axpy(1.0, tmp.data(), t.grad(p).data());
    }
  });
}

Var dot(Var a, Var b) {
  require_vector(val(a), "dot");
  require_same_shape(val(a), val(b), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < val(a).size(); ++i) acc += val(a)[i] * val(b)[i];
  return a.tape->record(Tensor::scalar(acc), {a, b}, [a, b](Tape& t, const Tensor& g) {
    const double gs = g[0];
    if (t.requires_grad(a)) kernels::serial::axpy(gs, t.value(b).data(), t.grad(a).data());
    if (t.requires_grad(b)) kernels::serial::axpy(gs, t.value(a).data(), t.grad(b).data());
  });
}

Var softmax(Var v) {
  require_vector(val(v), "softmax");
  Tensor out = Tensor::vector(softmax(val(v).data()));
  Tensor p = out;
  return v.tape->record(std::move(out), {v}, [v, p = std::move(p)](Tape& t, const Tensor& g) {
    double inner = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) inner += g[i] * p[i];
    Tensor& gv = t.grad(v);
    for (std::size_t i = 0; i < p.size(); ++i) gv[i] += p[i] * (g[i] - inner);
  });
}

Var neg_log(Var x, double floor, int* clamped) {
  require_scalar(val(x), "neg_log");
  const double xv = val(x).item();
  if (std::isnan(xv)) throw NumericError("neg_log of NaN");
  const bool hit = xv < floor;
  if (hit && clamped) ++*clamped;
  const double used = hit ? floor : xv;
  return x.tape->record(Tensor::scalar(-std::log(used)), {x}, [x, hit, used](Tape& t, const Tensor& g) {
    if (hit || !t.requires_grad(x)) return;
    t.grad(x)[0] -= g[0] / used;
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  std::vector<double> data;
  std::vector<std::size_t> sizes;
  for (const Var& p : parts) {
    require_vector(val(p), "concat");
    data.insert(data.end(), val(p).storage().begin(), val(p).storage().end());
    sizes.push_back(val(p).size());
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape->record(Tensor::vector(std::move(data)), inputs, [inputs, sizes](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (t.requires_grad(inputs[k])) {
        kernels::serial::axpy(1.0, g.data().subspan(off, sizes[k]), t.grad(inputs[k]).data());
      }
      off += sizes[k];
    }
  });
}

Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

Var slice(Var v, std::size_t offset, std::size_t length) {
  require_vector(val(v), "slice");
  if (offset + length > val(v).size()) throw ShapeError("slice out of range");
  std::vector<double> data(val(v).storage().begin() + static_cast<std::ptrdiff_t>(offset),
                           val(v).storage().begin() + static_cast<std::ptrdiff_t>(offset + length));
  return v.tape->record(Tensor::vector(std::move(data)), {v}, [v, offset, length](Tape& t, const Tensor& g) {
    if (!t.requires_grad(v)) return;
    kernels::serial::axpy(1.0, g.data(), t.grad(v).data().subspan(offset, length));
  });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack_rows of nothing");
  const std::size_t n = val(rows[0]).size();
  std::vector<double> data;
  data.reserve(rows.size() * n);
  for (const Var& r : rows) {
    require_vector(val(r), "stack_rows");
    if (val(r).size() != n) throw ShapeError("stack_rows: ragged rows");
    data.insert(data.end(), val(r).storage().begin(), val(r).storage().end());
  }
  std::vector<Var> inputs(rows.begin(), rows.end());
  return rows[0].tape->record(Tensor::matrix(rows.size(), n, std::move(data)), inputs,
                              [inputs, n](Tape& t, const Tensor& g) {
                                for (std::size_t k = 0; k < inputs.size(); ++k) {
                                  if (t.requires_grad(inputs[k])) {
                                    kernels::serial::axpy(1.0, g.row(k), t.grad(inputs[k]).data());
                                  }
                                }
                              });
}

Var row(Var m, std::size_t i) {
  require_matrix(val(m), "row");
  if (i >= val(m).rows()) throw IndexError("row index " + std::to_string(i) + " out of range");
  auto r = val(m).row(i);
  return m.tape->record(Tensor::vector(std::vector<double>(r.begin(), r.end())), {m},
                        [m, i](Tape& t, const Tensor& g) {
                          if (t.requires_grad(m)) kernels::serial::axpy(1.0, g.data(), t.grad(m).row(i));
                        });
}

Var pick(Var v, std::size_t i) {
  require_vector(val(v), "pick");
  if (i >= val(v).size()) throw IndexError("pick index " + std::to_string(i) + " out of range");
  return v.tape->record(Tensor::scalar(val(v)[i]), {v}, [v, i](Tape& t, const Tensor& g) {
    if (t.requires_grad(v)) t.grad(v)[i] += g[0];
  });
}

Var sum(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("sum of nothing");
  Tensor out = val(parts[0]);
  for (std::size_t k = 1; k < parts.size(); ++k) {
    require_same_shape(out, val(parts[k]), "sum");
    kernels::serial::axpy(1.0, val(parts[k]).data(), out.data());
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape->record(std::move(out), inputs, [inputs](Tape& t, const Tensor& g) {
    for (const Var& in : inputs) accumulate(t, in, g.data());
  });
}

Var sum_elements(Var v) {
  double acc = 0.0;
  for (double x : val(v).storage()) acc += x;
  return v.tape->record(Tensor::scalar(acc), {v}, [v](Tape& t, const Tensor& g) {
    if (!t.requires_grad(v)) return;
    for (double& x : t.grad(v).storage()) x += g[0];
  });
}

Var scatter_add(Var v, std::span<const std::size_t> ids, std::size_t size) {
  require_vector(val(v), "scatter_add");
  if (ids.size() != val(v).size()) throw ShapeError("scatter_add: id count differs from vector length");
  Tensor out(Shape{size});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= size) throw IndexError("scatter_add target id out of range");
    out[ids[i]] += val(v)[i];
  }
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return v.tape->record(std::move(out), {v}, [v, idv = std::move(idv)](Tape& t, const Tensor& g) {
    if (!t.requires_grad(v)) return;
    Tensor& gv = t.grad(v);
    for (std::size_t i = 0; i < idv.size(); ++i) gv[i] += g[idv[i]];
  });
}

Var pad(Var v, std::size_t size) {
  require_vector(val(v), "pad");
  const std::size_t n = val(v).size();
  if (size < n) throw ShapeError("pad: target smaller than input");
  Tensor out(Shape{size});
  std::copy(val(v).storage().begin(), val(v).storage().end(), out.storage().begin());
  return v.tape->record(std::move(out), {v}, [v, n](Tape& t, const Tensor& g) {
    if (t.requires_grad(v)) kernels::serial::axpy(1.0, g.data().first(n), t.grad(v).data());
  });
}

Var gru_cell(Var x, Var h, Var w, Var u, Var b) {
  const Tensor& xv = val(x);
  const Tensor& hv = val(h);
  const Tensor& wv = val(w);
  const Tensor& uv = val(u);
  const Tensor& bv = val(b);
  require_vector(xv, "gru_cell");
  require_vector(hv, "gru_cell");
  require_matrix(wv, "gru_cell");
  require_matrix(uv, "gru_cell");
  require_vector(bv, "gru_cell");
  const std::size_t hd = hv.size();
  const std::size_t in = xv.size();
  if (wv.rows() != 3 * hd || wv.cols() != in || uv.rows() != 3 * hd || uv.cols() != hd || bv.size() != 3 * hd) {
    throw ShapeError("gru_cell: W " + shape_string(wv.shape()) + ", U " + shape_string(uv.shape()) + ", b " +
                     shape_string(bv.shape()) + " inconsistent with x " + shape_string(xv.shape()) + ", h " +
                     shape_string(hv.shape()));
  }

  // gx = W x + b for all three blocks; gh = U_zr h for the two gates.
  std::vector<double> gx(3 * hd);
  kernels::matvec(wv.data(), 3 * hd, in, xv.data(), gx);
  for (std::size_t i = 0; i < 3 * hd; ++i) gx[i] += bv[i];
  std::vector<double> gh(2 * hd);
  kernels::matvec(uv.data().first(2 * hd * hd), 2 * hd, hd, hv.data(), gh);

  std::vector<double> z(hd), r(hd), rh(hd), n(hd);
  for (std::size_t i = 0; i < hd; ++i) {
    z[i] = sigmoid_scalar(gx[i] + gh[i]);
    r[i] = sigmoid_scalar(gx[hd + i] + gh[hd + i]);
    rh[i] = r[i] * hv[i];
  }
  std::vector<double> un(hd);
  kernels::matvec(uv.data().subspan(2 * hd * hd, hd * hd), hd, hd, rh, un);
  Tensor out(Shape{hd});
  for (std::size_t i = 0; i < hd; ++i) {
    n[i] = std::tanh(gx[2 * hd + i] + un[i]);
    out[i] = (1.0 - z[i]) * hv[i] + z[i] * n[i];
  }

  return x.tape->record(
      std::move(out), {x, h, w, u, b},
      [x, h, w, u, b, hd, in, z = std::move(z), r = std::move(r), rh = std::move(rh), n = std::move(n)](
          Tape& t, const Tensor& g) {
        const Tensor& hv = t.value(h);
        const Tensor& uv = t.value(u);
        const Tensor& wv = t.value(w);
        std::vector<double> da(3 * hd);  // pre-activation grads [z; r; n]
        std::vector<double> dh(hd);
        for (std::size_t i = 0; i < hd; ++i) {
          const double dz = g[i] * (n[i] - hv[i]);
          const double dn = g[i] * z[i];
          dh[i] = g[i] * (1.0 - z[i]);
          da[i] = dz * z[i] * (1.0 - z[i]);
          da[2 * hd + i] = dn * (1.0 - n[i] * n[i]);
        }
        // d(r*h) = U_n^T da_n
        std::vector<double> drh(hd, 0.0);
        const auto un = uv.data().subspan(2 * hd * hd, hd * hd);
        kernels::matvec_transposed_acc(un, hd, hd, std::span<const double>(da).subspan(2 * hd, hd), drh);
        for (std::size_t i = 0; i < hd; ++i) {
          const double dr = drh[i] * hv[i];
          dh[i] += drh[i] * r[i];
          da[hd + i] = dr * r[i] * (1.0 - r[i]);
        }
        const std::span<const double> da_zr = std::span<const double>(da).first(2 * hd);
        const std::span<const double> da_n = std::span<const double>(da).subspan(2 * hd, hd);
        kernels::matvec_transposed_acc(uv.data().first(2 * hd * hd), 2 * hd, hd, da_zr, dh);

        if (t.requires_grad(w)) kernels::outer_acc(t.grad(w).data(), 3 * hd, in, da, t.value(x).data());
        if (t.requires_grad(b)) kernels::serial::axpy(1.0, da, t.grad(b).data());
        if (t.requires_grad(u)) {
          auto gu = t.grad(u).data();
          kernels::outer_acc(gu.first(2 * hd * hd), 2 * hd, hd, da_zr, hv.data());
          kernels::outer_acc(gu.subspan(2 * hd * hd, hd * hd), hd, hd, da_n, rh);
        }
        if (t.requires_grad(x)) kernels::matvec_transposed_acc(wv.data(), 3 * hd, in, da, t.grad(x).data());
        if (t.requires_grad(h)) kernels::serial::axpy(1.0, dh, t.grad(h).data());
      });
}

}  // namespace trade::numkit
