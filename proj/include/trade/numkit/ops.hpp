#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "trade/numkit/tape.hpp"

namespace trade::numkit {

/// Numerically stable softmax (max-subtracted). Throws NumericError on NaN/Inf
/// input and ShapeError on empty input.
std::vector<double> softmax(std::span<const double> v);

double sigmoid(double x);

// Differentiable ops. Every op validates shapes and throws ShapeError.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// v * s for a scalar node s.
Var mul_scalar(Var v, Var s);
/// 1 - a, elementwise.
Var one_minus(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
/// Elementwise product with a constant mask (dropout).
Var mask(Var a, const Tensor& m);

/// W (m x n) times x (n) -> m.
Var matvec(Var w, Var x);
/// M^T p for M (r x c), p (r) -> c.
Var matvec_transposed(Var m, Var p);
/// Scalar dot product of two equal-length vectors.
Var dot(Var a, Var b);

Var softmax(Var v);
/// -log(max(x, floor)) for a scalar x. Increments `*clamped` when the floor
/// is hit; the gradient is zero in that case.
Var neg_log(Var x, double floor = 1e-12, int* clamped = nullptr);

Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
Var slice(Var v, std::size_t offset, std::size_t length);
/// Stacks equal-length vectors into a (rows.size() x n) matrix.
Var stack_rows(std::span<const Var> rows);
/// Row i of a matrix as a vector (embedding lookup).
Var row(Var m, std::size_t i);
/// Element i of a vector as a scalar.
Var pick(Var v, std::size_t i);
/// Elementwise sum of same-shaped nodes.
Var sum(std::span<const Var> parts);
/// Sum of all elements as a scalar.
Var sum_elements(Var v);
/// out[ids[i]] += v[i]; out has length `size`.
Var scatter_add(Var v, std::span<const std::size_t> ids, std::size_t size);
/// Zero-pads a vector to `size`.
Var pad(Var v, std::size_t size);

/// Fused GRU step. Parameter layout: W is (3h x in), U is (3h x h), b is 3h;
/// row blocks are update gate z, reset gate r, candidate n:
///   z = sig(W_z x + U_z h + b_z), r = sig(W_r x + U_r h + b_r)
///   n = tanh(W_n x + U_n (r*h) + b_n),  h' = (1 - z) * h + z * n
Var gru_cell(Var x, Var h, Var w, Var u, Var b);

}  // namespace trade::numkit
