#include "trade/numkit/kernels.hpp"

#include <algorithm>
#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace trade::numkit::kernels {
namespace {

constexpr std::size_t kColumnBlock = 256;

// y[c] += sum_r w[r][c] * g[r] for c in [c0, c1), streaming rows. Each column
// still sums r = 0, 1, ... into a zeroed accumulator before touching y.
void transposed_block(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> g,
                      std::span<double> y, std::size_t c0, std::size_t c1) {
  double acc[kColumnBlock] = {};
  const std::size_t width = c1 - c0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double gr = g[r];
    const double* wr = w.data() + r * cols + c0;
    for (std::size_t c = 0; c < width; ++c) acc[c] += wr[c] * gr;
  }
  for (std::size_t c = 0; c < width; ++c) y[c0 + c] += acc[c];
}

}  // namespace

namespace serial {

void matvec(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

void matvec_transposed_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                           std::span<const double> g, std::span<double> y) {
  for (std::size_t c0 = 0; c0 < cols; c0 += kColumnBlock) {
    transposed_block(w, rows, cols, g, y, c0, std::min(cols, c0 + kColumnBlock));
  }
}

void outer_acc(std::span<double> w, std::size_t rows, std::size_t cols, std::span<const double> g,
               std::span<const double> x) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    double* wr = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) wr[c] += gr * x[c];
  }
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

}  // namespace serial

namespace parallel {

void matvec(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y) {
  const auto n = static_cast<long>(rows);
#pragma omp parallel for schedule(static)
  for (long r = 0; r < n; ++r) {
    const double* wr = w.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

void matvec_transposed_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                           std::span<const double> g, std::span<double> y) {
  const auto blocks = static_cast<long>((cols + kColumnBlock - 1) / kColumnBlock);
#pragma omp parallel for schedule(static)
  for (long b = 0; b < blocks; ++b) {
    const std::size_t c0 = static_cast<std::size_t>(b) * kColumnBlock;
    transposed_block(w, rows, cols, g, y, c0, std::min(cols, c0 + kColumnBlock));
  }
}

void outer_acc(std::span<double> w, std::size_t rows, std::size_t cols, std::span<const double> g,
               std::span<const double> x) {
  const auto n = static_cast<long>(rows);
#pragma omp parallel for schedule(static)
  for (long r = 0; r < n; ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    double* wr = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) wr[c] += gr * x[c];
  }
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  const auto n = static_cast<long>(x.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace parallel

namespace {

std::atomic<std::size_t> g_threshold{1u << 16};

bool use_parallel(std::size_t elements) {
#ifdef _OPENMP
  return elements >= g_threshold.load(std::memory_order_relaxed) && !omp_in_parallel() &&
         omp_get_max_threads() > 1;
#else
  (void)elements;
  return false;
#endif
}

}  // namespace

std::size_t parallel_threshold() { return g_threshold.load(); }
void set_parallel_threshold(std::size_t elements) { g_threshold.store(elements); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void matvec(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y) {
  if (use_parallel(rows * cols)) {
    parallel::matvec(w, rows, cols, x, y);
  } else {
    serial::matvec(w, rows, cols, x, y);
  }
}

void matvec_transposed_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                           std::span<const double> g, std::span<double> y) {
  if (use_parallel(rows * cols)) {
    parallel::matvec_transposed_acc(w, rows, cols, g, y);
  } else {
    serial::matvec_transposed_acc(w, rows, cols, g, y);
  }
}

void outer_acc(std::span<double> w, std::size_t rows, std::size_t cols, std::span<const double> g,
               std::span<const double> x) {
  if (use_parallel(rows * cols)) {
    parallel::outer_acc(w, rows, cols, g, x);
  } else {
    serial::outer_acc(w, rows, cols, g, x);
  }
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  if (use_parallel(x.size())) {
    parallel::axpy(a, x, y);
  } else {
    serial::axpy(a, x, y);
  }
}

}  // namespace trade::numkit::kernels
