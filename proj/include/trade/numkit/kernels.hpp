#pragma once

#include <cstddef>
#include <span>

// Dense linear-algebra kernels behind every numkit op.
//
// Two implementations of each kernel exist. `serial` is the reference and is
// what the tests compare against; `parallel` splits the outer loop across
// OpenMP threads. Each output element is reduced in the same order by both, so
// results are bitwise identical. The unqualified functions dispatch to the
// parallel version only for problems above `parallel_threshold()` elements and
// never from inside an enclosing parallel region.
namespace trade::numkit::kernels {

namespace serial {
/// y = W x, W is rows x cols row-major.
void matvec(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y);
/// y += W^T g
void matvec_transposed_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                           std::span<const double> g, std::span<double> y);
/// W += g x^T
void outer_acc(std::span<double> w, std::size_t rows, std::size_t cols, std::span<const double> g,
               std::span<const double> x);
/// y += a x
void axpy(double a, std::span<const double> x, std::span<double> y);
}  // namespace serial

namespace parallel {
void matvec(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y);
void matvec_transposed_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                           std::span<const double> g, std::span<double> y);
void outer_acc(std::span<double> w, std::size_t rows, std::size_t cols, std::span<const double> g,
               std::span<const double> x);
void axpy(double a, std::span<const double> x, std::span<double> y);
}  // namespace parallel

std::size_t parallel_threshold();
void set_parallel_threshold(std::size_t elements);
int max_threads();

void matvec(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y);
void matvec_transposed_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                           std::span<const double> g, std::span<double> y);
void outer_acc(std::span<double> w, std::size_t rows, std::size_t cols, std::span<const double> g,
               std::span<const double> x);
void axpy(double a, std::span<const double> x, std::span<double> y);

}  // namespace trade::numkit::kernels
