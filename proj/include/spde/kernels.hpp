#pragma once

#include <cstddef>
#include <vector>

namespace spde {

// Every data-parallel kernel has a serial reference path; both produce
// bit-identical results because each output is reduced in a fixed order.
enum class Exec { Serial, Parallel };

void set_threads(int n);
int max_threads();

namespace kernels {

// True when a parallel region may be opened (not already inside one).
bool can_fork();

// out[o, r, i] = sum_c A[r * cols + c] * in[o, c, i] along `axis`.
void apply_axis(const double* in, const std::vector<int>& shape, int axis, const double* A, int rows,
                double* out, Exec exec);

// Applies A along every axis in turn; shape is the input shape, all axes of
// length cols = shape[axis]. Result has `rows` entries per axis.
void separable_apply(const double* in, const std::vector<int>& shape, const double* A, int rows, double* out,
                     std::vector<double>& scratch, Exec exec);

}  // namespace kernels
}  // namespace spde
