#include "spde/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstring>
#include <stdexcept>

namespace spde {

void set_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

int max_threads() { return omp_get_max_threads(); }

namespace kernels {

bool can_fork() { return !omp_in_parallel() && omp_get_max_threads() > 1; }

namespace {

void axis_line(const double* in, int axis_len, std::size_t inner, const double* A, int rows, double* out,
               std::size_t o, int r) {
  const double* arow = A + static_cast<std::size_t>(r) * axis_len;
  const double* src = in + o * axis_len * inner;
  double* dst = out + (o * rows + r) * inner;
  for (std::size_t i = 0; i < inner; ++i) dst[i] = 0.0;
  for (int c = 0; c < axis_len; ++c) {
    const double a = arow[c];
    if (a == 0.0) continue;
    const double* s = src + static_cast<std::size_t>(c) * inner;
    for (std::size_t i = 0; i < inner; ++i) dst[i] += a * s[i];
  }
}

}  // namespace

void apply_axis(const double* in, const std::vector<int>& shape, int axis, const double* A, int rows,
                double* out, Exec exec) {
  if (axis < 0 || axis >= static_cast<int>(shape.size())) throw std::out_of_range("apply_axis: axis");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const int len = shape[axis];
  const long long total = static_cast<long long>(outer) * rows;

  if (exec == Exec::Parallel && can_fork() && total * len * static_cast<long long>(inner) > 4096) {
#pragma omp parallel for schedule(static)
    for (long long t = 0; t < total; ++t)
      axis_line(in, len, inner, A, rows, out, static_cast<std::size_t>(t / rows), static_cast<int>(t % rows));
  } else {
    for (long long t = 0; t < total; ++t)
      axis_line(in, len, inner, A, rows, out, static_cast<std::size_t>(t / rows), static_cast<int>(t % rows));
  }
}

void separable_apply(const double* in, const std::vector<int>& shape, const double* A, int rows, double* out,
                     std::vector<double>& scratch, Exec exec) {
  const int d = static_cast<int>(shape.size());
  std::vector<int> cur = shape;
  std::size_t maxsz = 1, insz = 1;
  for (int v : shape) insz *= v;
  // intermediate sizes
  {
    std::vector<int> s = shape;
    std::size_t m = insz;
    for (int a = 0; a < d; ++a) {
      s[a] = rows;
      std::size_t sz = 1;
      for (int v : s) sz *= v;
      m = std::max(m, sz);
    }
    maxsz = m;
  }
  if (d == 1) {
    apply_axis(in, cur, 0, A, rows, out, exec);
    return;
  }
  scratch.resize(2 * maxsz);
  double* bufs[2] = {scratch.data(), scratch.data() + maxsz};
  const double* src = in;
  for (int a = 0; a < d; ++a) {
    double* dst = (a == d - 1) ? out : bufs[a % 2];
    apply_axis(src, cur, a, A, rows, dst, exec);
    cur[a] = rows;
    src = dst;
  }
}

}  // namespace kernels
}  // namespace spde
