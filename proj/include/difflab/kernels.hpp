#pragma once

#include <cstddef>
#include <string_view>

// Dense double-precision kernels behind every hot loop (MLP forward/backward,
// Adam updates, diffusion mixing, Monte Carlo reductions).  Each kernel has a
// scalar reference implementation and, on x86-64 with AVX2+FMA, a vectorized
// variant selected once at startup.  The two backends agree to floating-point
// reassociation error only; within one process the selection never changes,
// so repeated runs are bit-identical.

namespace difflab::kernels {

struct Backend {
  const char* name;

  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);

  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);

  // out[i] = a * x[i] + b * y[i]
  void (*lincomb)(double a, const double* x, double b, const double* y,
                  double* out, std::size_t n);

  // y = W x, W row-major rows x cols
  void (*matvec)(const double* w, const double* x, double* y,
                 std::size_t rows, std::size_t cols);

  // y = W^T x, W row-major rows x cols, y has length cols
  void (*matvec_t)(const double* w, const double* x, double* y,
                   std::size_t rows, std::size_t cols);

  // A += a * x y^T, A row-major rows x cols
  void (*ger)(double* a_mat, double a, const double* x, const double* y,
              std::size_t rows, std::size_t cols);

  // sum_i x[i]^2
  double (*sumsq)(const double* x, std::size_t n);

  // Adam step over one parameter block:
  //   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
  //   w -= lr * (m * inv_bc1) / (sqrt(v * inv_bc2) + eps)
  // inv_bc1/inv_bc2 are the precomputed bias corrections 1/(1-b^step).
  void (*adam_update)(double* w, double* m, double* v, const double* g,
                      std::size_t n, double lr, double b1, double b2,
                      double eps, double inv_bc1, double inv_bc2);
};

const Backend& scalar_backend();

// nullptr when the build or the running CPU lacks AVX2+FMA.
const Backend* avx2_backend();

// Backend in use; defaults to the best available ("auto").
const Backend& active();

// Force a backend by name ("scalar", "avx2", "auto").  Throws
// std::invalid_argument for unknown names and std::runtime_error when the
// requested backend is unavailable.  Intended for tests and benchmarks.
void select_backend(std::string_view name);

}  // namespace difflab::kernels
