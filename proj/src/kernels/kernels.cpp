#include "difflab/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace difflab::kernels {

namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void lincomb_scalar(double a, const double* x, double b, const double* y,
                    double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void matvec_scalar(const double* w, const double* x, double* y,
                   std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = w + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

void matvec_t_scalar(const double* w, const double* x, double* y,
                     std::size_t rows, std::size_t cols) {
  for (std::size_t c = 0; c < cols; ++c) y[c] = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = w + r * cols;
    const double xr = x[r];
    for (std::size_t c = 0; c < cols; ++c) y[c] += xr * row[c];
  }
}

void ger_scalar(double* a_mat, double a, const double* x, const double* y,
                std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = a_mat + r * cols;
    const double ax = a * x[r];
    for (std::size_t c = 0; c < cols; ++c) row[c] += ax * y[c];
  }
}

double sumsq_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

void adam_scalar(double* w, double* m, double* v, const double* g,
                 std::size_t n, double lr, double b1, double b2, double eps,
                 double inv_bc1, double inv_bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    const double mhat = m[i] * inv_bc1;
    const double vhat = v[i] * inv_bc2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

constexpr Backend kScalar = {
    "scalar",      dot_scalar, axpy_scalar,  lincomb_scalar, matvec_scalar,
    matvec_t_scalar, ger_scalar, sumsq_scalar, adam_scalar,
};

std::atomic<const Backend*> g_active{nullptr};

const Backend* pick_auto() {
  if (const Backend* b = avx2_backend()) return b;
  return &kScalar;
}

}  // namespace

const Backend& scalar_backend() { return kScalar; }

#if !(defined(__x86_64__) || defined(_M_X64))
const Backend* avx2_backend() { return nullptr; }
#endif

const Backend& active() {
  const Backend* b = g_active.load(std::memory_order_acquire);
  if (!b) {
    const char* env = std::getenv("DIFFLAB_KERNELS");
    b = env ? nullptr : pick_auto();
    if (env) {
      std::string_view want(env);
      if (want == "scalar") b = &kScalar;
      else if (want == "avx2" && avx2_backend()) b = avx2_backend();
      else b = pick_auto();
    }
    g_active.store(b, std::memory_order_release);
  }
  return *b;
}

void select_backend(std::string_view name) {
  if (name == "auto") {
    g_active.store(pick_auto(), std::memory_order_release);
  } else if (name == "scalar") {
    g_active.store(&kScalar, std::memory_order_release);
  } else if (name == "avx2") {
    const Backend* b = avx2_backend();
    if (!b) throw std::runtime_error("avx2 backend unavailable on this cpu");
    g_active.store(b, std::memory_order_release);
  } else {
    throw std::invalid_argument("unknown kernel backend: " + std::string(name));
  }
}

}  // namespace difflab::kernels
