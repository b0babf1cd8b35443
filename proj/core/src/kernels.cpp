#include "sdsa/ndmath.hpp"

#include <algorithm>
#include <cmath>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#endif

namespace sdsa::nd {

namespace {

// Column blocks of this width keep their accumulators in vector registers.
constexpr std::size_t kBlock = 32;

#if defined(__AVX2__) && defined(__FMA__)

// e^x on four lanes: x = k·ln2 + r with |r| ≤ ln2/2, degree-13 Taylor
// polynomial for e^r, 2^k assembled in the exponent bits. Inputs are clamped
// so 2^k stays normal.
inline __m256d exp4(__m256d x) noexcept {
  x = _mm256_min_pd(_mm256_max_pd(x, _mm256_set1_pd(-708.0)), _mm256_set1_pd(709.0));
  const __m256d k =
      _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634)),
                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(k, _mm256_set1_pd(6.93147180369123816490e-01), x);
  r = _mm256_fnmadd_pd(k, _mm256_set1_pd(1.90821492927058770002e-10), r);
  static constexpr double c[] = {1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0,
                                 1.0 / 3628800.0,    1.0 / 362880.0,    1.0 / 40320.0,
                                 1.0 / 5040.0,       1.0 / 720.0,       1.0 / 120.0,
                                 1.0 / 24.0,         1.0 / 6.0,         0.5,
                                 1.0,                1.0};
  __m256d p = _mm256_set1_pd(c[0]);
  for (std::size_t i = 1; i < std::size(c); ++i) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(c[i]));
  const __m256i ki = _mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(k));
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(ki, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
}

inline __m256d sigmoid4(__m256d x) noexcept {
  const __m256d one = _mm256_set1_pd(1.0);
  return _mm256_div_pd(one, _mm256_add_pd(one, exp4(_mm256_sub_pd(_mm256_setzero_pd(), x))));
}

inline __m256d tanh4(__m256d x) noexcept {
  const __m256d sign = _mm256_set1_pd(-0.0);
  const __m256d a = _mm256_andnot_pd(sign, x);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d e = exp4(_mm256_mul_pd(a, _mm256_set1_pd(-2.0)));
  const __m256d t = _mm256_div_pd(_mm256_sub_pd(one, e), _mm256_add_pd(one, e));
  return _mm256_or_pd(t, _mm256_and_pd(sign, x));
}

// Applies f to every element; the tail goes through a padded lane block so
// each element sees the same arithmetic wherever it sits.
template <class F>
void map4(double* x, std::size_t n, F f) noexcept {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, f(_mm256_loadu_pd(x + i)));
  if (i < n) {
    alignas(32) double tail[4] = {0.0, 0.0, 0.0, 0.0};
    std::copy(x + i, x + n, tail);
    _mm256_store_pd(tail, f(_mm256_load_pd(tail)));
    std::copy(tail, tail + (n - i), x + i);
  }
}

#endif

}  // namespace

void sigmoid_inplace(double* x, std::size_t n) noexcept {
#if defined(__AVX2__) && defined(__FMA__)
  map4(x, n, sigmoid4);
#else
  for (std::size_t i = 0; i < n; ++i) x[i] = sigmoid(x[i]);
#endif
}

void tanh_inplace(double* x, std::size_t n) noexcept {
#if defined(__AVX2__) && defined(__FMA__)
  map4(x, n, tanh4);
#else
  for (std::size_t i = 0; i < n; ++i) x[i] = std::tanh(x[i]);
#endif
}

void gemv_transposed_acc(const double* wt, std::size_t in, std::size_t out, const double* x,
                         double* y) noexcept {
  std::size_t i0 = 0;
  for (; i0 + kBlock <= out; i0 += kBlock) {
    double acc[kBlock];
    for (std::size_t k = 0; k < kBlock; ++k) acc[k] = y[i0 + k];
    for (std::size_t j = 0; j < in; ++j) {
      const double xj = x[j];
      const double* col = wt + j * out + i0;
      for (std::size_t k = 0; k < kBlock; ++k) acc[k] += col[k] * xj;
    }
    for (std::size_t k = 0; k < kBlock; ++k) y[i0 + k] = acc[k];
  }
  for (std::size_t j = 0; j < in; ++j) {
    const double xj = x[j];
    const double* col = wt + j * out;
    for (std::size_t i = i0; i < out; ++i) y[i] += col[i] * xj;
  }
}

void gemv_t_acc(const double* w, std::size_t rows, std::size_t cols, const double* g,
                double* y) noexcept {
  std::size_t j0 = 0;
  for (; j0 + kBlock <= cols; j0 += kBlock) {
    double acc[kBlock];
    for (std::size_t k = 0; k < kBlock; ++k) acc[k] = y[j0 + k];
    for (std::size_t i = 0; i < rows; ++i) {
      const double gi = g[i];
      const double* row = w + i * cols + j0;
      for (std::size_t k = 0; k < kBlock; ++k) acc[k] += row[k] * gi;
    }
    for (std::size_t k = 0; k < kBlock; ++k) y[j0 + k] = acc[k];
  }
  for (std::size_t i = 0; i < rows; ++i) {
    const double gi = g[i];
    const double* row = w + i * cols;
    for (std::size_t j = j0; j < cols; ++j) y[j] += row[j] * gi;
  }
}

void outer_acc(const double* a, std::size_t rows, const double* b, std::size_t cols,
               double* m) noexcept {
  for (std::size_t i = 0; i < rows; ++i) {
    const double ai = a[i];
    double* row = m + i * cols;
    for (std::size_t j = 0; j < cols; ++j) row[j] += ai * b[j];
  }
}

void gemm_tn_acc(const double* a, std::size_t lda, const double* b, std::size_t ldb,
                 std::size_t n, std::size_t rows, std::size_t cols, double* m) noexcept {
  for (std::size_t i = 0; i < rows; ++i) {
    double* out = m + i * cols;
    std::size_t j0 = 0;
    for (; j0 + kBlock <= cols; j0 += kBlock) {
      double acc[kBlock];
      for (std::size_t k = 0; k < kBlock; ++k) acc[k] = out[j0 + k];
      for (std::size_t t = 0; t < n; ++t) {
        const double at = a[t * lda + i];
        const double* bt = b + t * ldb + j0;
        for (std::size_t k = 0; k < kBlock; ++k) acc[k] += at * bt[k];
      }
      for (std::size_t k = 0; k < kBlock; ++k) out[j0 + k] = acc[k];
    }
    if (j0 < cols) {
      for (std::size_t t = 0; t < n; ++t) {
        const double at = a[t * lda + i];
        const double* bt = b + t * ldb;
        for (std::size_t j = j0; j < cols; ++j) out[j] += at * bt[j];
      }
    }
  }
}

}  // namespace sdsa::nd
