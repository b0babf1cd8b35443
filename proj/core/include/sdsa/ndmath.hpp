#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sdsa/error.hpp"

namespace sdsa::nd {

/// Dense vector of doubles.
class Vec {
 public:
  Vec() = default;
  explicit Vec(std::size_t n, double fill = 0.0) : values_(n, fill) {}
  Vec(std::initializer_list<double> values) : values_(values) {}
  explicit Vec(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool operator==(const Vec&) const = default;

 private:
  std::vector<double> values_;
};

/// Row-major dense matrix of doubles.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0);
  Mat(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {values_.data() + r * cols_, cols_};
  }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }

  Mat transposed() const;
  std::string shape_string() const;

  bool operator==(const Mat&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// W·x + b. Throws ShapeError on mismatch and NumericError if the result is
/// not finite.
Vec affine(const Mat& W, const Vec& x, const Vec& b);

// Unchecked kernels used on hot paths. All accumulate in ascending index
// order of the contracted dimension, so results are bitwise identical to a
// naive scalar loop with the same starting value.

/// y[i] += Σ_j wt[j*out + i] * x[j], where wt is a transposed (in × out) weight.
void gemv_transposed_acc(const double* wt, std::size_t in, std::size_t out, const double* x,
                         double* y) noexcept;
/// y[j] += Σ_i w[i*cols + j] * g[i]   (y += Wᵀg for row-major W).
void gemv_t_acc(const double* w, std::size_t rows, std::size_t cols, const double* g,
                double* y) noexcept;
/// x[i] = 1 / (1 + e^(−x[i])) in place, vectorized; agrees with sigmoid() to a
/// few ulp.
void sigmoid_inplace(double* x, std::size_t n) noexcept;
/// x[i] = tanh(x[i]) in place, vectorized; absolute error below 1e-15.
void tanh_inplace(double* x, std::size_t n) noexcept;
/// M[i][j] += a[i] * b[j]
void outer_acc(const double* a, std::size_t rows, const double* b, std::size_t cols,
               double* m) noexcept;
/// M[i][j] += Σ_t a[t*lda + i] * b[t*ldb + j] for t < n (a sum of n outer products).
void gemm_tn_acc(const double* a, std::size_t lda, const double* b, std::size_t ldb,
                 std::size_t n, std::size_t rows, std::size_t cols, double* m) noexcept;

double dot(std::span<const double> a, std::span<const double> b) noexcept;

/// Softmax via max subtraction. Throws DomainError on empty input.
Vec stable_softmax(std::span<const double> v);
inline Vec stable_softmax(const Vec& v) { return stable_softmax(v.span()); }

inline double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double tanh_act(double x) noexcept { return std::tanh(x); }

bool all_finite(std::span<const double> v) noexcept;

std::uint64_t fnv1a64(std::string_view bytes) noexcept;
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Counter-based random stream (SplitMix64 over key + counter·γ).
///
/// A stream is a plain value: copying it forks the sequence, and draws only
/// mutate the object they are called on. Normal deviates use the cosine branch
/// of Box–Muller on two consecutive uniforms, so every normal draw consumes
/// exactly two raw outputs regardless of sigma.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) noexcept : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform on (0, 1).
  double uniform_open() noexcept;
  double normal(double mean, double sigma) noexcept;
  double exponential(double mean) noexcept;

  bool operator==(const RngStream&) const = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// Child stream keyed on (base seed, label); the base counter is ignored so
/// derivation order never matters.
RngStream derive_stream(const RngStream& base, std::string_view label) noexcept;

/// |a−b| / max(1, |a|, |b|)
double relative_error(double a, double b) noexcept;

inline constexpr double kDefaultFiniteDiffStep = 1e-5;

/// Central finite differences of a scalar function.
template <typename F>
  requires std::invocable<F&, const Vec&>
Vec finite_diff_gradient(F&& f, const Vec& x, double h = kDefaultFiniteDiffStep) {
  if (!(h > 0.0)) throw DomainError("finite_diff_gradient: step must be positive");
  Vec grad(x.size());
  Vec probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(static_cast<const Vec&>(probe));
    probe[i] = x[i] - h;
    const double down = f(static_cast<const Vec&>(probe));
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_gradient: non-finite function value at component " +
                         std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace sdsa::nd
