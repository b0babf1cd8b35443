#include "sdsa/ndmath.hpp"

#include <algorithm>
#include <numbers>

namespace sdsa {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::shape: return "shape error";
    case ErrorKind::domain: return "domain error";
    case ErrorKind::numeric: return "numeric error";
    case ErrorKind::config: return "configuration error";
    case ErrorKind::data: return "data error";
    case ErrorKind::classification: return "classification error";
    case ErrorKind::format: return "format error";
    case ErrorKind::not_found: return "not found";
    case ErrorKind::usage: return "usage error";
  }
  return "error";
}

}  // namespace sdsa

namespace sdsa::nd {

Mat::Mat(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw ShapeError("Mat: " + std::to_string(values_.size()) + " values for shape " +
                     shape_string());
  }
}

Mat Mat::transposed() const {
  Mat t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

std::string Mat::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Vec affine(const Mat& W, const Vec& x, const Vec& b) {
  if (W.cols() != x.size() || W.rows() != b.size()) {
    throw ShapeError("affine: W is " + W.shape_string() + ", x has length " +
                     std::to_string(x.size()) + ", b has length " + std::to_string(b.size()));
  }
  Vec out(W.rows());
  for (std::size_t i = 0; i < W.rows(); ++i) {
    const double* w = W.data() + i * W.cols();
    double acc = 0.0;
    for (std::size_t j = 0; j < W.cols(); ++j) acc += w[j] * x[j];
    out[i] = acc + b[i];
  }
  if (!all_finite(out.span())) throw NumericError("affine: non-finite result");
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

Vec stable_softmax(std::span<const double> v) {
  if (v.empty()) throw DomainError("stable_softmax: empty input");
  const double mx = *std::max_element(v.begin(), v.end());
  Vec out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    total += out[i];
  }
  for (double& e : out) e /= total;
  return out;
}

bool all_finite(std::span<const double> v) noexcept {
  return std::all_of(v.begin(), v.end(), [](double e) { return std::isfinite(e); });
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t RngStream::next_u64() noexcept {
  ++counter_;
  return mix64(seed_ + counter_ * 0x9e3779b97f4a7c15ULL);
}

double RngStream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_open() noexcept {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal(double mean, double sigma) noexcept {
  const double u1 = uniform_open();
  const double u2 = uniform_open();
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return mean + sigma * z;
}

double RngStream::exponential(double mean) noexcept { return -mean * std::log(uniform_open()); }

RngStream derive_stream(const RngStream& base, std::string_view label) noexcept {
  return RngStream(mix64(base.seed() ^ mix64(fnv1a64(label))));
}

double relative_error(double a, double b) noexcept {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace sdsa::nd
