#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dml/embedcore.hpp"

namespace dml {

namespace {

double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

void rotate(Matrix& a, Matrix& v, std::size_t p, std::size_t q) {
  const double apq = a(p, q);
  const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
  const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
  const double c = 1.0 / std::sqrt(t * t + 1.0);
  const double s = t * c;
  const std::size_t n = a.rows();
  for (std::size_t k = 0; k < n; ++k) {
    const double akp = a(k, p);
    const double akq = a(k, q);
    a(k, p) = c * akp - s * akq;
    a(k, q) = s * akp + c * akq;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double apk = a(p, k);
    const double aqk = a(q, k);
    a(p, k) = c * apk - s * aqk;
    a(q, k) = s * apk + c * aqk;
  }
  a(p, q) = 0.0;
  a(q, p) = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double vkp = v(k, p);
    const double vkq = v(k, q);
    v(k, p) = c * vkp - s * vkq;
    v(k, q) = s * vkp + c * vkq;
  }
}

}  // namespace

SymmetricEigen symmetric_eigen(const Matrix& input, int max_sweeps) {
  require(input.rows() == input.cols(), ErrorKind::ShapeMismatch, "eigen-decomposition needs a square matrix");
  for (double x : input.flat()) require(std::isfinite(x), ErrorKind::DegenerateData, "non-finite covariance entry");
  const std::size_t n = input.rows();
  Matrix a = input;
  Matrix v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

  double total = 0.0;
  for (double x : a.flat()) total += x * x;
  total = std::sqrt(total);
  const double tol = 1e-15 * total;

  bool converged = off_diagonal_norm(a) <= tol;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q)
        if (a(p, q) != 0.0) rotate(a, v, p, q);
    converged = off_diagonal_norm(a) <= tol;
  }
  if (!converged) fail(ErrorKind::DegenerateData, "Jacobi iteration did not converge");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  SymmetricEigen out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t src = order[c];
    out.values[c] = a(src, src);
    std::size_t arg = 0;
    for (std::size_t k = 1; k < n; ++k)
      if (std::abs(v(k, src)) > std::abs(v(arg, src))) arg = k;
    const double sign = v(arg, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, c) = sign * v(k, src);
  }
  return out;
}

EmbeddingSet pca_reduce(const EmbeddingSet& e, std::size_t target_dim) {
  const std::size_t n = e.n();
  const std::size_t d = e.d();
  require(n >= 2, ErrorKind::BadDim, "PCA needs at least two samples");
  require(target_dim >= 1 && target_dim <= std::min(n - 1, d), ErrorKind::BadDim,
          "target_dim " + std::to_string(target_dim) + " outside [1, " + std::to_string(std::min(n - 1, d)) + "]");

  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += e.data()(i, j);
  for (double& m : mean) m /= static_cast<double>(n);

  Matrix centred(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) centred(i, j) = e.data()(i, j) - mean[j];

  Matrix cov(d, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = centred.row(i);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b) cov(a, b) += x[a] * x[b];
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      cov(a, b) /= static_cast<double>(n - 1);
      cov(b, a) = cov(a, b);
    }

  const auto eig = symmetric_eigen(cov);
  Matrix out(n, target_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = centred.row(i);
    for (std::size_t c = 0; c < target_dim; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += x[k] * eig.vectors(k, c);
      out(i, c) = s;
    }
  }
  return EmbeddingSet(std::move(out));
}

}  // namespace dml
