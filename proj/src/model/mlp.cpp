#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "dml/error.hpp"
#include "dml/model.hpp"
#include "dml/rng.hpp"

namespace dml {

namespace {

std::uint64_t next_generation() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace

MlpEmbedder::MlpEmbedder(std::vector<std::size_t> widths, bool normalize)
    : widths_(std::move(widths)), normalize_(normalize), generation_(next_generation()) {
  require(widths_.size() >= 2, ErrorKind::BadDim, "an MLP needs input and output widths");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    require(widths_[l] >= 1 && widths_[l + 1] >= 1, ErrorKind::BadDim, "layer widths must be >= 1");
    offsets_.push_back(total);
    total += widths_[l + 1] * widths_[l] + widths_[l + 1];
  }
  params_.assign(total, 0.0);
}

MlpEmbedder MlpEmbedder::he_uniform(std::vector<std::size_t> widths, std::uint64_t seed, bool normalize) {
  MlpEmbedder m(std::move(widths), normalize);
  Rng rng = make_rng(seed, 0x3a1);
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(m.widths_[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    const std::size_t start = m.weight_offset(l);
    for (std::size_t i = start; i < m.bias_offset(l); ++i) m.params_[i] = u(rng);
  }
  return m;
}

std::span<double> MlpEmbedder::mutable_params() {
  generation_ = next_generation();
  return params_;
}

void MlpEmbedder::set_params(std::span<const double> p) {
  require(p.size() == params_.size(), ErrorKind::ShapeMismatch, "parameter vector has the wrong length");
  std::copy(p.begin(), p.end(), mutable_params().begin());
}

Matrix forward(const MlpEmbedder& m, const Matrix& x, ForwardCache* cache) {
  require(m.num_layers() >= 1, ErrorKind::BadDim, "empty model");
  require(x.cols() == m.input_dim(), ErrorKind::DimMismatch,
          "input has " + std::to_string(x.cols()) + " columns, model expects " + std::to_string(m.input_dim()));
  const auto p = m.params();
  const std::size_t n = x.rows();
  if (cache) {
    cache->generation = m.generation();
    cache->inputs.clear();
    cache->pre.clear();
  }
  Matrix h = x;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const std::size_t in = m.widths()[l];
    const std::size_t out = m.widths()[l + 1];
    const double* w = p.data() + m.weight_offset(l);
    const double* b = p.data() + m.bias_offset(l);
    Matrix z(n, out);
#pragma omp parallel for schedule(static) if (n >= 256)
    for (std::size_t i = 0; i < n; ++i) {
      const auto hi = h.row(i);
      auto zi = z.row(i);
      for (std::size_t o = 0; o < out; ++o) {
        double s = b[o];
        const double* wo = w + o * in;
        for (std::size_t k = 0; k < in; ++k) s += wo[k] * hi[k];
        zi[o] = s;
      }
    }
    if (cache) {
      cache->inputs.push_back(h);
      cache->pre.push_back(z);
    }
    if (l + 1 < m.num_layers())
      for (double& v : z.flat()) v = std::max(v, 0.0);
    h = std::move(z);
  }
  if (m.normalize()) {
    for (std::size_t i = 0; i < n; ++i) {
      auto r = h.row(i);
      const double norm = std::sqrt(squared_norm(r));
      require(std::isfinite(norm), ErrorKind::NonFiniteLoss, "model output row " + std::to_string(i) + " overflowed");
      require(norm > kNormEpsilon, ErrorKind::ZeroVector, "model output row " + std::to_string(i) + " is zero");
      for (double& v : r) v /= norm;
    }
  }
  if (cache) cache->output = h;
  return h;
}

EmbeddingSet embed(const MlpEmbedder& m, const EmbeddingSet& x) { return EmbeddingSet(forward(m, x.data())); }

std::vector<double> backward(const MlpEmbedder& m, const ForwardCache& cache, const Matrix& grad_out) {
  require(cache.generation == m.generation() && cache.pre.size() == m.num_layers(), ErrorKind::StaleCache,
          "forward cache does not belong to the current parameters");
  const std::size_t n = cache.output.rows();
  require(grad_out.rows() == n && grad_out.cols() == m.output_dim(), ErrorKind::ShapeMismatch,
          "output gradient shape differs from forward output");
  const auto p = m.params();
  std::vector<double> grads(p.size(), 0.0);

  Matrix g = grad_out;
  if (m.normalize()) {
    // d(v/|v|) = (I - u u^T) / |v|
    const Matrix& v = cache.pre.back();
    for (std::size_t i = 0; i < n; ++i) {
      const auto vi = v.row(i);
      const auto ui = cache.output.row(i);
      auto gi = g.row(i);
      const double norm = std::sqrt(squared_norm(vi));
      const double gu = dot(gi, ui);
      for (std::size_t k = 0; k < gi.size(); ++k) gi[k] = (gi[k] - gu * ui[k]) / norm;
    }
  }
  for (std::size_t l = m.num_layers(); l-- > 0;) {
    const std::size_t in = m.widths()[l];
    const std::size_t out = m.widths()[l + 1];
    const Matrix& h = cache.inputs[l];
    double* gw = grads.data() + m.weight_offset(l);
    double* gb = grads.data() + m.bias_offset(l);
    for (std::size_t i = 0; i < n; ++i) {
      const auto gi = g.row(i);
      const auto hi = h.row(i);
      for (std::size_t o = 0; o < out; ++o) {
        gb[o] += gi[o];
        double* gwo = gw + o * in;
        for (std::size_t k = 0; k < in; ++k) gwo[k] += gi[o] * hi[k];
      }
    }
    if (l == 0) break;
    const double* w = p.data() + m.weight_offset(l);
    const Matrix& z_prev = cache.pre[l - 1];
    Matrix gh(n, in);
    for (std::size_t i = 0; i < n; ++i) {
      const auto gi = g.row(i);
      auto ghi = gh.row(i);
      for (std::size_t o = 0; o < out; ++o) {
        const double* wo = w + o * in;
        for (std::size_t k = 0; k < in; ++k) ghi[k] += gi[o] * wo[k];
      }
      for (std::size_t k = 0; k < in; ++k)
        if (z_prev(i, k) <= 0.0) ghi[k] = 0.0;
    }
    g = std::move(gh);
  }
  return grads;
}

void rmsprop_step(RmspropState& s, std::span<double> params, std::span<const double> grads) {
  require(params.size() == grads.size(), ErrorKind::ShapeMismatch, "parameter and gradient lengths differ");
  if (s.square_avg.empty()) s.square_avg.assign(params.size(), 0.0);
  require(s.square_avg.size() == params.size(), ErrorKind::ShapeMismatch, "optimizer state has the wrong length");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& v = s.square_avg[i];
    v = s.alpha * v + (1.0 - s.alpha) * g * g;
    if (g == 0.0) continue;
    params[i] -= s.lr * g / (std::sqrt(v) + s.eps);
  }
  ++s.steps;
}

}  // namespace dml
