#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "detail.hpp"
#include "dml/error.hpp"

namespace dml {

namespace {

struct Normalized {
  std::vector<double> unit;
  double norm = 0.0;
};

Normalized normalize(std::span<const double> v) {
  Normalized n;
  for (double x : v) n.norm += x * x;
  n.norm = std::sqrt(n.norm);
  require(n.norm > 1e-12, ErrorKind::ZeroVector, "cannot normalize a zero vector");
  n.unit.assign(v.begin(), v.end());
  for (double& x : n.unit) x /= n.norm;
  return n;
}

}  // namespace

LossOutput classification_loss(LossKind k, const Batch& b, const LossState& s, const LossParams& p) {
  require(is_classification(k), ErrorKind::UnknownKind,
          "'" + std::string(to_string(k)) + "' is not a classification loss");
  detail::check_batch(b);
  const Matrix& x = b.embeddings;
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const std::size_t nc = s.num_classes;
  const std::size_t kc = s.centers;
  require(s.dim == d, ErrorKind::DimMismatch, "weight dimension differs from embedding dimension");
  require(nc >= 1 && kc >= 1 && (k == LossKind::softtriple || kc == 1), ErrorKind::InvalidArgument,
          "loss state does not match classification loss kind");
  require(s.params.size() == s.num_betas + nc * kc * d, ErrorKind::ShapeMismatch, "loss state size is inconsistent");
  for (int label : b.labels)
    require(label >= 0 && static_cast<std::size_t>(label) < nc, ErrorKind::UnknownClass,
            "no weight column for class " + std::to_string(label));

  std::vector<Normalized> w;
  w.reserve(nc * kc);
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t m = 0; m < kc; ++m) w.push_back(normalize(s.column(c, m)));

  LossOutput out;
  out.grad_embeddings = Matrix(n, d);
  out.grad_params.assign(s.params.size(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(n);
  const double sc = p.scale;

  std::vector<double> cosv(nc * kc);
  std::vector<double> dz(nc * kc);  // d z_c / d cos_{c,m}
  std::vector<double> z(nc);
  std::vector<double> q(kc);
  for (std::size_t i = 0; i < n; ++i) {
    const Normalized xi = normalize(x.row(i));
    const auto y = static_cast<std::size_t>(b.labels[i]);
    for (std::size_t j = 0; j < nc * kc; ++j) cosv[j] = std::clamp(dot(xi.unit, w[j].unit), -1.0, 1.0);

    for (std::size_t c = 0; c < nc; ++c) {
      const bool target = c == y;
      const double cs = cosv[c * kc];
      switch (k) {
        case LossKind::normalized_softmax:
          z[c] = sc * cs;
          dz[c] = sc;
          break;
        case LossKind::cosface:
          z[c] = sc * (target ? cs - p.class_margin : cs);
          dz[c] = sc;
          break;
        case LossKind::proxynca:
          // -s * |x - w|^2 for unit vectors
          z[c] = 2.0 * sc * (cs - 1.0);
          dz[c] = 2.0 * sc;
          break;
        case LossKind::arcface: {
          if (!target) {
            z[c] = sc * cs;
            dz[c] = sc;
            break;
          }
          const double theta = std::acos(cs);
          const double upper = std::numbers::pi - p.class_margin;
          out.kink_slack = std::min({out.kink_slack, theta, std::abs(upper - theta)});
          const double clamped = std::min(theta, upper);
          z[c] = sc * std::cos(clamped + p.class_margin);
          if (theta >= upper) {
            dz[c] = 0.0;
          } else {
            const double sin_t = std::max(std::sin(theta), 1e-12);
            dz[c] = sc * std::sin(theta + p.class_margin) / sin_t;
          }
          break;
        }
        case LossKind::softtriple: {
          const std::span<const double> cc(cosv.data() + c * kc, kc);
          double mx = *std::max_element(cc.begin(), cc.end());
          double tot = 0.0;
          for (std::size_t m = 0; m < kc; ++m) tot += (q[m] = std::exp((cc[m] - mx) / p.gamma));
          double sim = 0.0;
          for (std::size_t m = 0; m < kc; ++m) sim += (q[m] /= tot) * cc[m];
          z[c] = sc * (sim - (target ? p.delta : 0.0));
          for (std::size_t m = 0; m < kc; ++m) dz[c * kc + m] = sc * q[m] * (1.0 + (cc[m] - sim) / p.gamma);
          break;
        }
        default:
          fail(ErrorKind::UnknownKind, "unhandled classification loss");
      }
    }

    const double lse = detail::log_sum_exp(z);
    const double ce = std::max(lse - z[y], 0.0);
    out.value += inv_b * ce;
    if (ce > 0.0) ++out.n_active;

    auto gx = out.grad_embeddings.row(i);
    for (std::size_t c = 0; c < nc; ++c) {
      const double dlz = inv_b * (std::exp(z[c] - lse) - (c == y ? 1.0 : 0.0));
      for (std::size_t m = 0; m < kc; ++m) {
        const std::size_t j = c * kc + m;
        const double g = dlz * dz[j];
        if (g == 0.0) continue;
        const double cs = cosv[j];
        const std::size_t base = s.num_betas + j * d;
        for (std::size_t t = 0; t < d; ++t) {
          gx[t] += g * (w[j].unit[t] - cs * xi.unit[t]) / xi.norm;
          out.grad_params[base + t] += g * (xi.unit[t] - cs * w[j].unit[t]) / w[j].norm;
        }
      }
    }
  }
  return out;
}

}  // namespace dml
