#include <algorithm>
#include <cmath>

#include "detail.hpp"
#include "dml/error.hpp"

namespace dml {

// Squared distances of unit vectors lie in [0, 4]. Bin l is centred at l*delta
// with a triangular kernel of half-width delta, so the bins partition unity
// over the whole range.
LossOutput fastap_loss(const Batch& b, const LossParams& p) {
  detail::check_batch(b);
  require(p.num_bins >= 2, ErrorKind::InvalidArgument, "fastap needs at least 2 bins");
  const Matrix& x = b.embeddings;
  const std::size_t n = x.rows();
  const std::size_t dim = x.cols();
  const std::size_t nb = p.num_bins;
  const double delta = 4.0 / static_cast<double>(nb - 1);

  LossOutput out;
  out.grad_embeddings = Matrix(n, dim);
  std::vector<double> hp(nb);
  std::vector<double> hn(nb);
  std::vector<double> cum_p(nb);
  std::vector<double> cum(nb);
  std::vector<double> dap_dhp(nb);
  std::vector<double> dap_dhn(nb);
  std::vector<double> dist2(n);
  const double inv_b = 1.0 / static_cast<double>(n);

  for (std::size_t i = 0; i < n; ++i) {
    std::fill(hp.begin(), hp.end(), 0.0);
    std::fill(hn.begin(), hn.end(), 0.0);
    std::size_t n_pos = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double r = detail::row_distance(x.row(i), x.row(j));
      const double d2 = r * r;
      dist2[j] = d2;
      const bool pos = b.labels[j] == b.labels[i];
      n_pos += pos;
      auto& h = pos ? hp : hn;
      const double u = d2 / delta;
      const auto lo = static_cast<std::size_t>(std::floor(u));
      out.kink_slack = std::min(out.kink_slack, delta * std::min(u - std::floor(u), std::ceil(u) - u));
      for (std::size_t l : {lo, lo + 1}) {
        if (l >= nb) continue;
        h[l] += std::max(0.0, 1.0 - std::abs(u - static_cast<double>(l)));
      }
    }
    require(n_pos > 0, ErrorKind::NoPositives, "fastap anchor " + std::to_string(i) + " has no positive");

    double acc_p = 0.0;
    double acc = 0.0;
    for (std::size_t l = 0; l < nb; ++l) {
      cum_p[l] = (acc_p += hp[l]);
      cum[l] = (acc += hp[l] + hn[l]);
    }
    const double inv_np = 1.0 / static_cast<double>(n_pos);
    double ap = 0.0;
    for (std::size_t l = 0; l < nb; ++l)
      if (cum[l] > 0.0) ap += hp[l] * cum_p[l] / cum[l];
    ap *= inv_np;
    out.value += inv_b * (1.0 - ap);
    if (ap < 1.0) ++out.n_active;

    // suffix sums: A_m = sum_{l>=m} hp_l / H_l, B_m = sum_{l>=m} hp_l H+_l / H_l^2
    double suffix_a = 0.0;
    double suffix_b = 0.0;
    for (std::size_t l = nb; l-- > 0;) {
      if (cum[l] > 0.0) {
        suffix_a += hp[l] / cum[l];
        suffix_b += hp[l] * cum_p[l] / (cum[l] * cum[l]);
      }
      const double direct = cum[l] > 0.0 ? cum_p[l] / cum[l] : 0.0;
      dap_dhp[l] = inv_np * (direct + suffix_a - suffix_b);
      dap_dhn[l] = -inv_np * suffix_b;
    }

    // loss = 1 - mean AP, so d loss / d h = -inv_b * d AP / d h
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const bool pos = b.labels[j] == b.labels[i];
      const auto& dh = pos ? dap_dhp : dap_dhn;
      const double u = dist2[j] / delta;
      const auto lo = static_cast<std::size_t>(std::floor(u));
      double dd2 = 0.0;  // d AP / d dist2
      for (std::size_t l : {lo, lo + 1}) {
        if (l >= nb) continue;
        const double off = u - static_cast<double>(l);
        if (std::abs(off) >= 1.0) continue;
        dd2 += dh[l] * (off > 0.0 ? -1.0 : 1.0) / delta;
      }
      const double c = -inv_b * dd2;
      if (c == 0.0) continue;
      for (std::size_t t = 0; t < dim; ++t) {
        const double g = c * 2.0 * (x(i, t) - x(j, t));
        out.grad_embeddings(i, t) += g;
        out.grad_embeddings(j, t) -= g;
      }
    }
  }
  out.value = std::max(out.value, 0.0);
  return out;
}

}  // namespace dml
