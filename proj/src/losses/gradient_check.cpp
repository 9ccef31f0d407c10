#include <algorithm>
#include <cmath>

#include "dml/error.hpp"
#include "dml/losses.hpp"

namespace dml {

GradientCheck gradient_check(LossKind k, const Batch& b, const LossParams& p, const LossState& s, double step,
                             double tolerance, const MinedTuples* mined) {
  require(std::isfinite(step) && step > 0.0, ErrorKind::InvalidArgument, "finite-difference step must be > 0");
  const LossOutput base = compute_loss(k, b, p, s, mined);
  require(base.kink_slack > 10.0 * step, ErrorKind::KinkProximity,
          "configuration lies within " + std::to_string(base.kink_slack) + " of a kink");

  std::vector<double> analytic(base.grad_embeddings.flat().begin(), base.grad_embeddings.flat().end());
  analytic.insert(analytic.end(), base.grad_params.begin(), base.grad_params.end());
  std::vector<double> numeric;
  numeric.reserve(analytic.size());

  Batch probe = b;
  for (double& v : probe.embeddings.flat()) {
    const double keep = v;
    v = keep + step;
    const double up = compute_loss(k, probe, p, s, mined).value;
    v = keep - step;
    const double down = compute_loss(k, probe, p, s, mined).value;
    v = keep;
    numeric.push_back((up - down) / (2.0 * step));
  }
  LossState ps = s;
  for (double& v : ps.params) {
    const double keep = v;
    v = keep + step;
    const double up = compute_loss(k, b, p, ps, mined).value;
    v = keep - step;
    const double down = compute_loss(k, b, p, ps, mined).value;
    v = keep;
    numeric.push_back((up - down) / (2.0 * step));
  }

  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  GradientCheck r;
  r.max_relative_error = scale > 0.0 ? diff / scale : 0.0;
  r.passed = r.max_relative_error < tolerance;
  return r;
}

}  // namespace dml
