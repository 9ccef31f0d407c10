#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dml/matrix.hpp"
#include "dml/tuples.hpp"

namespace dml {

enum class LossKind {
  contrastive,
  triplet,
  ntxent,
  proxynca,
  margin,
  margin_per_class,
  normalized_softmax,
  cosface,
  arcface,
  fastap,
  snr,
  multisimilarity,
  softtriple,
};

std::string_view to_string(LossKind k);
LossKind parse_loss(std::string_view id);  // UnknownKind
std::span<const LossKind> all_losses();

// Classification losses own a weight matrix and want C=32, M=1 batches.
bool is_classification(LossKind k);
// Losses that take mined pairs/triplets. Classification losses and fastap do not.
bool accepts_miner(LossKind k);

// A batch of embeddings. Rows are expected to be unit norm, although every
// loss is defined (and differentiable) for arbitrary rows so that finite
// differences can step off the sphere. Labels are canonical training-class
// indices in [0, num_classes).
struct Batch {
  Matrix embeddings;
  std::vector<int> labels;
};

struct LossParams {
  // contrastive, snr
  double pos_margin = 0.0;
  double neg_margin = 0.5;
  // triplet
  double margin = 0.1;
  // margin, margin_per_class: m_pos = beta - alpha, m_neg = beta + alpha
  double alpha = 0.2;
  double beta_init = 1.2;
  // ntxent
  double temperature = 0.1;
  // multisimilarity
  double ms_alpha = 2.0;
  double ms_beta = 50.0;
  double ms_base = 0.5;
  // snr
  double reg_weight = 0.0;
  // fastap
  std::size_t num_bins = 10;
  // classification losses; softtriple uses scale as its lambda
  double scale = 16.0;
  double class_margin = 0.2;
  double gamma = 0.1;
  double delta = 0.01;
  std::size_t centers = 2;
  // optimizer step for learnable loss parameters
  double param_lr = 1e-2;

  void validate() const;  // InvalidArgument
  bool operator==(const LossParams&) const = default;
};

// Tuned starting points, one per loss.
LossParams default_params(LossKind k);

// Named access used by configs and hyperparameter search.
std::span<const std::string_view> param_names();
void set_param(LossParams& p, std::string_view name, double value);  // InvalidArgument
double get_param(const LossParams& p, std::string_view name);

// Learnable loss parameters as one flat vector: betas first, then the class
// weight columns. Column (class c, center k) occupies dim consecutive entries
// starting at num_betas + (c * centers + k) * dim.
struct LossState {
  std::vector<double> params;
  std::size_t num_betas = 0;
  std::size_t num_classes = 0;
  std::size_t centers = 0;
  std::size_t dim = 0;

  std::span<const double> column(std::size_t c, std::size_t k) const;
  std::span<double> column(std::size_t c, std::size_t k);
  bool operator==(const LossState&) const = default;
};

LossState init_loss_state(LossKind k, const LossParams& p, std::size_t num_classes, std::size_t dim,
                          std::uint64_t seed);

// Rescale weight columns to unit norm (betas untouched).
void renormalize_columns(LossState& s);

struct LossOutput {
  double value = 0.0;
  Matrix grad_embeddings;
  std::vector<double> grad_params;
  std::size_t n_active = 0;
  // Smallest distance from a non-differentiable point (hinge, zero distance,
  // clamp, bin centre). Infinity for smooth losses.
  double kink_slack = std::numeric_limits<double>::infinity();
};

LossOutput contrastive_loss(const Batch& b, const LossParams& p, const MinedTuples* mined = nullptr);
LossOutput triplet_margin_loss(const Batch& b, const LossParams& p, const MinedTuples* mined = nullptr);
LossOutput pair_weighting_loss(LossKind k, const Batch& b, const LossParams& p, const LossState& s,
                               const MinedTuples* mined = nullptr);
LossOutput classification_loss(LossKind k, const Batch& b, const LossState& s, const LossParams& p);
LossOutput fastap_loss(const Batch& b, const LossParams& p);

// Dispatch by kind. Passing mined tuples to a loss that does not accept them
// is an InvalidArgument.
LossOutput compute_loss(LossKind k, const Batch& b, const LossParams& p, const LossState& s,
                        const MinedTuples* mined = nullptr);

struct GradientCheck {
  double max_relative_error = 0.0;
  bool passed = false;
};

// Central differences over every embedding coordinate and every learnable
// parameter. Relative error is max|analytic - numeric| divided by the larger
// of the two max-abs gradients (0 when both vanish).
GradientCheck gradient_check(LossKind k, const Batch& b, const LossParams& p, const LossState& s, double step,
                             double tolerance, const MinedTuples* mined = nullptr);

}  // namespace dml
