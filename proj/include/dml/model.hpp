#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"

#include "dml/embed_io.hpp"
#include "dml/embedcore.hpp"
#include "dml/losses.hpp"
#include "dml/miners.hpp"

namespace dml {

// Affine + ReLU stack with a linear last layer and optional row L2
// normalization. Parameters live in one flat vector, layer by layer: the
// weight matrix (out x in, row-major) followed by the bias.
class MlpEmbedder {
 public:
  MlpEmbedder() = default;
  // Zero parameters.
  MlpEmbedder(std::vector<std::size_t> widths, bool normalize = true);
  // He-uniform weights, zero biases.
  static MlpEmbedder he_uniform(std::vector<std::size_t> widths, std::uint64_t seed, bool normalize = true);

  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  std::size_t num_layers() const noexcept { return widths_.empty() ? 0 : widths_.size() - 1; }
  std::size_t input_dim() const { return widths_.front(); }
  std::size_t output_dim() const { return widths_.back(); }
  bool normalize() const noexcept { return normalize_; }

  std::span<const double> params() const noexcept { return params_; }
  // Any mutable access invalidates outstanding forward caches.
  std::span<double> mutable_params();
  void set_params(std::span<const double> p);  // ShapeMismatch

  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const { return offsets_[layer] + widths_[layer + 1] * widths_[layer]; }
  std::uint64_t generation() const noexcept { return generation_; }

  friend bool operator==(const MlpEmbedder& a, const MlpEmbedder& b) {
    return a.widths_ == b.widths_ && a.normalize_ == b.normalize_ && a.params_ == b.params_;
  }

 private:
  std::vector<std::size_t> widths_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  bool normalize_ = true;
  std::uint64_t generation_ = 0;
};

struct ForwardCache {
  std::uint64_t generation = 0;
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
  Matrix output;               // after normalization (if any)
};

// DimMismatch; ZeroVector or NonFiniteLoss when an output row cannot be normalized.
Matrix forward(const MlpEmbedder& m, const Matrix& x, ForwardCache* cache = nullptr);
EmbeddingSet embed(const MlpEmbedder& m, const EmbeddingSet& x);

// Gradient of a scalar with respect to every parameter, given its gradient
// with respect to the forward output. StaleCache if the model changed since
// the forward pass.
std::vector<double> backward(const MlpEmbedder& m, const ForwardCache& cache, const Matrix& grad_out);

struct RmspropState {
  std::vector<double> square_avg;
  double lr = 1e-3;
  double alpha = 0.99;
  double eps = 1e-8;
  std::uint64_t steps = 0;
};

// v = alpha v + (1 - alpha) g^2; p -= lr g / (sqrt(v) + eps). square_avg is
// sized on first use.
void rmsprop_step(RmspropState& s, std::span<double> params, std::span<const double> grads);

enum class ValidationMetric { map_at_r, p_at_1 };

struct TrainConfig {
  BatchSpec batch;
  LossKind loss = LossKind::contrastive;
  LossParams loss_params;
  MinerKind miner = MinerKind::none;
  MinerParams miner_params;
  std::vector<std::size_t> hidden{64};
  std::size_t embed_dim = 32;
  double lr = 1e-3;
  double rms_alpha = 0.99;
  double rms_eps = 1e-8;
  std::size_t max_epochs = 60;
  std::size_t val_interval = 1;  // epochs between validation checks
  std::size_t patience = 5;
  double min_delta = 1e-4;
  ValidationMetric metric = ValidationMetric::map_at_r;
  std::uint64_t seed = 0;

  void validate() const;  // InvalidArgument
};

using Dataset = LabeledEmbeddings;

struct TrainResult {
  MlpEmbedder best;
  LossState best_loss_state;
  std::size_t best_check = 0;
  double best_score = 0.0;
  // one entry per validation check, the first taken before any update
  std::vector<double> val_map_at_r;
  std::vector<double> val_p_at_1;
  std::vector<std::size_t> check_iterations;
  std::size_t iterations = 0;
  std::size_t skipped_batches = 0;  // miner returned nothing usable
};

// Batch shape actually used for a training set with the given class count:
// C is capped at the class count and M grows to keep the batch size.
BatchSpec effective_batch(const BatchSpec& spec, std::size_t train_classes);

// DisjointnessViolation if train and val share a class; NonFiniteLoss if a
// loss value or gradient stops being finite.
TrainResult fit_until_plateau(const Dataset& train, const Dataset& val, const TrainConfig& cfg);

// "MLP1", u32 width count, u32 widths, f64 parameters (little-endian), plus a
// JSON sidecar at <path>.json.
void save_checkpoint(const std::filesystem::path& path, const MlpEmbedder& m, const nlohmann::json& sidecar);
MlpEmbedder load_checkpoint(const std::filesystem::path& path);  // IoError, ParseError
nlohmann::json load_sidecar(const std::filesystem::path& path);

}  // namespace dml
