#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dsel/data_model.hpp"

namespace dsel {

enum class PrototypeInit { kCentroids, kRandom };
enum class WeightMode { kReweight, kResample };

struct HyperParams {
  double tau_u = 0.07;  // self-supervised contrastive temperature
  double tau_s = 0.1;   // supervised contrastive and classifier temperature
  double tau_t = 0.0;   // teacher temperature for the view-2 targets; 0 means tau_s
  double lambda = 0.35;
  double epsilon = 1.0;  // entropy regulariser
  double lr = 0.1;
  int epochs = 200;
  int batch_size = 128;
  std::uint64_t seed = 0;
  // View noise std as a fraction of the mean feature norm.
  double noise_std = 0.05;
  PrototypeInit init = PrototypeInit::kCentroids;
  WeightMode weight_mode = WeightMode::kReweight;
  // Zero-weight labeled instances never enter a batch.
  bool discard_zero_weight = true;
  int proj_dim = 0;  // > 0 enables the linear projection head
  // Projection-head learning rate; only used when proj_dim > 0.
  double proj_lr = 0.01;

  double teacher_tau() const { return tau_t > 0.0 ? tau_t : tau_s; }

  void validate() const;
  std::string to_json() const;
  static HyperParams from_json(const std::string& text);
};

struct DiscoveryModel {
  Matrix prototypes;                // K x dim
  std::optional<Matrix> projection; // proj_dim x dim
  int n_labeled_categories = 0;
  HyperParams hp;

  int K() const { return static_cast<int>(prototypes.rows()); }
};

/// Two noisy views of a set of instances. `labels[i] < 0` marks unlabeled
/// members; `weights[i]` is omega_i and only read for labeled members.
struct Batch {
  Matrix view1;  // x-hat
  Matrix view2;  // x-tilde
  std::vector<int> labels;
  std::vector<double> weights;

  std::size_t size() const { return static_cast<std::size_t>(view1.rows()); }
  std::size_t n_labeled() const;
};

// Softmax over cosine similarities of h against every prototype.
Vector soft_labels(const Eigen::Ref<const RowVector>& h, const Matrix& prototypes, double tau);
// Row-wise soft labels for a matrix of features.
Matrix soft_labels(const Matrix& h, const Matrix& prototypes, double tau);

// Projects both views (identity when no head) and unit-normalises rows.
std::pair<Matrix, Matrix> project_views(const Batch& batch, const std::optional<Matrix>& projection);

double loss_rep_u(const Matrix& z1, const Matrix& z2, double tau_u);
double loss_rep_s(const Matrix& z1, const Matrix& z2, std::span<const int> labels,
                  std::span<const double> weights, double tau_s);

// Weighted cross-entropy of view-1 predictions on the true labels.
double loss_cls_l(const Matrix& p_hat, std::span<const int> labels, std::span<const double> weights);
// Self-distillation from fixed targets p_tilde minus epsilon * H(mean prediction).
double loss_cls_u(const Matrix& p_hat, const Matrix& p_tilde, double epsilon);
double mean_prediction_entropy(const Matrix& p_hat, const Matrix& p_tilde);

struct LossBreakdown {
  double rep_u = 0.0;
  double rep_s = 0.0;
  double cls_u = 0.0;
  double cls_l = 0.0;
  double total = 0.0;
};

// All four terms and their lambda mix. Teacher predictions come from view 2.
LossBreakdown total_loss(const Batch& batch, const DiscoveryModel& model);

// Classifier part (1 - lambda) L_cls^u + lambda L_cls^l with teacher
// predictions held fixed. This is the function prototype_gradient differentiates.
double classifier_loss(const Batch& batch, const Matrix& prototypes, const HyperParams& hp,
                       const Matrix& teacher);
Matrix teacher_predictions(const Batch& batch, const Matrix& prototypes, const HyperParams& hp);

/// Exact gradient of the classifier loss with respect to every prototype,
/// including the Jacobian of c / |c|. Teacher predictions are constants.
Matrix prototype_gradient(const Batch& batch, const Matrix& prototypes, const HyperParams& hp,
                          const Matrix& teacher);
inline Matrix prototype_gradient(const Batch& batch, const DiscoveryModel& model) {
  return prototype_gradient(batch, model.prototypes, model.hp,
                            teacher_predictions(batch, model.prototypes, model.hp));
}

// Representation loss (1 - lambda) L_rep^u + lambda L_rep^s as a function of the head.
double representation_loss(const Batch& batch, const Matrix& projection, const HyperParams& hp);
Matrix projection_gradient(const Batch& batch, const Matrix& projection, const HyperParams& hp);

struct EpochMetrics {
  int epoch = 0;
  LossBreakdown loss;  // averaged over the epoch's batches
  double prototype_grad_norm = 0.0;
};

struct TrainOptions {
  // Called once per epoch; the CLI streams these as JSON lines.
  std::function<void(const EpochMetrics&)> on_epoch;
};

/// Trains the prototype classifier on frozen features.
///
/// Seen-category prototypes start at the (unit-normalised) labeled category
/// means, the remaining K - C are D^2-seeded from the unlabeled features.
/// Each step samples a mixed batch, draws two Gaussian-noise views and takes
/// one gradient step on the classifier loss; prototypes are projected back to
/// the unit sphere after every step (the loss is scale-invariant in them).
DiscoveryModel train(const EmbeddingSet& labeled, const EmbeddingSet& unlabeled,
                     const WeightAssignment& weights, const HyperParams& hp, int K,
                     const TrainOptions& options = {});

// argmax of soft_labels per row; ties go to the lowest prototype index.
std::vector<int> assign_labels(const DiscoveryModel& model, const EmbeddingSet& data);

std::string metrics_to_json_line(const EpochMetrics& m);

void save_checkpoint(const DiscoveryModel& model, const std::filesystem::path& path);
DiscoveryModel load_checkpoint(const std::filesystem::path& path);

}  // namespace dsel
