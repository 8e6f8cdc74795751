#include "dsel/discovery.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>
#include <sstream>

#include "dsel/clustering.hpp"
#include "dsel/selection.hpp"

namespace dsel {

namespace {

constexpr double kTiny = std::numeric_limits<double>::min();

Matrix normalize_rows(const Matrix& m, const char* what) {
  Matrix out = m;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (!(n > 0.0)) throw Error(ErrorCode::kZeroNorm, std::string("zero-norm ") + what);
    out.row(i) /= n;
  }
  return out;
}

// Row-wise softmax of logits.
Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

double log_sum_exp(const Eigen::Ref<const RowVector>& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

void check_batch(const Batch& b) {
  if (b.view1.rows() != b.view2.rows() || b.view1.cols() != b.view2.cols() ||
      b.labels.size() != b.size() || b.weights.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "batch views, labels and weights disagree in shape");
  }
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

// Gradient of (1 - lambda) L_rep^u + lambda L_rep^s with respect to the
// normalised projections of both views.
std::pair<Matrix, Matrix> rep_grad_wrt_z(const Matrix& z1, const Matrix& z2, std::span<const int> labels,
                                         std::span<const double> weights, const HyperParams& hp) {
  const Eigen::Index n = z1.rows();
  Matrix g1 = Matrix::Zero(n, z1.cols());
  Matrix g2 = Matrix::Zero(n, z1.cols());
  // Unsupervised: loss_i = -z1_i.z2_i / t + lse_j(z1_j.z2_i / t).
  const double a_u = (1.0 - hp.lambda) / static_cast<double>(n);
  const Matrix sim = z2 * z1.transpose() / hp.tau_u;  // sim(i, j) = z1_j . z2_i / t
  const Matrix q = softmax_rows(sim);
  for (Eigen::Index i = 0; i < n; ++i) {
    g2.row(i) += a_u * (-z1.row(i) + q.row(i) * z1) / hp.tau_u;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double coef = q(i, j) - (i == j ? 1.0 : 0.0);
      g1.row(j) += a_u * coef * z2.row(i) / hp.tau_u;
    }
  }
  // Supervised over the labeled members.
  std::vector<Eigen::Index> lab;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)] >= 0) lab.push_back(i);
  }
  if (lab.empty() || hp.lambda == 0.0) return {g1, g2};
  const double n_l = static_cast<double>(lab.size());
  for (Eigen::Index i : lab) {
    const double w = weights[static_cast<std::size_t>(i)];
    if (w == 0.0) continue;
    std::vector<Eigen::Index> pos, others;
    for (Eigen::Index p : lab) {
      if (p == i) continue;
      others.push_back(p);
      if (labels[static_cast<std::size_t>(p)] == labels[static_cast<std::size_t>(i)]) pos.push_back(p);
    }
    if (pos.empty()) continue;
    RowVector logits(static_cast<Eigen::Index>(others.size()));
    for (std::size_t o = 0; o < others.size(); ++o) {
      logits(static_cast<Eigen::Index>(o)) = z1.row(i).dot(z2.row(others[o])) / hp.tau_s;
    }
    const double mx = logits.maxCoeff();
    RowVector r = (logits.array() - mx).exp();
    r /= r.sum();
    const double a = hp.lambda * w / (n_l * static_cast<double>(pos.size()));
    const double np = static_cast<double>(pos.size());
    for (Eigen::Index p : pos) {
      g1.row(i) -= a * z2.row(p) / hp.tau_s;
      g2.row(p) -= a * z1.row(i) / hp.tau_s;
    }
    for (std::size_t o = 0; o < others.size(); ++o) {
      const double ro = r(static_cast<Eigen::Index>(o));
      g1.row(i) += a * np * ro * z2.row(others[o]) / hp.tau_s;
      g2.row(others[o]) += a * np * ro * z1.row(i) / hp.tau_s;
    }
  }
  return {g1, g2};
}

}  // namespace

void HyperParams::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::kInvalidArgument, what); };
  if (!(tau_u > 0.0) || !(tau_s > 0.0)) bad("temperatures must be positive");
  if (!(tau_t >= 0.0)) bad("teacher temperature must be >= 0");
  if (!(lambda >= 0.0 && lambda <= 1.0)) bad("lambda must lie in [0, 1]");
  if (!(epsilon >= 0.0)) bad("epsilon must be >= 0");
  if (!(lr > 0.0)) bad("learning rate must be positive");
  if (epochs < 0) bad("epochs must be >= 0");
  if (batch_size < 2) bad("batch size must be >= 2");
  if (!(noise_std >= 0.0)) bad("noise_std must be >= 0");
  if (proj_dim < 0) bad("proj_dim must be >= 0");
}

std::string HyperParams::to_json() const {
  nlohmann::ordered_json j;
  j["tau_u"] = tau_u;
  j["tau_s"] = tau_s;
  j["tau_t"] = teacher_tau();
  j["lambda"] = lambda;
  j["epsilon"] = epsilon;
  j["lr"] = lr;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["noise_std"] = noise_std;
  j["init"] = init == PrototypeInit::kCentroids ? "centroids" : "random";
  j["weight_mode"] = weight_mode == WeightMode::kReweight ? "reweight" : "resample";
  j["discard_zero_weight"] = discard_zero_weight;
  j["proj_dim"] = proj_dim;
  j["proj_lr"] = proj_lr;
  return j.dump();
}

HyperParams HyperParams::from_json(const std::string& text) {
  HyperParams hp;
  const auto j = nlohmann::json::parse(text);
  hp.tau_u = j.value("tau_u", hp.tau_u);
  hp.tau_s = j.value("tau_s", hp.tau_s);
  hp.tau_t = j.value("tau_t", hp.tau_t);
  hp.lambda = j.value("lambda", hp.lambda);
  hp.epsilon = j.value("epsilon", hp.epsilon);
  hp.lr = j.value("lr", hp.lr);
  hp.epochs = j.value("epochs", hp.epochs);
  hp.batch_size = j.value("batch_size", hp.batch_size);
  hp.seed = j.value("seed", hp.seed);
  hp.noise_std = j.value("noise_std", hp.noise_std);
  hp.init = j.value("init", std::string("centroids")) == "random" ? PrototypeInit::kRandom
                                                                  : PrototypeInit::kCentroids;
  hp.weight_mode = j.value("weight_mode", std::string("reweight")) == "resample" ? WeightMode::kResample
                                                                                 : WeightMode::kReweight;
  hp.discard_zero_weight = j.value("discard_zero_weight", hp.discard_zero_weight);
  hp.proj_dim = j.value("proj_dim", hp.proj_dim);
  hp.proj_lr = j.value("proj_lr", hp.proj_lr);
  hp.validate();
  return hp;
}

std::size_t Batch::n_labeled() const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](int l) { return l >= 0; }));
}

Vector soft_labels(const Eigen::Ref<const RowVector>& h, const Matrix& prototypes, double tau) {
  Matrix m = h;
  return soft_labels(m, prototypes, tau).row(0).transpose();
}

Matrix soft_labels(const Matrix& h, const Matrix& prototypes, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
  if (h.cols() != prototypes.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "feature and prototype dims differ");
  }
  const Matrix hn = normalize_rows(h, "feature");
  const Matrix cn = normalize_rows(prototypes, "prototype");
  return softmax_rows(hn * cn.transpose() / tau);
}

std::pair<Matrix, Matrix> project_views(const Batch& batch, const std::optional<Matrix>& projection) {
  if (!projection) {
    return {normalize_rows(batch.view1, "view"), normalize_rows(batch.view2, "view")};
  }
  const Matrix& p = *projection;
  return {normalize_rows(batch.view1 * p.transpose(), "projected view"),
          normalize_rows(batch.view2 * p.transpose(), "projected view")};
}

double loss_rep_u(const Matrix& z1, const Matrix& z2, double tau_u) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols() || z1.rows() == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "loss_rep_u: view shapes differ or batch empty");
  }
  const Matrix sim = z2 * z1.transpose() / tau_u;
  double total = 0.0;
  for (Eigen::Index i = 0; i < sim.rows(); ++i) total += log_sum_exp(sim.row(i)) - sim(i, i);
  return total / static_cast<double>(z1.rows());
}

double loss_rep_s(const Matrix& z1, const Matrix& z2, std::span<const int> labels,
                  std::span<const double> weights, double tau_s) {
  const auto n = static_cast<std::size_t>(z1.rows());
  if (labels.size() != n || weights.size() != n || z2.rows() != z1.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "loss_rep_s: shapes differ");
  }
  std::vector<std::size_t> lab;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= 0) lab.push_back(i);
  }
  if (lab.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i : lab) {
    if (weights[i] == 0.0) continue;
    std::vector<double> logits;
    std::vector<double> pos_logits;
    for (std::size_t p : lab) {
      if (p == i) continue;
      const double s = z1.row(static_cast<Eigen::Index>(i)).dot(z2.row(static_cast<Eigen::Index>(p))) / tau_s;
      logits.push_back(s);
      if (labels[p] == labels[i]) pos_logits.push_back(s);
    }
    if (pos_logits.empty()) {
      static std::atomic<bool> warned{false};
      if (!warned.exchange(true)) warn("labeled instance without a positive in the batch; skipped in L_rep^s");
      continue;
    }
    const double lse = log_sum_exp(Eigen::Map<const RowVector>(logits.data(), static_cast<Eigen::Index>(logits.size())));
    double inner = 0.0;
    for (double s : pos_logits) inner += lse - s;
    total += weights[i] * (inner / static_cast<double>(pos_logits.size()));
  }
  return total / static_cast<double>(lab.size());
}

double loss_cls_l(const Matrix& p_hat, std::span<const int> labels, std::span<const double> weights) {
  const auto n = static_cast<std::size_t>(p_hat.rows());
  if (labels.size() != n || weights.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "loss_cls_l: shapes differ");
  }
  double total = 0.0;
  std::size_t n_l = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0) continue;
    ++n_l;
    if (labels[i] >= p_hat.cols()) throw Error(ErrorCode::kLabelOutOfRange, "label exceeds K");
    if (weights[i] == 0.0) continue;
    total += weights[i] * -std::log(std::max(p_hat(static_cast<Eigen::Index>(i), labels[i]), kTiny));
  }
  return n_l ? total / static_cast<double>(n_l) : 0.0;
}

double mean_prediction_entropy(const Matrix& p_hat, const Matrix& p_tilde) {
  const RowVector mean = (p_hat.colwise().sum() + p_tilde.colwise().sum()) / (2.0 * static_cast<double>(p_hat.rows()));
  double h = 0.0;
  for (Eigen::Index k = 0; k < mean.size(); ++k) {
    if (mean(k) > 0.0) h -= mean(k) * std::log(mean(k));
  }
  return h;
}

double loss_cls_u(const Matrix& p_hat, const Matrix& p_tilde, double epsilon) {
  if (p_hat.rows() != p_tilde.rows() || p_hat.cols() != p_tilde.cols() || p_hat.rows() == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "loss_cls_u: prediction shapes differ");
  }
  double ce = 0.0;
  for (Eigen::Index i = 0; i < p_hat.rows(); ++i) {
    for (Eigen::Index k = 0; k < p_hat.cols(); ++k) {
      if (p_tilde(i, k) > 0.0) ce -= p_tilde(i, k) * std::log(std::max(p_hat(i, k), kTiny));
    }
  }
  ce /= static_cast<double>(p_hat.rows());
  return ce - epsilon * mean_prediction_entropy(p_hat, p_tilde);
}

Matrix teacher_predictions(const Batch& batch, const Matrix& prototypes, const HyperParams& hp) {
  return soft_labels(batch.view2, prototypes, hp.teacher_tau());
}

double classifier_loss(const Batch& batch, const Matrix& prototypes, const HyperParams& hp,
                       const Matrix& teacher) {
  check_batch(batch);
  const Matrix p_hat = soft_labels(batch.view1, prototypes, hp.tau_s);
  const double u = loss_cls_u(p_hat, teacher, hp.epsilon);
  const double l = loss_cls_l(p_hat, batch.labels, batch.weights);
  return (1.0 - hp.lambda) * u + hp.lambda * l;
}

LossBreakdown total_loss(const Batch& batch, const DiscoveryModel& model) {
  check_batch(batch);
  const HyperParams& hp = model.hp;
  LossBreakdown out;
  const auto [z1, z2] = project_views(batch, model.projection);
  out.rep_u = loss_rep_u(z1, z2, hp.tau_u);
  out.rep_s = loss_rep_s(z1, z2, batch.labels, batch.weights, hp.tau_s);
  const Matrix p_hat = soft_labels(batch.view1, model.prototypes, hp.tau_s);
  const Matrix p_tilde = soft_labels(batch.view2, model.prototypes, hp.teacher_tau());
  out.cls_u = loss_cls_u(p_hat, p_tilde, hp.epsilon);
  out.cls_l = loss_cls_l(p_hat, batch.labels, batch.weights);
  out.total = (1.0 - hp.lambda) * (out.rep_u + out.cls_u) + hp.lambda * (out.rep_s + out.cls_l);
  return out;
}

Matrix prototype_gradient(const Batch& batch, const Matrix& prototypes, const HyperParams& hp,
                          const Matrix& teacher) {
  check_batch(batch);
  const Eigen::Index n = batch.view1.rows();
  const Eigen::Index k = prototypes.rows();
  const Matrix h = normalize_rows(batch.view1, "feature");
  const Matrix c = normalize_rows(prototypes, "prototype");
  const Matrix p = softmax_rows(h * c.transpose() / hp.tau_s);

  // g(i, k) = dL / dlogit_ik with logit = cosine / tau.
  Matrix g = Matrix::Zero(n, k);
  const double a_u = (1.0 - hp.lambda) / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    g.row(i) += a_u * (p.row(i) * teacher.row(i).sum() - teacher.row(i));
  }
  const std::size_t n_l = batch.n_labeled();
  if (n_l > 0 && hp.lambda > 0.0) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const int y = batch.labels[static_cast<std::size_t>(i)];
      const double w = batch.weights[static_cast<std::size_t>(i)];
      if (y < 0 || w == 0.0) continue;
      if (y >= k) throw Error(ErrorCode::kLabelOutOfRange, "label exceeds K");
      const double a = hp.lambda * w / static_cast<double>(n_l);
      g.row(i) += a * p.row(i);
      g(i, y) -= a;
    }
  }
  if (hp.epsilon > 0.0 && hp.lambda < 1.0) {
    // d[-eps H(mean)] / dp_hat_ik = eps (log mean_k + 1) / 2n, then through the softmax.
    const RowVector mean = (p.colwise().sum() + teacher.colwise().sum()) / (2.0 * static_cast<double>(n));
    RowVector dp(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      dp(j) = (1.0 - hp.lambda) * hp.epsilon * (std::log(std::max(mean(j), kTiny)) + 1.0) /
              (2.0 * static_cast<double>(n));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double inner = p.row(i).dot(dp);
      g.row(i).array() += p.row(i).array() * (dp.array() - inner);
    }
  }
  const Matrix d_chat = g.transpose() * h / hp.tau_s;  // K x dim
  Matrix grad(k, prototypes.cols());
  for (Eigen::Index j = 0; j < k; ++j) {
    const double norm = prototypes.row(j).norm();
    const RowVector dj = d_chat.row(j);
    grad.row(j) = (dj - dj.dot(c.row(j)) * c.row(j)) / norm;
  }
  return grad;
}

double representation_loss(const Batch& batch, const Matrix& projection, const HyperParams& hp) {
  check_batch(batch);
  const auto [z1, z2] = project_views(batch, projection);
  return (1.0 - hp.lambda) * loss_rep_u(z1, z2, hp.tau_u) +
         hp.lambda * loss_rep_s(z1, z2, batch.labels, batch.weights, hp.tau_s);
}

Matrix projection_gradient(const Batch& batch, const Matrix& projection, const HyperParams& hp) {
  check_batch(batch);
  const Matrix y1 = batch.view1 * projection.transpose();
  const Matrix y2 = batch.view2 * projection.transpose();
  const Matrix z1 = normalize_rows(y1, "projected view");
  const Matrix z2 = normalize_rows(y2, "projected view");
  const auto [g1, g2] = rep_grad_wrt_z(z1, z2, batch.labels, batch.weights, hp);
  Matrix grad = Matrix::Zero(projection.rows(), projection.cols());
  auto accumulate = [&](const Matrix& y, const Matrix& z, const Matrix& gz, const Matrix& x) {
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const RowVector gy = (gz.row(i) - gz.row(i).dot(z.row(i)) * z.row(i)) / y.row(i).norm();
      grad += gy.transpose() * x.row(i);
    }
  };
  accumulate(y1, z1, g1, batch.view1);
  accumulate(y2, z2, g2, batch.view2);
  return grad;
}

DiscoveryModel train(const EmbeddingSet& labeled, const EmbeddingSet& unlabeled,
                     const WeightAssignment& weights, const HyperParams& hp, int K,
                     const TrainOptions& options) {
  hp.validate();
  if (labeled.dim() != unlabeled.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "labeled and unlabeled dims differ");
  }
  const int n_cat = labeled.n_categories();
  if (K < n_cat) {
    throw Error(ErrorCode::kInvalidArgument,
                "K=" + std::to_string(K) + " is below the " + std::to_string(n_cat) + " labeled categories");
  }
  if (static_cast<std::size_t>(K - n_cat) > unlabeled.size()) {
    throw Error(ErrorCode::kInvalidArgument, "not enough unlabeled instances to seed free prototypes");
  }
  const std::vector<double> omega = instance_weights(weights, labeled);
  const auto dim = static_cast<Eigen::Index>(labeled.dim());

  DiscoveryModel model;
  model.hp = hp;
  model.n_labeled_categories = n_cat;
  model.prototypes.resize(K, dim);
  std::mt19937_64 rng(hp.seed);
  if (hp.init == PrototypeInit::kCentroids) {
    const CentroidSet known = category_centroids(labeled);
    model.prototypes.topRows(n_cat) = known.centroids;
    if (K > n_cat) {
      model.prototypes.bottomRows(K - n_cat) =
          kmeans_pp_extend(unlabeled.features(), known.centroids, K - n_cat, hp.seed);
    }
  } else {
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index i = 0; i < model.prototypes.size(); ++i) model.prototypes.data()[i] = gauss(rng);
  }
  model.prototypes = normalize_rows(model.prototypes, "initial prototype");
  if (hp.proj_dim > 0) {
    std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    Matrix p(hp.proj_dim, dim);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = gauss(rng);
    model.projection = std::move(p);
  }

  const double mean_norm =
      (labeled.features().rowwise().norm().sum() + unlabeled.features().rowwise().norm().sum()) /
      static_cast<double>(labeled.size() + unlabeled.size());
  const double sigma = hp.noise_std * mean_norm;

  // Pool entries: index >= 0 is a labeled row, index < 0 encodes unlabeled row -index-1.
  std::vector<std::size_t> labeled_rows;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (!(hp.discard_zero_weight && omega[i] == 0.0)) labeled_rows.push_back(i);
  }
  std::vector<double> category_p;
  std::vector<std::vector<std::size_t>> members;
  if (hp.weight_mode == WeightMode::kResample) {
    category_p = resampling_distribution(weights);
    category_p.resize(static_cast<std::size_t>(n_cat), 0.0);
    members.resize(static_cast<std::size_t>(n_cat));
    for (std::size_t i = 0; i < labeled.size(); ++i) members[static_cast<std::size_t>(labeled.label(i))].push_back(i);
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    std::vector<std::ptrdiff_t> pool;
    if (hp.weight_mode == WeightMode::kReweight) {
      for (std::size_t i : labeled_rows) pool.push_back(static_cast<std::ptrdiff_t>(i));
    } else {
      std::discrete_distribution<std::size_t> pick_cat(category_p.begin(), category_p.end());
      for (std::size_t r = 0; r < labeled_rows.size(); ++r) {
        const auto& m = members[pick_cat(rng)];
        std::uniform_int_distribution<std::size_t> pick(0, m.size() - 1);
        pool.push_back(static_cast<std::ptrdiff_t>(m[pick(rng)]));
      }
    }
    for (std::size_t i = 0; i < unlabeled.size(); ++i) pool.push_back(-static_cast<std::ptrdiff_t>(i) - 1);
    std::shuffle(pool.begin(), pool.end(), rng);

    EpochMetrics metrics;
    metrics.epoch = epoch;
    int n_batches = 0;
    const auto bs = static_cast<std::size_t>(hp.batch_size);
    for (std::size_t start = 0; start < pool.size(); start += bs) {
      const std::size_t end = std::min(pool.size(), start + bs);
      if (end - start < 2) break;
      Batch batch;
      const auto rows = static_cast<Eigen::Index>(end - start);
      batch.view1.resize(rows, dim);
      batch.view2.resize(rows, dim);
      for (std::size_t r = start; r < end; ++r) {
        const std::ptrdiff_t e = pool[r];
        const auto row = static_cast<Eigen::Index>(r - start);
        if (e >= 0) {
          const auto i = static_cast<std::size_t>(e);
          batch.view1.row(row) = labeled.features().row(static_cast<Eigen::Index>(i));
          batch.labels.push_back(labeled.label(i));
          batch.weights.push_back(hp.weight_mode == WeightMode::kReweight ? omega[i] : 1.0);
        } else {
          batch.view1.row(row) = unlabeled.features().row(static_cast<Eigen::Index>(-e - 1));
          batch.labels.push_back(-1);
          batch.weights.push_back(0.0);
        }
        batch.view2.row(row) = batch.view1.row(row);
        for (Eigen::Index d = 0; d < dim; ++d) {
          batch.view1(row, d) += sigma * noise(rng);
          batch.view2(row, d) += sigma * noise(rng);
        }
      }

      const Matrix teacher = teacher_predictions(batch, model.prototypes, hp);
      const Matrix grad = prototype_gradient(batch, model.prototypes, hp, teacher);
      if (options.on_epoch) {
        const LossBreakdown lb = total_loss(batch, model);
        metrics.loss.rep_u += lb.rep_u;
        metrics.loss.rep_s += lb.rep_s;
        metrics.loss.cls_u += lb.cls_u;
        metrics.loss.cls_l += lb.cls_l;
        metrics.loss.total += lb.total;
      } else {
        metrics.loss.total += classifier_loss(batch, model.prototypes, hp, teacher);
      }
      metrics.prototype_grad_norm += grad.norm();
      ++n_batches;
      if (!std::isfinite(metrics.loss.total) || !grad.allFinite()) {
        throw Error(ErrorCode::kDivergence, "training diverged at epoch " + std::to_string(epoch) +
                                                ", batch " + std::to_string(n_batches) +
                                                " (loss " + std::to_string(metrics.loss.total) + ")");
      }
      model.prototypes -= hp.lr * grad;
      model.prototypes = normalize_rows(model.prototypes, "prototype");
      if (model.projection) {
        const Matrix pg = projection_gradient(batch, *model.projection, hp);
        if (!pg.allFinite()) throw Error(ErrorCode::kDivergence, "projection gradient is non-finite");
        *model.projection -= hp.proj_lr * pg;
      }
    }
    if (n_batches > 0) {
      const double inv = 1.0 / n_batches;
      metrics.loss.rep_u *= inv;
      metrics.loss.rep_s *= inv;
      metrics.loss.cls_u *= inv;
      metrics.loss.cls_l *= inv;
      metrics.loss.total *= inv;
      metrics.prototype_grad_norm *= inv;
    }
    if (options.on_epoch) options.on_epoch(metrics);
  }
  return model;
}

std::vector<int> assign_labels(const DiscoveryModel& model, const EmbeddingSet& data) {
  if (data.dim() != static_cast<std::size_t>(model.prototypes.cols())) {
    throw Error(ErrorCode::kDimensionMismatch, "data dim does not match the model");
  }
  const Matrix h = normalize_rows(data.features(), "feature");
  const Matrix c = normalize_rows(model.prototypes, "prototype");
  const Matrix cos = h * c.transpose();
  std::vector<int> out(data.size());
  for (Eigen::Index i = 0; i < cos.rows(); ++i) {
    int best = 0;
    for (Eigen::Index k = 1; k < cos.cols(); ++k) {
      if (cos(i, k) > cos(i, best)) best = static_cast<int>(k);
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

std::string metrics_to_json_line(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["loss_total"] = m.loss.total;
  j["loss_rep_u"] = m.loss.rep_u;
  j["loss_rep_s"] = m.loss.rep_s;
  j["loss_cls_u"] = m.loss.cls_u;
  j["loss_cls_l"] = m.loss.cls_l;
  j["prototype_grad_norm"] = m.prototype_grad_norm;
  return j.dump();
}

void save_checkpoint(const DiscoveryModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write("DSMD", 4);
  put_u32(out, static_cast<std::uint32_t>(model.prototypes.rows()));
  put_u32(out, static_cast<std::uint32_t>(model.prototypes.cols()));
  for (Eigen::Index i = 0; i < model.prototypes.size(); ++i) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(model.prototypes.data()[i])));
  }
  nlohmann::ordered_json trailer;
  trailer["hyperparameters"] = nlohmann::ordered_json::parse(model.hp.to_json());
  trailer["n_labeled_categories"] = model.n_labeled_categories;
  if (model.projection) {
    const Matrix& p = *model.projection;
    trailer["projection"] = {{"rows", p.rows()}, {"cols", p.cols()},
                             {"data", std::vector<double>(p.data(), p.data() + p.size())}};
  }
  out << trailer.dump();
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

DiscoveryModel load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::kMissingFile, "no such file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string raw = buf.str();
  const auto* bytes = reinterpret_cast<const unsigned char*>(raw.data());
  if (raw.size() < 12 || raw.compare(0, 4, "DSMD") != 0) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + ": missing DSMD magic");
  }
  const std::uint32_t k = get_u32(bytes + 4);
  const std::uint32_t dim = get_u32(bytes + 8);
  const std::size_t body = 12 + std::size_t{k} * dim * 4;
  if (raw.size() < body) throw Error(ErrorCode::kDimensionMismatch, path.string() + ": truncated prototypes");
  DiscoveryModel model;
  model.prototypes.resize(k, dim);
  for (std::size_t i = 0; i < std::size_t{k} * dim; ++i) {
    model.prototypes.data()[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes + 12 + 4 * i)));
  }
  nlohmann::json trailer;
  try {
    trailer = nlohmann::json::parse(raw.substr(body));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + ": bad JSON trailer: " + e.what());
  }
  model.hp = HyperParams::from_json(trailer.at("hyperparameters").dump());
  model.n_labeled_categories = trailer.value("n_labeled_categories", 0);
  if (trailer.contains("projection")) {
    const auto& p = trailer["projection"];
    Matrix m(p.at("rows").get<Eigen::Index>(), p.at("cols").get<Eigen::Index>());
    const auto data = p.at("data").get<std::vector<double>>();
    std::copy(data.begin(), data.end(), m.data());
    model.projection = std::move(m);
  }
  return model;
}

}  // namespace dsel
