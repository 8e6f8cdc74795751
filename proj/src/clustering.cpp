#include "dsel/clustering.hpp"

#include <algorithm>
#include <limits>
#include <random>

namespace dsel {

namespace {

void check_k(std::size_t n, int k) {
  if (k <= 0) throw Error(ErrorCode::kInvalidArgument, "k must be positive");
  if (static_cast<std::size_t>(k) > n) {
    throw Error(ErrorCode::kInvalidArgument,
                "k=" + std::to_string(k) + " exceeds instance count " + std::to_string(n));
  }
}

// Nearest centroid by squared distance; ties go to the lower index.
int nearest(const Eigen::Ref<const RowVector>& x, const Matrix& centroids, double* best_dist) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (best_dist) *best_dist = best_d;
  return best;
}

// Draws an index with probability proportional to weights; uniform if all zero.
std::size_t draw_weighted(const std::vector<double>& weights, std::mt19937_64& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) {
    std::uniform_int_distribution<std::size_t> uni(0, weights.size() - 1);
    return uni(rng);
  }
  std::uniform_real_distribution<double> u(0.0, total);
  const double r = u(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (r < acc) return i;
  }
  return last_positive;
}

// Recomputes centroids as member means. Returns ids of clusters left empty.
std::vector<int> update_centroids(const Matrix& data, const std::vector<int>& labels, Matrix& centroids,
                                  std::vector<std::size_t>& counts, int first_updated = 0) {
  const Eigen::Index k = centroids.rows();
  Matrix sums = Matrix::Zero(k, data.cols());
  std::vector<std::size_t> n(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const int c = labels[static_cast<std::size_t>(i)];
    sums.row(c) += data.row(i);
    ++n[static_cast<std::size_t>(c)];
  }
  std::vector<int> empty;
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto cu = static_cast<std::size_t>(c);
    counts[cu] = n[cu];
    if (n[cu] == 0) {
      empty.push_back(static_cast<int>(c));
    } else if (c >= first_updated) {
      centroids.row(c) = sums.row(c) / static_cast<double>(n[cu]);
    }
  }
  return empty;
}

double inertia_of(const Matrix& data, const std::vector<int>& labels, const Matrix& centroids) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    total += (data.row(i) - centroids.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return total;
}

// Moves each empty cluster onto the point farthest from its assigned centroid
// among `movable` rows, reassigning that point.
void repair_empty(const Matrix& data, std::vector<int>& labels, Matrix& centroids,
                  std::vector<std::size_t>& counts, const std::vector<int>& empty,
                  std::size_t movable_from) {
  for (int e : empty) {
    double worst = -1.0;
    std::size_t worst_i = movable_from;
    for (std::size_t i = movable_from; i < labels.size(); ++i) {
      const int c = labels[i];
      if (counts[static_cast<std::size_t>(c)] <= 1) continue;
      const double d = (data.row(static_cast<Eigen::Index>(i)) - centroids.row(c)).squaredNorm();
      if (d > worst) {
        worst = d;
        worst_i = i;
      }
    }
    if (worst < 0.0) continue;
    --counts[static_cast<std::size_t>(labels[worst_i])];
    labels[worst_i] = e;
    counts[static_cast<std::size_t>(e)] = 1;
    centroids.row(e) = data.row(static_cast<Eigen::Index>(worst_i));
  }
}

}  // namespace

double squared_distance(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b) {
  return (a - b).squaredNorm();
}

CentroidSet concat(const CentroidSet& a, const CentroidSet& b) {
  if (a.size() > 0 && b.size() > 0 && a.dim() != b.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "centroid sets differ in dim");
  }
  CentroidSet out;
  out.origin = a.origin;
  out.centroids.resize(a.centroids.rows() + b.centroids.rows(),
                       std::max(a.centroids.cols(), b.centroids.cols()));
  if (a.size()) out.centroids.topRows(a.centroids.rows()) = a.centroids;
  if (b.size()) out.centroids.bottomRows(b.centroids.rows()) = b.centroids;
  out.counts = a.counts;
  out.counts.insert(out.counts.end(), b.counts.begin(), b.counts.end());
  return out;
}

CentroidSet select_rows(const CentroidSet& set, std::span<const std::size_t> rows) {
  CentroidSet out;
  out.origin = set.origin;
  out.centroids.resize(static_cast<Eigen::Index>(rows.size()), set.centroids.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.centroids.row(static_cast<Eigen::Index>(r)) = set.centroids.row(static_cast<Eigen::Index>(rows[r]));
    out.counts.push_back(set.counts[rows[r]]);
  }
  return out;
}

CentroidSet category_centroids(const EmbeddingSet& labeled) {
  const auto& labels = labeled.labels();
  const int k = labeled.n_categories();
  CentroidSet out;
  out.origin = CentroidOrigin::kLabeledCategories;
  out.centroids = Matrix::Zero(k, static_cast<Eigen::Index>(labeled.dim()));
  out.counts.assign(static_cast<std::size_t>(k), 0);
  const Matrix& f = labeled.features();
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    const int c = labels[static_cast<std::size_t>(i)];
    out.centroids.row(c) += f.row(i);
    ++out.counts[static_cast<std::size_t>(c)];
  }
  for (int c = 0; c < k; ++c) {
    out.centroids.row(c) /= static_cast<double>(out.counts[static_cast<std::size_t>(c)]);
  }
  return out;
}

Matrix kmeans_pp_extend(const Matrix& data, const Matrix& existing, int extra, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(data.rows());
  if (extra < 0 || static_cast<std::size_t>(extra) > n) {
    throw Error(ErrorCode::kInvalidArgument, "cannot seed " + std::to_string(extra) +
                                                 " centres from " + std::to_string(n) + " points");
  }
  std::mt19937_64 rng(seed);
  Matrix chosen(extra, data.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  auto absorb = [&](const Eigen::Ref<const RowVector>& centre) {
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (data.row(static_cast<Eigen::Index>(i)) - centre).squaredNorm());
    }
  };
  for (Eigen::Index c = 0; c < existing.rows(); ++c) absorb(existing.row(c));
  for (int m = 0; m < extra; ++m) {
    std::size_t pick;
    if (existing.rows() == 0 && m == 0) {
      std::uniform_int_distribution<std::size_t> uni(0, n - 1);
      pick = uni(rng);
    } else {
      pick = draw_weighted(d2, rng);
    }
    chosen.row(m) = data.row(static_cast<Eigen::Index>(pick));
    absorb(chosen.row(m));
  }
  return chosen;
}

CentroidSet kmeans_pp_init(const EmbeddingSet& data, int k, std::uint64_t seed) {
  check_k(data.size(), k);
  CentroidSet out;
  out.origin = CentroidOrigin::kUnlabeledClusters;
  out.centroids = kmeans_pp_extend(data.features(), Matrix(0, data.features().cols()), k, seed);
  out.counts.assign(static_cast<std::size_t>(k), 0);
  return out;
}

KMeansResult kmeans(const EmbeddingSet& data, int k, const KMeansOptions& options) {
  check_k(data.size(), k);
  const Matrix& x = data.features();
  const std::size_t n = data.size();
  KMeansResult result;
  result.centroids = kmeans_pp_init(data, k, options.seed);
  Matrix& c = result.centroids.centroids;
  auto& counts = result.centroids.counts;
  ClusterAssignment& a = result.assignment;
  a.labels.assign(n, -1);

  for (int iter = 0; iter < std::max(options.max_iter, 1); ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int best = nearest(x.row(static_cast<Eigen::Index>(i)), c, nullptr);
      if (best != a.labels[i]) {
        a.labels[i] = best;
        changed = true;
      }
    }
    a.inertia_history.push_back(inertia_of(x, a.labels, c));
    a.n_iter = iter + 1;
    if (!changed) break;
    const auto empty = update_centroids(x, a.labels, c, counts);
    if (!empty.empty()) repair_empty(x, a.labels, c, counts, empty, 0);
  }
  update_centroids(x, a.labels, c, counts);
  a.inertia = inertia_of(x, a.labels, c);
  return result;
}

KMeansResult semi_supervised_kmeans(const EmbeddingSet& labeled, const EmbeddingSet& unlabeled,
                                    int k, const SemiSupervisedKMeansOptions& options) {
  if (labeled.dim() != unlabeled.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "labeled and unlabeled dims differ");
  }
  const int n_cat = labeled.n_categories();
  if (k < n_cat) {
    throw Error(ErrorCode::kInvalidArgument, "k=" + std::to_string(k) + " is below the " +
                                                 std::to_string(n_cat) + " labeled categories");
  }
  const auto n_l = labeled.size();
  const auto n_u = unlabeled.size();
  if (static_cast<std::size_t>(k - n_cat) > n_u) {
    throw Error(ErrorCode::kInvalidArgument, "not enough unlabeled points to seed free clusters");
  }
  Matrix x(static_cast<Eigen::Index>(n_l + n_u), static_cast<Eigen::Index>(labeled.dim()));
  x.topRows(static_cast<Eigen::Index>(n_l)) = labeled.features();
  x.bottomRows(static_cast<Eigen::Index>(n_u)) = unlabeled.features();

  KMeansResult result;
  CentroidSet& cs = result.centroids;
  cs.origin = CentroidOrigin::kLabeledCategories;
  cs.centroids.resize(k, x.cols());
  const CentroidSet known = category_centroids(labeled);
  cs.centroids.topRows(n_cat) = known.centroids;
  if (k > n_cat) {
    cs.centroids.bottomRows(k - n_cat) =
        kmeans_pp_extend(unlabeled.features(), known.centroids, k - n_cat, options.seed);
  }
  cs.counts.assign(static_cast<std::size_t>(k), 0);

  ClusterAssignment& a = result.assignment;
  a.labels.assign(n_l + n_u, -1);
  for (std::size_t i = 0; i < n_l; ++i) a.labels[i] = labeled.label(i);
  const int first_updated = options.freeze_labeled_centroids ? n_cat : 0;

  for (int iter = 0; iter < std::max(options.max_iter, 1); ++iter) {
    bool changed = false;
    for (std::size_t i = n_l; i < n_l + n_u; ++i) {
      const int best = nearest(x.row(static_cast<Eigen::Index>(i)), cs.centroids, nullptr);
      if (best != a.labels[i]) {
        a.labels[i] = best;
        changed = true;
      }
    }
    a.inertia_history.push_back(inertia_of(x, a.labels, cs.centroids));
    a.n_iter = iter + 1;
    if (options.on_iteration) options.on_iteration(iter, a.labels);
    if (!changed) break;
    const auto empty = update_centroids(x, a.labels, cs.centroids, cs.counts, first_updated);
    // Labeled categories are never empty, so only free clusters need repair,
    // and only unlabeled rows may move.
    if (!empty.empty()) repair_empty(x, a.labels, cs.centroids, cs.counts, empty, n_l);
  }
  update_centroids(x, a.labels, cs.centroids, cs.counts, first_updated);
  a.inertia = inertia_of(x, a.labels, cs.centroids);
  return result;
}

}  // namespace dsel
