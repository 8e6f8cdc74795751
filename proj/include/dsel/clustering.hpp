#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dsel/data_model.hpp"

namespace dsel {

enum class CentroidOrigin { kLabeledCategories, kUnlabeledClusters };

struct CentroidSet {
  Matrix centroids;                 // K x dim
  std::vector<std::size_t> counts;  // members per centroid
  CentroidOrigin origin = CentroidOrigin::kUnlabeledClusters;

  std::size_t size() const { return static_cast<std::size_t>(centroids.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(centroids.cols()); }
};

// Concatenates two centroid sets (rows of `a` first). Origin is taken from `a`.
CentroidSet concat(const CentroidSet& a, const CentroidSet& b);
// Subset of rows in the given order.
CentroidSet select_rows(const CentroidSet& set, std::span<const std::size_t> rows);

struct ClusterAssignment {
  std::vector<int> labels;
  double inertia = 0.0;
  int n_iter = 0;
  // Inertia after every assignment step, first entry from the initial centroids.
  std::vector<double> inertia_history;
};

struct KMeansOptions {
  int max_iter = 300;
  std::uint64_t seed = 0;
};

/// Per-category mean feature vectors of a labeled set; one row per category id.
CentroidSet category_centroids(const EmbeddingSet& labeled);

/// D^2 (k-means++) seeding. The first centre is uniform over instances; each
/// subsequent one is drawn with probability proportional to the squared
/// distance to the nearest centre chosen so far.
CentroidSet kmeans_pp_init(const EmbeddingSet& data, int k, std::uint64_t seed);

// Continues D^2 seeding from a fixed set of existing centres and returns only
// the `extra` new ones. Used to fill the free slots of constrained models.
Matrix kmeans_pp_extend(const Matrix& data, const Matrix& existing, int extra, std::uint64_t seed);

struct KMeansResult {
  CentroidSet centroids;
  ClusterAssignment assignment;
};

/// Lloyd iterations from k-means++ until the assignment stops changing or
/// max_iter is reached. Empty clusters are reseeded to the point farthest
/// from its current centroid, so exactly k clusters always come back.
KMeansResult kmeans(const EmbeddingSet& data, int k, const KMeansOptions& options = {});

struct SemiSupervisedKMeansOptions {
  int max_iter = 300;
  std::uint64_t seed = 0;
  // Keep the labeled-category centroids at their initial means.
  bool freeze_labeled_centroids = false;
  // Called after each assignment step with (iteration, labels over the union).
  std::function<void(int, const std::vector<int>&)> on_iteration;
};

/// k-means over labeled ∪ unlabeled (labeled rows first in the returned
/// labels) where each labeled instance is pinned to the cluster indexed by
/// its category. Centroids 0..C-1 start at the category means; the remaining
/// k - C are D^2-seeded from the unlabeled rows.
KMeansResult semi_supervised_kmeans(const EmbeddingSet& labeled, const EmbeddingSet& unlabeled,
                                    int k, const SemiSupervisedKMeansOptions& options = {});

double squared_distance(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b);

}  // namespace dsel
