#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dsel/transport.hpp"

namespace dsel {

enum class SimilarityReduce { kMin, kMedian, kMax };

std::string_view to_string(SimilarityReduce reduce);
SimilarityReduce reduce_from_string(std::string_view name);

// Shape of the beta weighting curve. Similarities in [-1, 1] enter the pdf
// through x = (s + 1) / 2.
struct BetaParams {
  double alpha = 5.0;
  double beta = 5.0;
  SimilarityReduce reduce = SimilarityReduce::kMin;

  void validate() const;
};

inline double rescale_similarity(double s) { return (s + 1.0) / 2.0; }

struct BinningParams {
  int n_chunks = 2;      // L
  int n_splits = 10;     // random bisections of the target clusters
  int select_chunk = 2;  // 1-based; L picks the most distant chunk
  std::uint64_t seed = 0;
  Metric metric = Metric::kEuclidean;
  bool uniform_marginals = false;

  void validate() const;
};

struct SelectionDiagnostics {
  std::string method;
  // Per labeled category: similarity (beta) or mean distance d_{i,:} (bins, greedy).
  std::vector<double> scores;
  std::optional<double> threshold;  // mean within-target distance, bins only
  std::vector<int> discarded;
  // Bins only: fraction of splits that kept each category, and its chunk (0 = discarded).
  std::vector<double> keep_fraction;
  std::vector<int> chunk;
  std::vector<double> split_thresholds;
};

struct SelectionResult {
  WeightAssignment weights;
  SelectionDiagnostics diagnostics;

  std::string to_json() const;
};

/// Beta density x^(a-1) (1-x)^(b-1) / B(a, b) with B via log-gamma.
/// Endpoints where the density diverges (a < 1 at 0, b < 1 at 1) are clamped
/// to 0 and reported on the diagnostic stream.
double beta_pdf(double x, double alpha, double beta);
inline double beta_pdf(double x, const BetaParams& p) { return beta_pdf(x, p.alpha, p.beta); }

// For every labeled centroid, reduce cos(centroid, x) over all target rows.
std::vector<double> category_similarity(const CentroidSet& labeled_centroids, const EmbeddingSet& target,
                                        SimilarityReduce reduce = SimilarityReduce::kMin);

SelectionResult beta_weights(std::span<const double> similarities, const BetaParams& params);

// Ranks source categories by d_{i,:} under the EMD flow to the target
// centroids and keeps the `budget` closest (ties: lower id).
SelectionResult greedy_similar_selection(const CentroidSet& source_centroids,
                                         const CentroidSet& target_centroids, int budget,
                                         Metric metric = Metric::kEuclidean,
                                         bool uniform_marginals = false);

/// Two-stage hard selection. Per split, the target clusters are bisected into
/// D0 and D1, EMD is solved from (labeled categories ∪ D0 clusters) to D1, and
/// categories farther than the mean D0 distance are discarded. Keep decisions
/// are majority-voted over splits; survivors are ranked by mean distance,
/// chunked into L groups and only chunk `select_chunk` is kept.
SelectionResult binning_select(const EmbeddingSet& labeled, const EmbeddingSet& unlabeled,
                               int k_unlabeled, const BinningParams& params);

// Same as above with a precomputed clustering of the target.
SelectionResult binning_select(const EmbeddingSet& labeled, const CentroidSet& target_clusters,
                               const BinningParams& params);

WeightAssignment harden_weights(const WeightAssignment& weights, double threshold);

// p_c = w_c / sum w. Throws when every weight is zero.
std::vector<double> resampling_distribution(const WeightAssignment& weights);

}  // namespace dsel
