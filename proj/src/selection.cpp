#include "dsel/selection.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

namespace dsel {

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

// Category ids ordered by ascending score, ties to the lower id.
std::vector<int> rank_ascending(const std::vector<int>& ids, const std::vector<double>& score) {
  std::vector<int> order = ids;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return score[static_cast<std::size_t>(a)] < score[static_cast<std::size_t>(b)];
  });
  return order;
}

}  // namespace

std::string_view to_string(SimilarityReduce reduce) {
  switch (reduce) {
    case SimilarityReduce::kMin: return "min";
    case SimilarityReduce::kMedian: return "median";
    case SimilarityReduce::kMax: return "max";
  }
  return "?";
}

SimilarityReduce reduce_from_string(std::string_view name) {
  if (name == "min") return SimilarityReduce::kMin;
  if (name == "median") return SimilarityReduce::kMedian;
  if (name == "max") return SimilarityReduce::kMax;
  throw Error(ErrorCode::kInvalidArgument, "unknown similarity reduce: " + std::string(name));
}

void BetaParams::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw Error(ErrorCode::kInvalidArgument, "beta shape parameters must be positive");
  }
}

void BinningParams::validate() const {
  if (n_chunks < 1) throw Error(ErrorCode::kInvalidArgument, "L must be >= 1");
  if (n_splits < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one split");
  if (select_chunk < 1 || select_chunk > n_chunks) {
    throw Error(ErrorCode::kInvalidArgument, "select_chunk must lie in [1, L]");
  }
}

double beta_pdf(double x, double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "beta shape parameters must be positive");
  }
  if (!(x >= 0.0 && x <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "beta_pdf: x must lie in [0, 1]");
  }
  const double log_b = std::lgamma(alpha) + std::lgamma(beta) - std::lgamma(alpha + beta);
  if ((x == 0.0 && alpha < 1.0) || (x == 1.0 && beta < 1.0)) {
    warn("beta_pdf diverges at the endpoint; clamped to 0");
    return 0.0;
  }
  double log_p = -log_b;
  // 0^0 = 1 for the unit exponents.
  if (alpha != 1.0) {
    if (x == 0.0) return 0.0;
    log_p += (alpha - 1.0) * std::log(x);
  }
  if (beta != 1.0) {
    if (x == 1.0) return 0.0;
    log_p += (beta - 1.0) * std::log1p(-x);
  }
  return std::exp(log_p);
}

std::vector<double> category_similarity(const CentroidSet& labeled_centroids, const EmbeddingSet& target,
                                        SimilarityReduce reduce) {
  if (labeled_centroids.dim() != target.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "category_similarity: dims differ");
  }
  if (target.size() == 0) throw Error(ErrorCode::kInvalidArgument, "empty target set");
  const Matrix& x = target.features();
  const Vector norms = x.rowwise().norm();
  if ((norms.array() <= 0.0).any()) throw Error(ErrorCode::kZeroNorm, "zero-norm target instance");
  std::vector<double> out;
  std::vector<double> cosines(target.size());
  for (Eigen::Index c = 0; c < labeled_centroids.centroids.rows(); ++c) {
    const double cn = labeled_centroids.centroids.row(c).norm();
    if (!(cn > 0.0)) throw Error(ErrorCode::kZeroNorm, "zero-norm labeled centroid");
    const Vector dots = x * labeled_centroids.centroids.row(c).transpose();
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      cosines[static_cast<std::size_t>(i)] = std::clamp(dots(i) / (norms(i) * cn), -1.0, 1.0);
    }
    switch (reduce) {
      case SimilarityReduce::kMin: out.push_back(*std::min_element(cosines.begin(), cosines.end())); break;
      case SimilarityReduce::kMax: out.push_back(*std::max_element(cosines.begin(), cosines.end())); break;
      case SimilarityReduce::kMedian: out.push_back(median_of(cosines)); break;
    }
  }
  return out;
}

SelectionResult beta_weights(std::span<const double> similarities, const BetaParams& params) {
  params.validate();
  SelectionResult result;
  result.diagnostics.method = "beta";
  for (std::size_t c = 0; c < similarities.size(); ++c) {
    const double s = similarities[c];
    if (!std::isfinite(s)) throw Error(ErrorCode::kNonFinite, "non-finite similarity");
    if (s < -1.0 - 1e-12 || s > 1.0 + 1e-12) {
      throw Error(ErrorCode::kInvalidArgument, "similarity outside [-1, 1]");
    }
    const double x = std::clamp(rescale_similarity(s), 0.0, 1.0);
    result.weights.category_weights[static_cast<int>(c)] = beta_pdf(x, params);
    result.diagnostics.scores.push_back(s);
  }
  return result;
}

SelectionResult greedy_similar_selection(const CentroidSet& source_centroids,
                                         const CentroidSet& target_centroids, int budget,
                                         Metric metric, bool uniform) {
  const int n = static_cast<int>(source_centroids.size());
  if (budget < 0 || budget > n) {
    throw Error(ErrorCode::kInvalidArgument, "budget must lie in [0, " + std::to_string(n) + "]");
  }
  const CostMatrix cost = pairwise_cost(source_centroids, target_centroids, metric);
  const auto src = uniform ? uniform_marginals(source_centroids.size())
                           : marginals_from_counts(source_centroids.counts);
  const auto tgt = uniform ? uniform_marginals(target_centroids.size())
                           : marginals_from_counts(target_centroids.counts);
  const EmdResult emd = solve_emd(cost, src, tgt);
  const PerSourceDistance dist = per_source_distance(emd.flow, cost);

  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  const auto order = rank_ascending(ids, dist.distance);
  SelectionResult result;
  result.diagnostics.method = "greedy";
  result.diagnostics.scores = dist.distance;
  for (int c = 0; c < n; ++c) result.weights.category_weights[c] = 0.0;
  for (int r = 0; r < budget; ++r) result.weights.category_weights[order[static_cast<std::size_t>(r)]] = 1.0;
  for (int r = budget; r < n; ++r) result.diagnostics.discarded.push_back(order[static_cast<std::size_t>(r)]);
  std::sort(result.diagnostics.discarded.begin(), result.diagnostics.discarded.end());
  return result;
}

SelectionResult binning_select(const EmbeddingSet& labeled, const CentroidSet& target_clusters,
                               const BinningParams& params) {
  params.validate();
  const std::size_t k = target_clusters.size();
  if (k < 2) throw Error(ErrorCode::kInvalidArgument, "binning needs at least two target clusters");
  if (k % 2) warn("odd number of target clusters; the extra cluster goes to D1");
  const CentroidSet categories = category_centroids(labeled);
  const auto n_cat = static_cast<std::size_t>(labeled.n_categories());

  std::vector<int> keep_votes(n_cat, 0);
  std::vector<double> dist_sum(n_cat, 0.0);
  std::vector<int> dist_n(n_cat, 0);
  SelectionDiagnostics diag;
  diag.method = "bins";

  for (int s = 0; s < params.n_splits; ++s) {
    std::mt19937_64 rng(params.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(s));
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t half = k / 2;
    const std::vector<std::size_t> d0(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
    const std::vector<std::size_t> d1(order.begin() + static_cast<std::ptrdiff_t>(half), order.end());

    const CentroidSet source = concat(categories, select_rows(target_clusters, d0));
    const CentroidSet target = select_rows(target_clusters, d1);
    const CostMatrix cost = pairwise_cost(source, target, params.metric);
    const auto src = params.uniform_marginals ? uniform_marginals(source.size())
                                              : marginals_from_counts(source.counts);
    const auto tgt = params.uniform_marginals ? uniform_marginals(target.size())
                                              : marginals_from_counts(target.counts);
    const EmdResult emd = solve_emd(cost, src, tgt);
    const PerSourceDistance dist = per_source_distance(emd.flow, cost);

    double threshold = 0.0;
    for (std::size_t i = n_cat; i < source.size(); ++i) threshold += dist.distance[i];
    threshold /= static_cast<double>(half);
    diag.split_thresholds.push_back(threshold);

    for (std::size_t c = 0; c < n_cat; ++c) {
      if (dist.distance[c] <= threshold) ++keep_votes[c];
      if (std::isfinite(dist.distance[c])) {
        dist_sum[c] += dist.distance[c];
        ++dist_n[c];
      }
    }
  }

  diag.threshold = std::accumulate(diag.split_thresholds.begin(), diag.split_thresholds.end(), 0.0) /
                   static_cast<double>(params.n_splits);
  std::vector<int> survivors;
  for (std::size_t c = 0; c < n_cat; ++c) {
    diag.scores.push_back(dist_n[c] ? dist_sum[c] / dist_n[c] : std::numeric_limits<double>::infinity());
    diag.keep_fraction.push_back(static_cast<double>(keep_votes[c]) / params.n_splits);
    if (2 * keep_votes[c] > params.n_splits) {
      survivors.push_back(static_cast<int>(c));
    } else {
      diag.discarded.push_back(static_cast<int>(c));
    }
  }

  SelectionResult result;
  diag.chunk.assign(n_cat, 0);
  for (std::size_t c = 0; c < n_cat; ++c) result.weights.category_weights[static_cast<int>(c)] = 0.0;
  if (survivors.empty()) {
    warn("binning discarded every labeled category; the source looks unrelated to the target");
  } else {
    const auto order = rank_ascending(survivors, diag.scores);
    const std::size_t chunk_size = order.size() / static_cast<std::size_t>(params.n_chunks);
    for (std::size_t r = 0; r < order.size(); ++r) {
      // Remainder lands in the last chunk.
      const int chunk = chunk_size == 0
                            ? params.n_chunks
                            : std::min(static_cast<int>(r / chunk_size) + 1, params.n_chunks);
      const int c = order[r];
      diag.chunk[static_cast<std::size_t>(c)] = chunk;
      if (chunk == params.select_chunk) result.weights.category_weights[c] = 1.0;
    }
  }
  result.diagnostics = std::move(diag);
  return result;
}

SelectionResult binning_select(const EmbeddingSet& labeled, const EmbeddingSet& unlabeled,
                               int k_unlabeled, const BinningParams& params) {
  if (k_unlabeled < 2) throw Error(ErrorCode::kInvalidArgument, "binning needs k_unlabeled >= 2");
  if (labeled.dim() != unlabeled.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "labeled and unlabeled dims differ");
  }
  KMeansOptions opts;
  opts.seed = params.seed;
  const KMeansResult clusters = kmeans(unlabeled, k_unlabeled, opts);
  return binning_select(labeled, clusters.centroids, params);
}

WeightAssignment harden_weights(const WeightAssignment& weights, double threshold) {
  if (!(threshold >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "threshold must be >= 0");
  WeightAssignment out;
  for (const auto& [c, w] : weights.category_weights) out.category_weights[c] = w >= threshold ? 1.0 : 0.0;
  return out;
}

std::vector<double> resampling_distribution(const WeightAssignment& weights) {
  weights.validate();
  double total = 0.0;
  int max_id = -1;
  for (const auto& [c, w] : weights.category_weights) {
    total += w;
    max_id = std::max(max_id, c);
  }
  if (!(total > 0.0)) throw Error(ErrorCode::kInvalidArgument, "resampling needs a positive weight");
  std::vector<double> p(static_cast<std::size_t>(max_id + 1), 0.0);
  for (const auto& [c, w] : weights.category_weights) p[static_cast<std::size_t>(c)] = w / total;
  return p;
}

std::string SelectionResult::to_json() const {
  nlohmann::ordered_json j;
  j["method"] = diagnostics.method;
  nlohmann::ordered_json w = nlohmann::ordered_json::object();
  for (const auto& [c, v] : weights.category_weights) w[std::to_string(c)] = v;
  j["weights"] = w;
  auto finite_or_null = [](double v) {
    return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json diag;
  diag["scores"] = nlohmann::ordered_json::array();
  for (double s : diagnostics.scores) diag["scores"].push_back(finite_or_null(s));
  if (!diagnostics.keep_fraction.empty()) diag["keep_fraction"] = diagnostics.keep_fraction;
  if (!diagnostics.chunk.empty()) diag["chunk"] = diagnostics.chunk;
  if (!diagnostics.split_thresholds.empty()) diag["split_thresholds"] = diagnostics.split_thresholds;
  j["diagnostics"] = diag;
  j["threshold"] = diagnostics.threshold ? nlohmann::ordered_json(*diagnostics.threshold)
                                         : nlohmann::ordered_json(nullptr);
  j["discarded"] = diagnostics.discarded;
  return j.dump(2);
}

}  // namespace dsel
