#pragma once

#include <filesystem>
#include <vector>

#include "dsel/clustering.hpp"

namespace dsel {

enum class Metric { kEuclidean, kCosineDistance, kL2NormEuclidean };

std::string_view to_string(Metric metric);
Metric metric_from_string(std::string_view name);

struct CostMatrix {
  Matrix d;  // N x M, finite and >= 0
  Metric metric = Metric::kEuclidean;
};

// Mass per centroid; non-negative, sums to 1.
using MarginalWeights = std::vector<double>;

MarginalWeights marginals_from_counts(std::span<const std::size_t> counts);
MarginalWeights uniform_marginals(std::size_t n);

struct FlowMatrix {
  Matrix k;  // N x M
  MarginalWeights source_marginals;
  MarginalWeights target_marginals;
};

struct EmdResult {
  double value = 0.0;
  FlowMatrix flow;
  // Dual potentials of the optimal basis: reduced cost d_ij - u_i - v_j >= 0
  // everywhere and == 0 on basic cells.
  std::vector<double> u;
  std::vector<double> v;
  int pivots = 0;

  // Largest violation of dual feasibility, max(0, -(d_ij - u_i - v_j)).
  double dual_infeasibility(const CostMatrix& cost) const;
};

CostMatrix pairwise_cost(const CentroidSet& a, const CentroidSet& b, Metric metric = Metric::kEuclidean);
CostMatrix pairwise_cost(const Matrix& a, const Matrix& b, Metric metric = Metric::kEuclidean);

/// Exact earth mover's distance by the transportation simplex.
///
/// The initial basis comes from the north-west corner rule (always a spanning
/// tree of N+M-1 cells, degenerate zeros included). Each pivot computes the
/// dual potentials on the tree, enters the first cell in row-major order with
/// negative reduced cost (Bland), walks the unique cycle through the tree and
/// leaves the lowest-indexed blocking cell. The problem is solved in a
/// canonical orientation (fewer rows first), so swapping source and target
/// gives the transposed flow and a bit-identical value.
EmdResult solve_emd(const CostMatrix& cost, const MarginalWeights& source,
                    const MarginalWeights& target);

/// exp(-gamma * emd). Monotone, so rankings never depend on gamma.
double domain_similarity(double emd_value, double gamma = 1.0);

struct PerSourceDistance {
  std::vector<double> distance;  // +inf where a row carries no flow
  std::vector<bool> zero_mass;
};

// d_{i,:} = sum_j k_ij d_ij / sum_j k_ij for every source row.
PerSourceDistance per_source_distance(const FlowMatrix& flow, const CostMatrix& cost);

void dump_flow_csv(const FlowMatrix& flow, const std::filesystem::path& path);

}  // namespace dsel
