#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dsel/types.hpp"

namespace dsel {

// Minimum-cost perfect assignment on a square cost matrix (Hungarian /
// Kuhn-Munkres with potentials, O(n^3)). Returns column index per row.
std::vector<int> solve_assignment(const Matrix& cost);

struct Matching {
  std::map<int, int> permutation;  // predicted cluster -> true class
  std::size_t matched = 0;         // instances on the diagonal of the matching
};

/// Maximum-weight matching of predicted clusters to true classes on the
/// contingency table, zero-padded to square when the counts differ.
Matching hungarian_match(std::span<const int> true_labels, std::span<const int> predicted);

double clustering_accuracy(std::span<const int> true_labels, std::span<const int> predicted);

struct ErrorCounts {
  std::size_t misclassified_as_new = 0;
  std::size_t misclassified_as_old = 0;
};

struct EvalReport {
  double acc_all = 0.0;
  std::optional<double> acc_old;  // absent when the split is empty
  std::optional<double> acc_new;
  Matching matching;
  ErrorCounts errors;
  std::size_t n_all = 0;
  std::size_t n_old = 0;
  std::size_t n_new = 0;

  std::string to_json() const;
};

/// Counts novel-class errors by destination: a cluster is "old" when its
/// matched class is in `old_classes`. Unmatched clusters count as new unless
/// they are listed in `seen_clusters` (prototypes of labeled categories).
ErrorCounts error_taxonomy(std::span<const int> true_labels, std::span<const int> predicted,
                           const Matching& matching, const std::set<int>& old_classes,
                           const std::set<int>& seen_clusters = {});

/// One global matching over all instances; Old/New accuracies are that
/// matching restricted to instances whose true class is old / new.
EvalReport split_accuracy(std::span<const int> true_labels, std::span<const int> predicted,
                          const std::set<int>& old_classes, const std::set<int>& seen_clusters = {});

// method,dataset,acc_all,acc_old,acc_new,err_as_new,err_as_old
std::string sweep_csv_header();
std::string sweep_csv_row(const std::string& method, const std::string& dataset, const EvalReport& report);

}  // namespace dsel
