#include "dsel/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <nlohmann/json.hpp>

namespace dsel {

namespace {

void check_labels(std::span<const int> t, std::span<const int> p) {
  if (t.empty()) throw Error(ErrorCode::kInvalidArgument, "evaluation needs at least one instance");
  if (t.size() != p.size()) throw Error(ErrorCode::kDimensionMismatch, "label vectors differ in length");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < 0 || p[i] < 0) throw Error(ErrorCode::kLabelOutOfRange, "labels must be non-negative");
  }
}

}  // namespace

std::vector<int> solve_assignment(const Matrix& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  if (cost.cols() != cost.rows()) throw Error(ErrorCode::kDimensionMismatch, "assignment needs a square matrix");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is a virtual start.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> owner(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const std::size_t i0 = owner[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (std::size_t j = 1; j <= n; ++j) {
    if (owner[j] != 0) row_to_col[owner[j] - 1] = static_cast<int>(j - 1);
  }
  return row_to_col;
}

Matching hungarian_match(std::span<const int> true_labels, std::span<const int> predicted) {
  check_labels(true_labels, predicted);
  const int n_pred = *std::max_element(predicted.begin(), predicted.end()) + 1;
  const int n_true = *std::max_element(true_labels.begin(), true_labels.end()) + 1;
  const int d = std::max(n_pred, n_true);
  Matrix counts = Matrix::Zero(d, d);  // rows: predicted, cols: true
  for (std::size_t i = 0; i < true_labels.size(); ++i) counts(predicted[i], true_labels[i]) += 1.0;
  const Matrix cost = counts.maxCoeff() - counts.array();
  const auto assignment = solve_assignment(cost);
  Matching m;
  for (int p = 0; p < n_pred; ++p) {
    const int t = assignment[static_cast<std::size_t>(p)];
    if (t < n_true) {
      m.permutation[p] = t;
      m.matched += static_cast<std::size_t>(counts(p, t));
    }
  }
  return m;
}

double clustering_accuracy(std::span<const int> true_labels, std::span<const int> predicted) {
  const Matching m = hungarian_match(true_labels, predicted);
  return static_cast<double>(m.matched) / static_cast<double>(true_labels.size());
}

ErrorCounts error_taxonomy(std::span<const int> true_labels, std::span<const int> predicted,
                           const Matching& matching, const std::set<int>& old_classes,
                           const std::set<int>& seen_clusters) {
  check_labels(true_labels, predicted);
  ErrorCounts out;
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    if (old_classes.count(true_labels[i])) continue;
    const auto it = matching.permutation.find(predicted[i]);
    if (it != matching.permutation.end() && it->second == true_labels[i]) continue;
    const bool to_old = seen_clusters.empty()
                            ? it != matching.permutation.end() && old_classes.count(it->second) > 0
                            : seen_clusters.count(predicted[i]) > 0;
    ++(to_old ? out.misclassified_as_old : out.misclassified_as_new);
  }
  return out;
}

EvalReport split_accuracy(std::span<const int> true_labels, std::span<const int> predicted,
                          const std::set<int>& old_classes, const std::set<int>& seen_clusters) {
  EvalReport r;
  r.matching = hungarian_match(true_labels, predicted);
  r.n_all = true_labels.size();
  std::size_t hit_old = 0, hit_new = 0;
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    const auto it = r.matching.permutation.find(predicted[i]);
    const bool hit = it != r.matching.permutation.end() && it->second == true_labels[i];
    if (old_classes.count(true_labels[i])) {
      ++r.n_old;
      hit_old += hit;
    } else {
      ++r.n_new;
      hit_new += hit;
    }
  }
  r.acc_all = static_cast<double>(r.matching.matched) / static_cast<double>(r.n_all);
  if (r.n_old) r.acc_old = static_cast<double>(hit_old) / static_cast<double>(r.n_old);
  if (r.n_new) r.acc_new = static_cast<double>(hit_new) / static_cast<double>(r.n_new);
  r.errors = error_taxonomy(true_labels, predicted, r.matching, old_classes, seen_clusters);
  return r;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["acc_all"] = acc_all;
  j["acc_old"] = acc_old ? nlohmann::ordered_json(*acc_old) : nlohmann::ordered_json(nullptr);
  j["acc_new"] = acc_new ? nlohmann::ordered_json(*acc_new) : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json perm = nlohmann::ordered_json::object();
  for (const auto& [p, t] : matching.permutation) perm[std::to_string(p)] = t;
  j["permutation"] = perm;
  j["matched"] = matching.matched;
  j["error_counts"] = {{"misclassified_as_new", errors.misclassified_as_new},
                       {"misclassified_as_old", errors.misclassified_as_old}};
  j["n_instances"] = {{"all", n_all}, {"old", n_old}, {"new", n_new}};
  return j.dump(2);
}

std::string sweep_csv_header() { return "method,dataset,acc_all,acc_old,acc_new,err_as_new,err_as_old"; }

std::string sweep_csv_row(const std::string& method, const std::string& dataset, const EvalReport& report) {
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return std::string(buf);
  };
  return method + "," + dataset + "," + fmt(report.acc_all) + "," + fmt(report.acc_old) + "," +
         fmt(report.acc_new) + "," + std::to_string(report.errors.misclassified_as_new) + "," +
         std::to_string(report.errors.misclassified_as_old);
}

}  // namespace dsel
