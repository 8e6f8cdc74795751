#include "dsel/transport.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>

namespace dsel {

namespace {

constexpr double kMassTolerance = 1e-8;

Matrix normalized_rows(const Matrix& m, const char* which) {
  Matrix out = m;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (!(norm > 0.0)) {
      throw Error(ErrorCode::kZeroNorm, std::string("zero-norm centroid in ") + which);
    }
    out.row(i) /= norm;
  }
  return out;
}

void check_marginals(const MarginalWeights& m, const char* which) {
  for (double w : m) {
    if (!std::isfinite(w) || w < 0.0) {
      throw Error(ErrorCode::kInfeasible, std::string(which) + " marginals must be finite and >= 0");
    }
  }
}

// Spanning tree of basic cells over a bipartite graph: rows are nodes
// 0..N-1, columns are N..N+M-1.
class TransportBasis {
 public:
  TransportBasis(std::size_t n, std::size_t m)
      : n_(n), m_(m), basic_(n * m, false), adj_(n + m) {}

  bool is_basic(std::size_t i, std::size_t j) const { return basic_[i * m_ + j]; }

  void add(std::size_t i, std::size_t j) {
    basic_[i * m_ + j] = true;
    adj_[i].push_back(n_ + j);
    adj_[n_ + j].push_back(i);
  }

  void remove(std::size_t i, std::size_t j) {
    basic_[i * m_ + j] = false;
    erase(adj_[i], n_ + j);
    erase(adj_[n_ + j], i);
  }

  void potentials(const Matrix& d, std::vector<double>& u, std::vector<double>& v) const {
    std::vector<bool> done(n_ + m_, false);
    std::queue<std::size_t> q;
    u.assign(n_, 0.0);
    v.assign(m_, 0.0);
    // Each connected component is rooted at its lowest row; with a proper
    // spanning tree there is exactly one.
    for (std::size_t root = 0; root < n_ + m_; ++root) {
      if (done[root]) continue;
      done[root] = true;
      q.push(root);
      while (!q.empty()) {
        const std::size_t node = q.front();
        q.pop();
        for (std::size_t next : adj_[node]) {
          if (done[next]) continue;
          done[next] = true;
          if (node < n_) {
            const std::size_t j = next - n_;
            v[j] = d(static_cast<Eigen::Index>(node), static_cast<Eigen::Index>(j)) - u[node];
          } else {
            const std::size_t j = node - n_;
            u[next] = d(static_cast<Eigen::Index>(next), static_cast<Eigen::Index>(j)) - v[j];
          }
          q.push(next);
        }
      }
    }
  }

  // Tree path from column node j to row node i as a list of cells, in order.
  std::vector<std::pair<std::size_t, std::size_t>> path(std::size_t col, std::size_t row) const {
    const std::size_t start = n_ + col;
    std::vector<std::size_t> parent(n_ + m_, std::numeric_limits<std::size_t>::max());
    std::queue<std::size_t> q;
    parent[start] = start;
    q.push(start);
    while (!q.empty() && parent[row] == std::numeric_limits<std::size_t>::max()) {
      const std::size_t node = q.front();
      q.pop();
      for (std::size_t next : adj_[node]) {
        if (parent[next] != std::numeric_limits<std::size_t>::max()) continue;
        parent[next] = node;
        q.push(next);
      }
    }
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (std::size_t node = row; node != start; node = parent[node]) {
      const std::size_t p = parent[node];
      cells.push_back(node < n_ ? std::pair{node, p - n_} : std::pair{p, node - n_});
    }
    // Reverse so the first cell touches the starting column.
    std::reverse(cells.begin(), cells.end());
    return cells;
  }

 private:
  static void erase(std::vector<std::size_t>& v, std::size_t x) {
    v.erase(std::find(v.begin(), v.end(), x));
  }

  std::size_t n_, m_;
  std::vector<bool> basic_;
  std::vector<std::vector<std::size_t>> adj_;
};

}  // namespace

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::kEuclidean: return "euclidean";
    case Metric::kCosineDistance: return "cosine";
    case Metric::kL2NormEuclidean: return "l2norm-euclidean";
  }
  return "?";
}

Metric metric_from_string(std::string_view name) {
  if (name == "euclidean") return Metric::kEuclidean;
  if (name == "cosine" || name == "cosine-distance") return Metric::kCosineDistance;
  if (name == "l2norm-euclidean" || name == "l2norm") return Metric::kL2NormEuclidean;
  throw Error(ErrorCode::kInvalidArgument, "unknown metric: " + std::string(name));
}

MarginalWeights marginals_from_counts(std::span<const std::size_t> counts) {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  if (!(total > 0.0)) throw Error(ErrorCode::kInfeasible, "marginals need a positive total count");
  MarginalWeights out;
  out.reserve(counts.size());
  for (std::size_t c : counts) out.push_back(static_cast<double>(c) / total);
  return out;
}

MarginalWeights uniform_marginals(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kInfeasible, "uniform marginals over zero centroids");
  return MarginalWeights(n, 1.0 / static_cast<double>(n));
}

CostMatrix pairwise_cost(const Matrix& a, const Matrix& b, Metric metric) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "pairwise_cost: centroid dims differ");
  }
  CostMatrix cost;
  cost.metric = metric;
  cost.d.resize(a.rows(), b.rows());
  if (metric == Metric::kEuclidean) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < b.rows(); ++j) cost.d(i, j) = (a.row(i) - b.row(j)).norm();
    }
    return cost;
  }
  const Matrix an = normalized_rows(a, "source");
  const Matrix bn = normalized_rows(b, "target");
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      cost.d(i, j) = metric == Metric::kCosineDistance
                         ? std::max(0.0, 1.0 - an.row(i).dot(bn.row(j)))
                         : (an.row(i) - bn.row(j)).norm();
    }
  }
  return cost;
}

CostMatrix pairwise_cost(const CentroidSet& a, const CentroidSet& b, Metric metric) {
  return pairwise_cost(a.centroids, b.centroids, metric);
}

double EmdResult::dual_infeasibility(const CostMatrix& cost) const {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < cost.d.rows(); ++i) {
    for (Eigen::Index j = 0; j < cost.d.cols(); ++j) {
      const double reduced = cost.d(i, j) - u[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(j)];
      worst = std::max(worst, -reduced);
    }
  }
  return worst;
}

namespace {

EmdResult transport_simplex(const CostMatrix& cost, const MarginalWeights& source,
                            const MarginalWeights& target) {
  const auto n = static_cast<std::size_t>(cost.d.rows());
  const auto m = static_cast<std::size_t>(cost.d.cols());
  EmdResult result;
  Matrix& x = result.flow.k;
  x = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  result.flow.source_marginals = source;
  result.flow.target_marginals = target;
  TransportBasis basis(n, m);

  // North-west corner: a staircase of exactly N+M-1 cells.
  {
    std::vector<double> s = source, t = target;
    std::size_t i = 0, j = 0;
    while (true) {
      const double q = std::min(s[i], t[j]);
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = q;
      basis.add(i, j);
      s[i] -= q;
      t[j] -= q;
      if (i == n - 1 && j == m - 1) break;
      if (i == n - 1) {
        ++j;
      } else if (j == m - 1) {
        ++i;
      } else if (s[i] <= t[j]) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  const double tol = 1e-12 * (1.0 + cost.d.maxCoeff());
  const int max_pivots = static_cast<int>(50 * (n + m) * (n + m) + 1000);
  while (true) {
    basis.potentials(cost.d, result.u, result.v);
    std::size_t ei = n, ej = m;
    for (std::size_t i = 0; i < n && ei == n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (basis.is_basic(i, j)) continue;
        const double reduced = cost.d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -
                               result.u[i] - result.v[j];
        if (reduced < -tol) {
          ei = i;
          ej = j;
          break;
        }
      }
    }
    if (ei == n) break;
    if (++result.pivots > max_pivots) {
      throw Error(ErrorCode::kInfeasible, "solve_emd: pivot limit exceeded");
    }
    const auto cells = basis.path(ej, ei);
    // Cells alternate -, +, -, ... starting at the entering column.
    double theta = std::numeric_limits<double>::infinity();
    std::size_t leave = cells.size();
    for (std::size_t c = 0; c < cells.size(); c += 2) {
      const auto [i, j] = cells[c];
      const double flow = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const bool lower_index = leave == cells.size() ||
                               i * m + j < cells[leave].first * m + cells[leave].second;
      if (flow < theta || (flow == theta && lower_index)) {
        theta = flow;
        leave = c;
      }
    }
    x(static_cast<Eigen::Index>(ei), static_cast<Eigen::Index>(ej)) += theta;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto [i, j] = cells[c];
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += (c % 2 == 0) ? -theta : theta;
    }
    const auto [li, lj] = cells[leave];
    x(static_cast<Eigen::Index>(li), static_cast<Eigen::Index>(lj)) = 0.0;
    basis.remove(li, lj);
    basis.add(ei, ej);
  }

  const double mass = x.sum();
  result.value = mass > 0.0 ? (x.array() * cost.d.array()).sum() / mass : 0.0;
  return result;
}

// True when (target, cost^T) orders before (source, cost); ties keep the given orientation.
bool prefer_transposed(const Matrix& d, const MarginalWeights& source, const MarginalWeights& target) {
  if (d.rows() != d.cols()) return d.rows() > d.cols();
  if (target != source) return std::lexicographical_compare(target.begin(), target.end(), source.begin(), source.end());
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      if (d(j, i) != d(i, j)) return d(j, i) < d(i, j);
    }
  }
  return false;
}

}  // namespace

EmdResult solve_emd(const CostMatrix& cost, const MarginalWeights& source,
                    const MarginalWeights& target) {
  const auto n = static_cast<std::size_t>(cost.d.rows());
  const auto m = static_cast<std::size_t>(cost.d.cols());
  if (source.size() != n || target.size() != m || n == 0 || m == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "solve_emd: marginals do not match cost shape");
  }
  if (!cost.d.allFinite() || (cost.d.array() < 0.0).any()) {
    throw Error(ErrorCode::kInvalidArgument, "solve_emd: cost entries must be finite and >= 0");
  }
  check_marginals(source, "source");
  check_marginals(target, "target");
  const double s_total = std::accumulate(source.begin(), source.end(), 0.0);
  const double t_total = std::accumulate(target.begin(), target.end(), 0.0);
  if (std::abs(s_total - t_total) > kMassTolerance) {
    throw Error(ErrorCode::kInfeasible, "solve_emd: source and target mass differ");
  }

  // Both orientations of a problem run the same computation, so EMD(a, b) == EMD(b, a) exactly.
  if (!prefer_transposed(cost.d, source, target)) return transport_simplex(cost, source, target);
  CostMatrix flipped{cost.d.transpose(), cost.metric};
  EmdResult r = transport_simplex(flipped, target, source);
  r.flow.k.transposeInPlace();
  std::swap(r.flow.source_marginals, r.flow.target_marginals);
  std::swap(r.u, r.v);
  return r;
}

double domain_similarity(double emd_value, double gamma) {
  if (emd_value < 0.0) throw Error(ErrorCode::kInvalidArgument, "emd must be >= 0");
  if (!(gamma > 0.0)) throw Error(ErrorCode::kInvalidArgument, "gamma must be > 0");
  return std::exp(-gamma * emd_value);
}

PerSourceDistance per_source_distance(const FlowMatrix& flow, const CostMatrix& cost) {
  if (flow.k.rows() != cost.d.rows() || flow.k.cols() != cost.d.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "per_source_distance: flow and cost shapes differ");
  }
  PerSourceDistance out;
  for (Eigen::Index i = 0; i < flow.k.rows(); ++i) {
    const double mass = flow.k.row(i).sum();
    if (mass > 0.0) {
      out.distance.push_back(flow.k.row(i).dot(cost.d.row(i)) / mass);
      out.zero_mass.push_back(false);
    } else {
      out.distance.push_back(std::numeric_limits<double>::infinity());
      out.zero_mass.push_back(true);
      warn("source row " + std::to_string(i) + " carries no flow; distance set to +inf");
    }
  }
  return out;
}

void dump_flow_csv(const FlowMatrix& flow, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.precision(17);
  for (Eigen::Index i = 0; i < flow.k.rows(); ++i) {
    for (Eigen::Index j = 0; j < flow.k.cols(); ++j) out << (j ? "," : "") << flow.k(i, j);
    out << '\n';
  }
}

}  // namespace dsel
