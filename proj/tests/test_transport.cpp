#include <doctest.h>

#include <cmath>
#include <random>

#include "dsel/transport.hpp"
#include "oracles.hpp"

using namespace dsel;

namespace {

CentroidSet points(std::initializer_list<std::initializer_list<double>> rows) {
  CentroidSet c;
  c.centroids.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) c.centroids(i, j++) = v;
    ++i;
  }
  c.counts.assign(rows.size(), 1);
  return c;
}

MarginalWeights random_marginal(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<std::size_t> counts(n);
  for (auto& c : counts) c = static_cast<std::size_t>(1 + 20 * u(rng));
  return marginals_from_counts(counts);
}

}  // namespace

TEST_CASE("pairwise cost spot values") {
  const CostMatrix c = pairwise_cost(points({{0, 0}}), points({{3, 4}}));
  CHECK(c.d(0, 0) == doctest::Approx(5.0));
  const CostMatrix cos = pairwise_cost(points({{1, 0}}), points({{0, 1}}), Metric::kCosineDistance);
  CHECK(cos.d(0, 0) == doctest::Approx(1.0));
  const CentroidSet a = points({{1, 2}, {3, 4}, {-1, 0}});
  const CostMatrix self = pairwise_cost(a, a);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(self.d(i, i) == 0.0);
  const CostMatrix l2 = pairwise_cost(points({{2, 0}}), points({{0, 5}}), Metric::kL2NormEuclidean);
  CHECK(l2.d(0, 0) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(pairwise_cost(points({{0, 0}}), points({{1, 1}}), Metric::kCosineDistance), Error);
}

TEST_CASE("emd of two sources onto one target") {
  const CostMatrix c = pairwise_cost(points({{0}, {2}}), points({{1}}));
  const EmdResult r = solve_emd(c, {0.5, 0.5}, {1.0});
  CHECK(r.value == doctest::Approx(1.0));
}

TEST_CASE("emd of a set with itself is zero with a diagonal flow") {
  const CentroidSet a = points({{0, 0}, {1, 3}, {4, -2}});
  const EmdResult r = solve_emd(pairwise_cost(a, a), {0.2, 0.3, 0.5}, {0.2, 0.3, 0.5});
  CHECK(r.value == 0.0);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(r.flow.k(i, i) == doctest::Approx(r.flow.source_marginals[static_cast<std::size_t>(i)]));
}

TEST_CASE("emd matches basic-solution enumeration") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> size(1, 4);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 60; ++trial) {
    const int n = size(rng), m = size(rng);
    Matrix a(n, 3), b(m, 3);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = g(rng);
    const CostMatrix c = pairwise_cost(a, b);
    const auto ms = random_marginal(static_cast<std::size_t>(n), rng);
    const auto mt = random_marginal(static_cast<std::size_t>(m), rng);
    const EmdResult r = solve_emd(c, ms, mt);
    CHECK(std::abs(r.value - oracle::lp_vertex_min(c.d, ms, mt)) <= 1e-9);
    CHECK(r.dual_infeasibility(c) <= 1e-8);
    for (int i = 0; i < n; ++i) CHECK(std::abs(r.flow.k.row(i).sum() - ms[static_cast<std::size_t>(i)]) <= 1e-8);
    for (int j = 0; j < m; ++j) CHECK(std::abs(r.flow.k.col(j).sum() - mt[static_cast<std::size_t>(j)]) <= 1e-8);
    CHECK(r.flow.k.minCoeff() >= 0.0);
  }
}

TEST_CASE("emd is symmetric and satisfies the triangle inequality") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  auto random_points = [&](int n) {
    Matrix x(n, 2);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    return x;
  };
  const MarginalWeights w = uniform_marginals(4);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix a = random_points(4), b = random_points(4), c = random_points(4);
    const double ab = solve_emd(pairwise_cost(a, b), w, w).value;
    const double ba = solve_emd(pairwise_cost(b, a), w, w).value;
    const double bc = solve_emd(pairwise_cost(b, c), w, w).value;
    const double ac = solve_emd(pairwise_cost(a, c), w, w).value;
    CHECK(ab == ba);
    CHECK(ac <= ab + bc + 1e-8);
  }
}

TEST_CASE("swapping source and target transposes the flow") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 1 + trial % 4, m = 1 + (trial / 4) % 4;
    Matrix a(n, 2), b(m, 2);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = g(rng);
    const auto ms = random_marginal(static_cast<std::size_t>(n), rng);
    const auto mt = random_marginal(static_cast<std::size_t>(m), rng);
    const EmdResult ab = solve_emd(pairwise_cost(a, b), ms, mt);
    const EmdResult ba = solve_emd(pairwise_cost(b, a), mt, ms);
    CHECK(ab.value == ba.value);
    CHECK(ab.flow.k == ba.flow.k.transpose());
    CHECK(ab.dual_infeasibility(pairwise_cost(a, b)) <= 1e-8);
  }
}

TEST_CASE("emd rejects marginals of different mass") {
  const CostMatrix c = pairwise_cost(points({{0}}), points({{1}}));
  CHECK_THROWS_AS(solve_emd(c, {1.0}, {0.5}), Error);
}

TEST_CASE("emd handles larger degenerate problems") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Matrix a(30, 4), b(25, 4);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = g(rng);
  // Uniform masses with n, m sharing factors make many degenerate pivots.
  const EmdResult r = solve_emd(pairwise_cost(a, b), uniform_marginals(30), uniform_marginals(25));
  CHECK(r.dual_infeasibility(pairwise_cost(a, b)) <= 1e-8);
  CHECK(std::abs(r.flow.k.sum() - 1.0) <= 1e-8);
}

TEST_CASE("domain similarity") {
  CHECK(domain_similarity(0.0, 3.0) == 1.0);
  CHECK(domain_similarity(std::log(2.0), 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(domain_similarity(1.0) > domain_similarity(1.5));
}

TEST_CASE("per-source distance") {
  const CentroidSet s = points({{0}});
  const CentroidSet t = points({{2}});
  const CostMatrix c = pairwise_cost(s, t);
  const EmdResult r = solve_emd(c, {1.0}, {1.0});
  CHECK(per_source_distance(r.flow, c).distance[0] == doctest::Approx(2.0));

  const CentroidSet a = points({{0, 0}, {5, 5}});
  const CentroidSet b = points({{0, 1}, {5, 7}});
  const CostMatrix cab = pairwise_cost(a, b);
  const auto d = per_source_distance(solve_emd(cab, {0.5, 0.5}, {0.5, 0.5}).flow, cab);
  CHECK(d.distance[0] == doctest::Approx(1.0));
  CHECK(d.distance[1] == doctest::Approx(2.0));
}

TEST_CASE("per-source distance flags rows without flow") {
  FlowMatrix f;
  f.k = Matrix::Zero(2, 1);
  f.k(0, 0) = 1.0;
  CostMatrix c;
  c.d = Matrix::Ones(2, 1);
  const auto d = per_source_distance(f, c);
  CHECK(std::isinf(d.distance[1]));
  CHECK(d.zero_mass[1]);
}

TEST_CASE("per-source distance matches a 3x2 enumeration") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  Matrix a(3, 2), b(2, 2);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = g(rng);
  const CostMatrix c = pairwise_cost(a, b);
  const MarginalWeights ms = {0.2, 0.3, 0.5}, mt = {0.6, 0.4};
  const EmdResult r = solve_emd(c, ms, mt);
  const auto d = per_source_distance(r.flow, c);
  double weighted = 0.0;
  for (int i = 0; i < 3; ++i) weighted += ms[static_cast<std::size_t>(i)] * d.distance[static_cast<std::size_t>(i)];
  CHECK(weighted == doctest::Approx(oracle::lp_vertex_min(c.d, ms, mt)).epsilon(1e-12));
}

TEST_CASE("marginals from counts") {
  const std::size_t counts[] = {1, 3};
  const auto m = marginals_from_counts(counts);
  CHECK(m[0] == 0.25);
  CHECK(m[1] == 0.75);
  CHECK(metric_from_string(to_string(Metric::kL2NormEuclidean)) == Metric::kL2NormEuclidean);
}
