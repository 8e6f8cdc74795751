#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "dsel/evaluation.hpp"
#include "oracles.hpp"

using namespace dsel;

TEST_CASE("relabelled perfect clustering scores 1") {
  const std::vector<int> t = {0, 0, 1, 1, 2, 2};
  const std::vector<int> p = {2, 2, 0, 0, 1, 1};
  CHECK(clustering_accuracy(t, p) == 1.0);
  const Matching m = hungarian_match(t, p);
  CHECK(m.permutation.at(2) == 0);
  CHECK(m.permutation.at(0) == 1);
}

TEST_CASE("one cluster for everything scores the largest class share") {
  const std::vector<int> t = {0, 0, 0, 1, 1, 2};
  const std::vector<int> p(6, 0);
  CHECK(clustering_accuracy(t, p) == doctest::Approx(0.5));
}

TEST_CASE("more clusters than classes leaves clusters unmatched") {
  const std::vector<int> t = {0, 0, 1, 1};
  const std::vector<int> p = {0, 1, 2, 3};
  const Matching m = hungarian_match(t, p);
  CHECK(m.permutation.size() == 2);
  CHECK(m.matched == 2);
}

TEST_CASE("assignment solver matches permutation search") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 6;
    Matrix c(n, n);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng);
    const auto a = solve_assignment(c);
    double got = 0.0;
    for (int i = 0; i < n; ++i) got += c(i, a[static_cast<std::size_t>(i)]);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += c(i, perm[static_cast<std::size_t>(i)]);
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(got == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("matching agrees with brute force on random labelings") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int kt = 1 + trial % 5, kp = 1 + (trial / 5) % 6;
    std::uniform_int_distribution<int> dt(0, kt - 1), dp(0, kp - 1);
    std::vector<int> t(40), p(40);
    for (auto& v : t) v = dt(rng);
    for (auto& v : p) v = dp(rng);
    CHECK(hungarian_match(t, p).matched == oracle::brute_force_matched(t, p));
  }
}

TEST_CASE("accuracy is invariant to cluster relabelling") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> d(0, 3);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<int> t(30), p(30);
    for (auto& v : t) v = d(rng);
    for (auto& v : p) v = d(rng);
    std::vector<int> relabel = {0, 1, 2, 3};
    std::shuffle(relabel.begin(), relabel.end(), rng);
    std::vector<int> q(30);
    for (std::size_t i = 0; i < 30; ++i) q[i] = relabel[static_cast<std::size_t>(p[i])];
    CHECK(clustering_accuracy(t, p) == clustering_accuracy(t, q));
  }
}

TEST_CASE("split accuracy uses one global matching") {
  // Classes 0, 1 old; 2, 3 new. Cluster 1 swallows class 1 and half of class 2.
  const std::vector<int> t = {0, 0, 1, 1, 2, 2, 3, 3};
  const std::vector<int> p = {0, 0, 1, 1, 1, 2, 3, 3};
  const EvalReport r = split_accuracy(t, p, {0, 1});
  CHECK(r.acc_all == doctest::Approx(7.0 / 8));
  CHECK(*r.acc_old == 1.0);
  CHECK(*r.acc_new == doctest::Approx(0.75));
  CHECK(r.n_old == 4);
  CHECK(r.n_new == 4);
  CHECK(r.errors.misclassified_as_old == 1);
  CHECK(r.errors.misclassified_as_new == 0);
}

TEST_CASE("error taxonomy sends unmatched clusters to new") {
  const std::vector<int> t = {0, 0, 1, 1, 1};
  const std::vector<int> p = {0, 0, 1, 1, 2};
  const EvalReport r = split_accuracy(t, p, {0});
  CHECK(r.errors.misclassified_as_new == 1);
  CHECK(r.errors.misclassified_as_old == 0);
  const EvalReport seen = split_accuracy(t, p, {0}, {0, 2});
  CHECK(seen.errors.misclassified_as_old == 1);
}

TEST_CASE("empty split is absent") {
  const std::vector<int> t = {0, 1};
  const EvalReport r = split_accuracy(t, t, {0, 1});
  CHECK_FALSE(r.acc_new.has_value());
  CHECK(r.to_json().find("\"acc_new\": null") != std::string::npos);
}

TEST_CASE("evaluation rejects malformed labels") {
  const std::vector<int> a = {0, 1}, b = {0}, neg = {0, -1};
  CHECK_THROWS_AS(clustering_accuracy(a, b), Error);
  CHECK_THROWS_AS(clustering_accuracy(a, neg), Error);
  CHECK_THROWS_AS(solve_assignment(Matrix::Zero(2, 3)), Error);
}

TEST_CASE("sweep csv row") {
  const std::vector<int> t = {0, 1};
  const EvalReport r = split_accuracy(t, t, {0});
  CHECK(sweep_csv_row("beta", "scene", r) == "beta,scene,1.000000,1.000000,1.000000,0,0");
  CHECK(sweep_csv_header().rfind("method,", 0) == 0);
}
