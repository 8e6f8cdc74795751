#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dsel/clustering.hpp"
#include "dsel/selection.hpp"
#include "dsel/transport.hpp"
#include "oracles.hpp"

using namespace dsel;

namespace {

CentroidSet centroids(const Matrix& x) {
  CentroidSet c;
  c.centroids = x;
  c.counts.assign(static_cast<std::size_t>(x.rows()), 10);
  return c;
}

// Labeled categories at increasing distance along one axis from a target
// made of two tight clusters.
struct Line {
  EmbeddingSet labeled;
  EmbeddingSet target;
};

Line line_scene(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.1);
  const double offsets[] = {0.5, 1.0, 2.0, 3.0, 4.0, 80.0};
  Matrix lx(6 * 10, 2);
  std::vector<int> ll;
  for (int c = 0; c < 6; ++c) {
    for (int i = 0; i < 10; ++i) {
      lx(c * 10 + i, 0) = offsets[c] + g(rng);
      lx(c * 10 + i, 1) = g(rng);
      ll.push_back(c);
    }
  }
  Matrix tx(4 * 15, 2);
  const double centres[4][2] = {{0, 0}, {0, 2}, {0, 4}, {0, 6}};
  for (int c = 0; c < 4; ++c) {
    for (int i = 0; i < 15; ++i) {
      tx(c * 15 + i, 0) = centres[c][0] + g(rng);
      tx(c * 15 + i, 1) = centres[c][1] + g(rng);
    }
  }
  return {EmbeddingSet::create(lx, ll), EmbeddingSet::create(tx)};
}

}  // namespace

TEST_CASE("beta pdf spot values") {
  CHECK(std::abs(beta_pdf(0.5, 2, 2) - 1.5) <= 1e-9);
  CHECK(std::abs(beta_pdf(0.5, 5, 5) - 2.4609375) <= 1e-9);
  for (double x : {0.0, 0.1, 0.37, 0.5, 0.99, 1.0}) CHECK(beta_pdf(x, 1, 1) == 1.0);
}

TEST_CASE("beta pdf matches the integer closed form") {
  for (int a : {1, 2, 3, 5}) {
    for (int b : {1, 2, 7}) {
      for (double x : {0.1, 0.3, 0.8}) {
        const double ref = std::pow(x, a - 1) * std::pow(1 - x, b - 1) / oracle::beta_function_int(a, b);
        CHECK(beta_pdf(x, a, b) == doctest::Approx(ref).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("beta pdf symmetry and normalisation") {
  const int shapes[] = {1, 2, 3, 5, 7, 9};
  for (int a : shapes) {
    for (int b : shapes) {
      for (double x : {0.05, 0.3, 0.5, 0.77}) CHECK(std::abs(beta_pdf(x, a, b) - beta_pdf(1 - x, b, a)) <= 1e-12);
      const double area = oracle::simpson([&](double x) { return beta_pdf(x, a, b); }, 0.0, 1.0, 2000);
      CHECK(std::abs(area - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("beta pdf rejects bad input") {
  CHECK_THROWS_AS(beta_pdf(0.5, 0, 1), Error);
  CHECK_THROWS_AS(beta_pdf(1.5, 2, 2), Error);
  CHECK(beta_pdf(0.0, 0.5, 2) == 0.0);
}

TEST_CASE("category similarity reduces cosine over the target") {
  const CentroidSet c = centroids((Matrix(1, 2) << 1, 0).finished());
  const EmbeddingSet t = EmbeddingSet::create((Matrix(2, 2) << 1, 0, 0, 1).finished());
  CHECK(category_similarity(c, t, SimilarityReduce::kMin)[0] == doctest::Approx(0.0));
  CHECK(category_similarity(c, t, SimilarityReduce::kMax)[0] == doctest::Approx(1.0));
  const EmbeddingSet same = EmbeddingSet::create((Matrix(1, 2) << 1, 0).finished());
  for (auto r : {SimilarityReduce::kMin, SimilarityReduce::kMedian, SimilarityReduce::kMax}) {
    CHECK(category_similarity(c, same, r)[0] == doctest::Approx(1.0));
  }
  const EmbeddingSet three = EmbeddingSet::create((Matrix(3, 2) << 1, 0, 0, 1, -1, 0).finished());
  CHECK(category_similarity(c, three, SimilarityReduce::kMedian)[0] == doctest::Approx(0.0));
  const CentroidSet zero = centroids(Matrix::Zero(1, 2));
  CHECK_THROWS_AS(category_similarity(zero, t), Error);
}

TEST_CASE("beta weights") {
  const double sims[] = {0.0, 0.9};
  const SelectionResult r = beta_weights(sims, BetaParams{});
  CHECK(r.weights.category_weights.at(0) == doctest::Approx(2.4609375));
  CHECK(r.weights.category_weights.at(1) == doctest::Approx(630 * std::pow(0.95, 4) * std::pow(0.05, 4)));
  const SelectionResult flat = beta_weights(sims, BetaParams{1, 1});
  CHECK(flat.weights.category_weights.at(1) == 1.0);
  const double inc[] = {-0.8, -0.2, 0.3, 0.9};
  const SelectionResult favour = beta_weights(inc, BetaParams{5, 1});
  for (int c = 1; c < 4; ++c) CHECK(favour.weights.category_weights.at(c) > favour.weights.category_weights.at(c - 1));
  const double bad[] = {std::nan("")};
  CHECK_THROWS_AS(beta_weights(bad, BetaParams{}), Error);
}

TEST_CASE("harden and resampling") {
  WeightAssignment w;
  w.category_weights = {{0, 0.1}, {1, 0.2}, {2, 2.0}};
  const WeightAssignment h = harden_weights(w, 0.2);
  CHECK(h.category_weights.at(0) == 0.0);
  CHECK(h.category_weights.at(1) == 1.0);
  CHECK(h.category_weights.at(2) == 1.0);
  WeightAssignment r;
  r.category_weights = {{0, 2}, {1, 1}, {2, 1}};
  CHECK(resampling_distribution(r) == std::vector<double>{0.5, 0.25, 0.25});
  WeightAssignment z;
  z.category_weights = {{0, 0.0}};
  CHECK_THROWS_AS(resampling_distribution(z), Error);
}

TEST_CASE("greedy selection picks exactly the budget, nearest first") {
  const Line s = line_scene(1);
  const CentroidSet src = category_centroids(s.labeled);
  const CentroidSet tgt = kmeans(s.target, 4, {}).centroids;
  for (int budget : {1, 3, 5}) {
    const SelectionResult r = greedy_similar_selection(src, tgt, budget);
    int kept = 0;
    for (const auto& [c, w] : r.weights.category_weights) kept += w == 1.0;
    CHECK(kept == budget);
  }
  const SelectionResult r = greedy_similar_selection(src, tgt, 2);
  CHECK(r.weights.category_weights.at(0) == 1.0);
  CHECK(r.weights.category_weights.at(5) == 0.0);
}

TEST_CASE("greedy choice is the same under every gamma") {
  const Line s = line_scene(2);
  const CentroidSet src = category_centroids(s.labeled);
  const CentroidSet tgt = kmeans(s.target, 4, {}).centroids;
  const SelectionResult r = greedy_similar_selection(src, tgt, 3);
  for (double gamma : {0.01, 1.0, 50.0}) {
    std::vector<std::pair<double, int>> ranked;
    for (std::size_t c = 0; c < r.diagnostics.scores.size(); ++c) {
      ranked.emplace_back(-domain_similarity(r.diagnostics.scores[c], gamma), static_cast<int>(c));
    }
    std::stable_sort(ranked.begin(), ranked.end());
    for (int i = 0; i < 3; ++i) CHECK(r.weights.category_weights.at(ranked[static_cast<std::size_t>(i)].second) == 1.0);
  }
}

TEST_CASE("binning gives 0/1 weights and filters far categories") {
  const Line s = line_scene(3);
  BinningParams p;
  p.seed = 5;
  const SelectionResult r = binning_select(s.labeled, s.target, 4, p);
  for (const auto& [c, w] : r.weights.category_weights) CHECK((w == 0.0 || w == 1.0));
  CHECK(r.weights.category_weights.at(5) == 0.0);
  REQUIRE(r.diagnostics.threshold.has_value());
  CHECK(r.diagnostics.scores[5] > *r.diagnostics.threshold);
  CHECK(std::find(r.diagnostics.discarded.begin(), r.diagnostics.discarded.end(), 5) != r.diagnostics.discarded.end());
  CHECK(r.diagnostics.split_thresholds.size() == static_cast<std::size_t>(p.n_splits));
}

TEST_CASE("binning keeps the far chunk of the survivors") {
  const Line s = line_scene(4);
  BinningParams far;
  far.seed = 1;
  BinningParams near = far;
  near.select_chunk = 1;
  const SelectionResult a = binning_select(s.labeled, s.target, 4, far);
  const SelectionResult b = binning_select(s.labeled, s.target, 4, near);
  double max_near = -1, min_far = 1e9;
  for (const auto& [c, w] : a.weights.category_weights) {
    if (w == 1.0) min_far = std::min(min_far, a.diagnostics.scores[static_cast<std::size_t>(c)]);
    CHECK(w + b.weights.category_weights.at(c) <= 1.0);
  }
  for (const auto& [c, w] : b.weights.category_weights) {
    if (w == 1.0) max_near = std::max(max_near, b.diagnostics.scores[static_cast<std::size_t>(c)]);
  }
  CHECK(max_near <= min_far);
}

TEST_CASE("binning validates its parameters") {
  const Line s = line_scene(5);
  BinningParams p;
  p.select_chunk = 3;
  CHECK_THROWS_AS(binning_select(s.labeled, s.target, 4, p), Error);
  CHECK_THROWS_AS(binning_select(s.labeled, s.target, 1, BinningParams{}), Error);
}

TEST_CASE("binning is deterministic per seed") {
  const Line s = line_scene(6);
  BinningParams p;
  p.seed = 9;
  CHECK(binning_select(s.labeled, s.target, 4, p).weights.category_weights ==
        binning_select(s.labeled, s.target, 4, p).weights.category_weights);
}
