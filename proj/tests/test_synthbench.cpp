#include <doctest.h>

#include <algorithm>

#include "dsel/clustering.hpp"
#include "dsel/synthbench.hpp"

using namespace dsel;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.per_category = 20;
  c.labeled_per_category = 12;
  return c;
}

SweetSpotRow sweet(HierarchyTier t, double acc_new, double as_old, double as_new) {
  SweetSpotRow r;
  r.labeled = std::string(to_string(t));
  r.acc_new = acc_new;
  r.frac_as_old = as_old;
  r.frac_as_new = as_new;
  return r;
}

ComparisonRow method_row(const std::string& m, double acc_new) {
  ComparisonRow r;
  r.method = m;
  r.acc_new = acc_new;
  return r;
}

}  // namespace

TEST_CASE("scene shapes and labels") {
  const SynthConfig c = small_config();
  const Scene s = generate_scene(c);
  CHECK(s.target.size() == 8 * 20);
  CHECK(s.n_target_categories() == 8);
  CHECK(s.old_classes == std::set<int>{0, 1, 2, 3});
  CHECK(s.old_labeled.n_categories() == 4);
  CHECK(s.tiers.size() == 4);
  for (const auto& [t, set] : s.tiers) {
    CHECK(set.n_categories() == c.per_tier);
    CHECK(set.size() == static_cast<std::size_t>(c.per_tier * c.labeled_per_category));
    CHECK(set.dim() == static_cast<std::size_t>(c.dim));
  }
  const EmbeddingSet pooled = s.labeled_source(kAllTiers);
  CHECK(pooled.n_categories() == 4 + 16);
  CHECK(pooled.source_tags().front() == "old");
  CHECK(pooled.source_tags().back() == "OOD");
}

TEST_CASE("scene generation is deterministic per seed") {
  const SynthConfig c = small_config();
  CHECK(generate_scene(c).target.features() == generate_scene(c).target.features());
  SynthConfig d = c;
  d.seed = 2;
  CHECK(generate_scene(d).target.features() != generate_scene(c).target.features());
}

TEST_CASE("tier distances increase from Similar to OOD") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SynthConfig c = small_config();
    c.seed = seed;
    const Scene s = generate_scene(c);
    double prev = 0.0;
    for (HierarchyTier t : kAllTiers) {
      const double d = tier_mean_nearest_distance(s, t);
      CHECK(d > prev);
      prev = d;
    }
  }
}

TEST_CASE("synth config validation and json") {
  SynthConfig c;
  c.tier_offsets[HierarchyTier::kMedium] = 0.1;
  CHECK_THROWS_AS(c.validate(), Error);
  SynthConfig small;
  small.dim = 4;
  CHECK_THROWS_AS(small.validate(), Error);
  SynthConfig neg;
  neg.tier_inward = -1;
  CHECK_THROWS_AS(neg.validate(), Error);

  SynthConfig a;
  a.seed = 99;
  a.tier_tilt = 0.125;
  const SynthConfig b = SynthConfig::from_json(a.to_json());
  CHECK(b.seed == 99);
  CHECK(b.tier_tilt == 0.125);
  CHECK(b.tier_offsets == a.tier_offsets);
  CHECK_THROWS_AS(SynthConfig::from_json("[1]"), Error);
}

TEST_CASE("selection strategies on a scene") {
  const Scene s = generate_scene(small_config());
  const EmbeddingSet pooled = s.labeled_source(kAllTiers);
  SelectionSettings settings;
  const SelectionResult none = select_for_scene(s, pooled, SelectionMethod::kNone, settings);
  CHECK(none.weights.category_weights.size() == 20);
  const SelectionResult greedy = select_for_scene(s, pooled, SelectionMethod::kGreedy, settings);
  int kept = 0;
  for (const auto& [c, w] : greedy.weights.category_weights) kept += w == 1.0;
  CHECK(kept == s.n_target_categories());
  const SelectionResult bins = select_for_scene(s, pooled, SelectionMethod::kBins, settings);
  // The OOD tier is the last four pooled categories.
  for (int c = 16; c < 20; ++c) CHECK(bins.weights.category_weights.at(c) == 0.0);
  settings.harden_threshold = 0.2;
  const SelectionResult hard = select_for_scene(s, pooled, SelectionMethod::kBeta, settings);
  for (const auto& [c, w] : hard.weights.category_weights) CHECK((w == 0.0 || w == 1.0));
  CHECK(selection_method_from_string(to_string(SelectionMethod::kBins)) == SelectionMethod::kBins);
  CHECK_THROWS_AS(selection_method_from_string("all"), Error);
}

TEST_CASE("k-means baseline and discovery run end to end") {
  const Scene s = generate_scene(small_config());
  const EvalReport km = kmeans_baseline(s, 1);
  CHECK(km.n_all == s.target.size());
  HyperParams hp = default_bench_hyperparams();
  hp.epochs = 3;
  const HierarchyTier similar[] = {HierarchyTier::kSimilar};
  const EmbeddingSet lab = s.labeled_source(similar);
  const EvalReport r = discover_and_evaluate(s, lab, WeightAssignment::all_ones(lab.n_categories()), hp);
  CHECK(r.acc_all > 0.0);
  CHECK(r.acc_new.has_value());
}

TEST_CASE("zero-weight categories get no prototype") {
  const Scene s = generate_scene(small_config());
  const EmbeddingSet pooled = s.labeled_source(kAllTiers);
  HyperParams hp = default_bench_hyperparams();
  hp.epochs = 2;
  WeightAssignment w = WeightAssignment::all_ones(pooled.n_categories());
  for (int c = 4; c < 20; ++c) w.category_weights[c] = 0.0;
  const EmbeddingSet old_only = s.labeled_source(std::span<const HierarchyTier>{});
  const EvalReport a = discover_and_evaluate(s, pooled, w, hp);
  const EvalReport b = discover_and_evaluate(s, old_only, WeightAssignment::all_ones(4), hp);
  CHECK(a.acc_all == b.acc_all);
  CHECK(a.matching.permutation == b.matching.permutation);
}

TEST_CASE("sweet-spot margin checks") {
  std::vector<SweetSpotRow> rows = {sweet(HierarchyTier::kSimilar, 0.40, 0.9, 0.1),
                                    sweet(HierarchyTier::kMedium, 0.50, 0.5, 0.5),
                                    sweet(HierarchyTier::kDissimilar, 0.30, 0.2, 0.8),
                                    sweet(HierarchyTier::kOOD, 0.30, 0.05, 0.95)};
  auto checks = sweetspot_checks(rows);
  REQUIRE(checks.size() == 4);
  CHECK(all_pass(checks));
  CHECK(checks[0].value == doctest::Approx(0.10));
  rows[1].acc_new = 0.44;
  CHECK_FALSE(sweetspot_checks(rows)[0].pass);
  rows[3].frac_as_new = 0.85;
  CHECK_FALSE(sweetspot_checks(rows)[3].pass);
  rows[0].frac_as_old = rows[3].frac_as_old;
  CHECK_FALSE(sweetspot_checks(rows)[2].pass);

  const std::string plot = plot_data_csv(rows);
  CHECK(plot.rfind("rank,tier,acc_new\n1,Similar,", 0) == 0);
  CHECK(summary_json(rows).find("\"pass\": false") != std::string::npos);
}

TEST_CASE("selection comparison checks") {
  std::vector<ComparisonRow> rows = {method_row("none", 0.30), method_row("greedy", 0.25), method_row("bins", 0.34),
                                     method_row("beta", 0.331)};
  CHECK(all_pass(comparison_checks(rows)));
  rows[3].acc_new = 0.329;
  CHECK_FALSE(comparison_checks(rows)[1].pass);
  rows[1].acc_new = 0.31;
  CHECK_FALSE(comparison_checks(rows)[2].pass);
  CHECK_THROWS_AS(comparison_checks({method_row("none", 0.3)}), Error);
}

TEST_CASE("small sweet-spot table writes one csv row per run") {
  SynthConfig c = small_config();
  HyperParams hp = default_bench_hyperparams();
  hp.epochs = 2;
  BenchOptions o;
  o.seeds = {1, 2};
  o.threads = 2;
  const auto rows = run_sweetspot(c, hp, o);
  CHECK(rows.size() == 5);
  CHECK(rows.back().labeled == "k-means");
  const std::string csv = sweep_csv(rows);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 5 * 2);
  o.threads = 1;
  const auto serial = run_sweetspot(c, hp, o);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].acc_new == serial[i].acc_new);
}
