#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dsel/discovery.hpp"
#include "dsel/evaluation.hpp"
#include "dsel/selection.hpp"

namespace dsel {

/// Geometry of a synthetic discovery scene. `base_separation` is in units of
/// the within-category noise std; tier offsets are multiples of it.
struct SynthConfig {
  int dim = 32;
  int n_old = 4;
  int n_new = 4;
  int per_category = 60;          // unlabeled instances per target category
  int labeled_per_category = 40;  // labeled instances per source category
  double base_separation = 1.9;   // distance between neighbouring target centres
  std::map<HierarchyTier, double> tier_offsets = {{HierarchyTier::kSimilar, 0.5},
                                                  {HierarchyTier::kMedium, 2.0},
                                                  {HierarchyTier::kDissimilar, 6.0},
                                                  {HierarchyTier::kOOD, 30.0}};
  int per_tier = 4;  // source categories per tier
  double noise_std = 1.0;
  double domain_norm = 6.0;   // norm of the shared mean all target features sit around
  double group_gap = 3.0;     // old-to-novel group distance, in separations
  double tier_tilt = 0.05;    // sideways bend of tier offsets, scaled by offset^2
  double tier_inward = 0.2;   // pull of tier offsets back toward the origin, scaled by offset
  std::uint64_t seed = 1;

  void validate() const;
  std::string to_json() const;
  static SynthConfig from_json(const std::string& text);
};

struct Scene {
  // Old target categories re-sampled as labeled data (ids 0..n_old-1).
  EmbeddingSet old_labeled;
  std::map<HierarchyTier, EmbeddingSet> tiers;
  // Target with ground truth: ids 0..n_old-1 are old, the rest novel.
  EmbeddingSet target;
  std::set<int> old_classes;
  SynthConfig config;

  EmbeddingSet target_unlabeled() const { return target.without_labels(); }
  // Old duplicates first, then the given tiers in order.
  EmbeddingSet labeled_source(std::span<const HierarchyTier> tiers) const;
  int n_target_categories() const { return target.n_categories(); }
};

Scene generate_scene(const SynthConfig& config);

// Mean over tier categories of the distance to the nearest target centroid.
double tier_mean_nearest_distance(const Scene& scene, HierarchyTier tier);

struct RunResult {
  std::string method;
  std::string dataset;
  EvalReport report;
};

struct SweetSpotRow {
  std::string labeled;  // tier name or "k-means"
  double acc_all = 0.0, acc_old = 0.0, acc_new = 0.0;
  double frac_as_old = 0.0;  // share of novel errors that went to old-matched clusters
  double frac_as_new = 0.0;
  std::vector<RunResult> runs;
};

struct BenchOptions {
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  int threads = 1;
};

// Discovery on the target unlabeled set, evaluated with the global matching.
EvalReport discover_and_evaluate(const Scene& scene, const EmbeddingSet& labeled,
                                 const WeightAssignment& weights, const HyperParams& hp);
EvalReport kmeans_baseline(const Scene& scene, std::uint64_t seed);

std::vector<SweetSpotRow> run_sweetspot(const SynthConfig& config, const HyperParams& hp,
                                        const BenchOptions& options = {});

enum class SelectionMethod { kNone, kGreedy, kBins, kBeta };
std::string_view to_string(SelectionMethod m);
SelectionMethod selection_method_from_string(std::string_view name);

struct SelectionSettings {
  BetaParams beta;
  BinningParams bins;
  int greedy_budget = -1;  // < 0: number of target categories
  // Beta weights hardened to {0,1} at this threshold when set.
  std::optional<double> harden_threshold;
};

// Weights for the pooled labeled source of a scene under one strategy.
SelectionResult select_for_scene(const Scene& scene, const EmbeddingSet& pooled, SelectionMethod method,
                                 const SelectionSettings& settings);

struct ComparisonRow {
  std::string method;
  double acc_all = 0.0, acc_old = 0.0, acc_new = 0.0;
  std::vector<RunResult> runs;
};

std::vector<ComparisonRow> run_selection_comparison(const SynthConfig& config, const HyperParams& hp,
                                                    const SelectionSettings& settings,
                                                    const std::vector<SelectionMethod>& methods,
                                                    const BenchOptions& options = {});

// Acceptance margin on a bench table; `value` passes when >= `threshold`.
struct MarginCheck {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

std::vector<MarginCheck> sweetspot_checks(const std::vector<SweetSpotRow>& rows);
std::vector<MarginCheck> comparison_checks(const std::vector<ComparisonRow>& rows);
bool all_pass(const std::vector<MarginCheck>& checks);

// Per-run rows in the sweep CSV format.
std::string sweep_csv(const std::vector<SweetSpotRow>& rows);
std::string sweep_csv(const std::vector<ComparisonRow>& rows);
// Averaged rows plus margin checks with an overall "pass".
std::string summary_json(const std::vector<SweetSpotRow>& rows);
std::string summary_json(const std::vector<ComparisonRow>& rows);
// rank,tier,acc_new with rank 1 the most similar tier.
std::string plot_data_csv(const std::vector<SweetSpotRow>& rows);

// Default scene and training settings used by the presets and acceptance suite.
SynthConfig default_synth_config();
HyperParams default_bench_hyperparams();

}  // namespace dsel
