#include "dsel/synthbench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <random>
#include <mutex>
#include <thread>

#include "dsel/clustering.hpp"

namespace dsel {

namespace {

using nlohmann::ordered_json;

Matrix sample_category(const RowVector& centre, int n, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, sigma);
  Matrix out(n, centre.size());
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index d = 0; d < centre.size(); ++d) out(i, d) = centre(d) + g(rng);
  }
  return out;
}

EmbeddingSet make_set(const std::vector<RowVector>& centres, int per, double sigma, std::mt19937_64& rng,
                      const std::string& prefix) {
  const auto dim = centres.front().size();
  Matrix x(static_cast<Eigen::Index>(centres.size()) * per, dim);
  std::vector<int> labels;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < centres.size(); ++c) {
    x.middleRows(static_cast<Eigen::Index>(c) * per, per) = sample_category(centres[c], per, sigma, rng);
    labels.insert(labels.end(), static_cast<std::size_t>(per), static_cast<int>(c));
    names.push_back(prefix + std::to_string(c));
  }
  return EmbeddingSet::create(std::move(x), std::move(labels), std::move(names));
}

template <class Job>
void run_parallel(std::size_t n_jobs, int threads, Job&& job) {
  const auto n_workers = static_cast<std::size_t>(std::max(1, threads));
  if (n_workers == 1 || n_jobs <= 1) {
    for (std::size_t i = 0; i < n_jobs; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(n_workers, n_jobs); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n_jobs; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

double mean_of(const std::vector<RunResult>& runs, std::optional<double> EvalReport::*field) {
  double s = 0.0;
  for (const auto& r : runs) s += (r.report.*field).value_or(0.0);
  return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
}

double mean_all(const std::vector<RunResult>& runs) {
  double s = 0.0;
  for (const auto& r : runs) s += r.report.acc_all;
  return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
}

}  // namespace

void SynthConfig::validate() const {
  if (dim < 1 || n_old < 1 || n_new < 1 || per_category < 1 || labeled_per_category < 1 || per_tier < 1) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic sizes must be positive");
  }
  if (!(base_separation > 0.0) || !std::isfinite(base_separation)) {
    throw Error(ErrorCode::kInvalidArgument, "base_separation must be positive");
  }
  if (!(noise_std > 0.0) || !(domain_norm >= 0.0) || !(group_gap >= 0.0) || !(tier_tilt >= 0.0) || !(tier_inward >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "noise_std must be positive; domain_norm, group_gap and tier bends non-negative");
  }
  double prev = 0.0;
  for (HierarchyTier t : kAllTiers) {
    const auto it = tier_offsets.find(t);
    if (it == tier_offsets.end()) {
      throw Error(ErrorCode::kInvalidArgument, "missing tier offset for " + std::string(to_string(t)));
    }
    if (!(it->second > prev)) {
      throw Error(ErrorCode::kInvalidArgument, "tier offsets must be positive and strictly increasing");
    }
    prev = it->second;
  }
  const int needed = 2 + n_old + n_new + 3 * per_tier;
  if (dim < needed) {
    throw Error(ErrorCode::kInvalidArgument,
                "dim must be at least " + std::to_string(needed) + " for this many categories");
  }
}

std::string SynthConfig::to_json() const {
  ordered_json j;
  j["dim"] = dim;
  j["n_old"] = n_old;
  j["n_new"] = n_new;
  j["per_category"] = per_category;
  j["labeled_per_category"] = labeled_per_category;
  j["base_separation"] = base_separation;
  ordered_json off = ordered_json::object();
  for (const auto& [t, v] : tier_offsets) off[std::string(to_string(t))] = v;
  j["tier_offsets"] = off;
  j["per_tier"] = per_tier;
  j["noise_std"] = noise_std;
  j["domain_norm"] = domain_norm;
  j["group_gap"] = group_gap;
  j["tier_tilt"] = tier_tilt;
  j["tier_inward"] = tier_inward;
  j["seed"] = seed;
  return j.dump(2);
}

SynthConfig SynthConfig::from_json(const std::string& text) {
  SynthConfig c = default_synth_config();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedHeader, std::string("synth config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kMalformedHeader, "synth config must be a JSON object");
  try {
    if (j.contains("dim")) c.dim = j["dim"].get<int>();
    if (j.contains("n_old")) c.n_old = j["n_old"].get<int>();
    if (j.contains("n_new")) c.n_new = j["n_new"].get<int>();
    if (j.contains("per_category")) c.per_category = j["per_category"].get<int>();
    if (j.contains("labeled_per_category")) c.labeled_per_category = j["labeled_per_category"].get<int>();
    if (j.contains("base_separation")) c.base_separation = j["base_separation"].get<double>();
    if (j.contains("tier_offsets")) {
      for (const auto& [k, v] : j["tier_offsets"].items()) c.tier_offsets[tier_from_string(k)] = v.get<double>();
    }
    if (j.contains("per_tier")) c.per_tier = j["per_tier"].get<int>();
    if (j.contains("noise_std")) c.noise_std = j["noise_std"].get<double>();
    if (j.contains("domain_norm")) c.domain_norm = j["domain_norm"].get<double>();
    if (j.contains("group_gap")) c.group_gap = j["group_gap"].get<double>();
    if (j.contains("tier_tilt")) c.tier_tilt = j["tier_tilt"].get<double>();
    if (j.contains("tier_inward")) c.tier_inward = j["tier_inward"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedHeader, std::string("bad synth config field: ") + e.what());
  }
  c.validate();
  return c;
}

EmbeddingSet Scene::labeled_source(std::span<const HierarchyTier> which) const {
  std::vector<EmbeddingSet> sets{old_labeled};
  std::vector<std::string> names{"old"};
  for (HierarchyTier t : which) {
    sets.push_back(tiers.at(t));
    names.emplace_back(to_string(t));
  }
  return merge_sources(sets, names);
}

Scene generate_scene(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const int T = cfg.n_old + cfg.n_new;
  const double sigma = cfg.noise_std;
  const double sep = cfg.base_separation * sigma;

  // Random orthonormal frame so no structure is axis-aligned.
  Matrix g(cfg.dim, cfg.dim);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = std_normal(rng);
  const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
  auto axis = [&](int k) -> RowVector { return q.col(k).transpose(); };

  const RowVector mu = cfg.domain_norm * sigma * axis(0);
  // Old and novel categories form two groups `group_gap` separations apart.
  const RowVector gap = 0.5 * cfg.group_gap * sep * axis(1);
  std::vector<RowVector> target_centres;
  for (int t = 0; t < T; ++t) {
    target_centres.push_back(mu + (t < cfg.n_old ? gap : RowVector(-gap)) + (sep / std::sqrt(2.0)) * axis(2 + t));
  }

  Scene s;
  s.config = cfg;
  for (int t = 0; t < cfg.n_old; ++t) s.old_classes.insert(t);

  int next_axis = 2 + T;
  for (HierarchyTier tier : kAllTiers) {
    const double r = cfg.tier_offsets.at(tier) * sep;
    std::vector<RowVector> centres;
    for (int j = 0; j < cfg.per_tier; ++j) {
      const RowVector& novel = target_centres[static_cast<std::size_t>(cfg.n_old + j % cfg.n_new)];
      RowVector dir;
      if (tier == HierarchyTier::kSimilar) {
        // In-manifold, between two neighbouring novel categories.
        const RowVector& next = target_centres[static_cast<std::size_t>(cfg.n_old + (j + 1) % cfg.n_new)];
        dir = (next - novel).normalized();
      } else {
        // Outward from the origin, bent sideways and back toward it more for farther tiers.
        const double o = cfg.tier_offsets.at(tier);
        dir = (novel.normalized() + cfg.tier_tilt * o * o * axis(next_axis++) - cfg.tier_inward * o * axis(0)).normalized();
      }
      centres.push_back(novel + r * dir);
    }
    s.tiers[tier] = make_set(centres, cfg.labeled_per_category, sigma, rng, std::string(to_string(tier)) + "-");
  }

  std::vector<RowVector> old_centres(target_centres.begin(), target_centres.begin() + cfg.n_old);
  s.old_labeled = make_set(old_centres, cfg.labeled_per_category, sigma, rng, "old-");

  EmbeddingSet target = make_set(target_centres, cfg.per_category, sigma, rng, "target-");
  s.target = std::move(target);
  return s;
}

double tier_mean_nearest_distance(const Scene& scene, HierarchyTier tier) {
  const CentroidSet src = category_centroids(scene.tiers.at(tier));
  const CentroidSet tgt = category_centroids(scene.target);
  double total = 0.0;
  for (Eigen::Index i = 0; i < src.centroids.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < tgt.centroids.rows(); ++j) {
      best = std::min(best, std::sqrt(squared_distance(src.centroids.row(i), tgt.centroids.row(j))));
    }
    total += best;
  }
  return total / static_cast<double>(src.centroids.rows());
}

EvalReport discover_and_evaluate(const Scene& scene, const EmbeddingSet& labeled, const WeightAssignment& weights,
                                 const HyperParams& hp) {
  const EmbeddingSet unlabeled = scene.target_unlabeled();
  // Categories with zero weight are not selected: they get no prototype.
  std::vector<std::size_t> rows;
  std::map<int, int> remap;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    const auto it = weights.category_weights.find(labeled.label(i));
    if (it != weights.category_weights.end() && it->second == 0.0) continue;
    rows.push_back(i);
  }
  const EmbeddingSet kept = labeled.subset(rows);
  WeightAssignment kept_w;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    kept_w.category_weights[kept.label(r)] = weights.category_weights.count(labeled.label(rows[r]))
                                                 ? weights.category_weights.at(labeled.label(rows[r]))
                                                 : 1.0;
  }
  const int K = kept.n_categories() + scene.config.n_new;
  const DiscoveryModel model = train(kept, unlabeled, kept_w, hp, K);
  const std::vector<int> pred = assign_labels(model, unlabeled);
  std::set<int> seen;
  for (int c = 0; c < kept.n_categories(); ++c) seen.insert(c);
  return split_accuracy(scene.target.labels(), pred, scene.old_classes, seen);
}

EvalReport kmeans_baseline(const Scene& scene, std::uint64_t seed) {
  KMeansOptions opts;
  opts.seed = seed;
  const KMeansResult r = kmeans(scene.target_unlabeled(), scene.n_target_categories(), opts);
  return split_accuracy(scene.target.labels(), r.assignment.labels, scene.old_classes);
}

std::vector<SweetSpotRow> run_sweetspot(const SynthConfig& config, const HyperParams& hp,
                                        const BenchOptions& options) {
  const std::size_t n_seeds = options.seeds.size();
  std::vector<Scene> scenes(n_seeds);
  run_parallel(n_seeds, options.threads, [&](std::size_t i) {
    SynthConfig c = config;
    c.seed = options.seeds[i];
    scenes[i] = generate_scene(c);
  });

  constexpr std::size_t n_rows = std::size(kAllTiers) + 1;  // tiers, then k-means
  std::vector<std::vector<RunResult>> runs(n_rows, std::vector<RunResult>(n_seeds));
  run_parallel(n_rows * n_seeds, options.threads, [&](std::size_t job) {
    const std::size_t row = job / n_seeds, si = job % n_seeds;
    const Scene& scene = scenes[si];
    RunResult& out = runs[row][si];
    out.dataset = "seed" + std::to_string(options.seeds[si]);
    if (row < std::size(kAllTiers)) {
      const HierarchyTier tier = kAllTiers[row];
      const HierarchyTier only[] = {tier};
      const EmbeddingSet labeled = scene.labeled_source(only);
      HyperParams h = hp;
      h.seed = options.seeds[si];
      out.method = std::string(to_string(tier));
      out.report = discover_and_evaluate(scene, labeled, WeightAssignment::all_ones(labeled.n_categories()), h);
    } else {
      out.method = "k-means";
      out.report = kmeans_baseline(scene, options.seeds[si]);
    }
  });

  std::vector<SweetSpotRow> rows;
  for (std::size_t r = 0; r < n_rows; ++r) {
    SweetSpotRow row;
    row.labeled = runs[r].front().method;
    row.acc_all = mean_all(runs[r]);
    row.acc_old = mean_of(runs[r], &EvalReport::acc_old);
    row.acc_new = mean_of(runs[r], &EvalReport::acc_new);
    std::size_t as_old = 0, as_new = 0;
    for (const auto& run : runs[r]) {
      as_old += run.report.errors.misclassified_as_old;
      as_new += run.report.errors.misclassified_as_new;
    }
    const std::size_t errs = as_old + as_new;
    row.frac_as_old = errs ? static_cast<double>(as_old) / static_cast<double>(errs) : 0.0;
    row.frac_as_new = errs ? static_cast<double>(as_new) / static_cast<double>(errs) : 0.0;
    row.runs = std::move(runs[r]);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string_view to_string(SelectionMethod m) {
  switch (m) {
    case SelectionMethod::kNone: return "none";
    case SelectionMethod::kGreedy: return "greedy";
    case SelectionMethod::kBins: return "bins";
    case SelectionMethod::kBeta: return "beta";
  }
  return "none";
}

SelectionMethod selection_method_from_string(std::string_view name) {
  if (name == "none") return SelectionMethod::kNone;
  if (name == "greedy") return SelectionMethod::kGreedy;
  if (name == "bins") return SelectionMethod::kBins;
  if (name == "beta") return SelectionMethod::kBeta;
  throw Error(ErrorCode::kInvalidArgument, "unknown selection method '" + std::string(name) + "'");
}

SelectionResult select_for_scene(const Scene& scene, const EmbeddingSet& pooled, SelectionMethod method,
                                 const SelectionSettings& settings) {
  const EmbeddingSet unlabeled = scene.target_unlabeled();
  const int k_target = scene.n_target_categories();
  switch (method) {
    case SelectionMethod::kNone: {
      SelectionResult r;
      r.weights = WeightAssignment::all_ones(pooled.n_categories());
      r.diagnostics.method = "none";
      return r;
    }
    case SelectionMethod::kGreedy: {
      KMeansOptions ko;
      ko.seed = settings.bins.seed;
      const KMeansResult km = kmeans(unlabeled, k_target, ko);
      const int budget = settings.greedy_budget >= 0 ? settings.greedy_budget : k_target;
      return greedy_similar_selection(category_centroids(pooled), km.centroids, budget, settings.bins.metric,
                                      settings.bins.uniform_marginals);
    }
    case SelectionMethod::kBins:
      return binning_select(pooled, unlabeled, k_target, settings.bins);
    case SelectionMethod::kBeta: {
      const auto sims = category_similarity(category_centroids(pooled), unlabeled, settings.beta.reduce);
      SelectionResult r = beta_weights(sims, settings.beta);
      if (settings.harden_threshold) {
        r.weights = harden_weights(r.weights, *settings.harden_threshold);
        r.diagnostics.method = "beta-hard";
      }
      return r;
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown selection method");
}

std::vector<ComparisonRow> run_selection_comparison(const SynthConfig& config, const HyperParams& hp,
                                                    const SelectionSettings& settings,
                                                    const std::vector<SelectionMethod>& methods,
                                                    const BenchOptions& options) {
  const std::size_t n_seeds = options.seeds.size();
  std::vector<Scene> scenes(n_seeds);
  std::vector<EmbeddingSet> pooled(n_seeds);
  run_parallel(n_seeds, options.threads, [&](std::size_t i) {
    SynthConfig c = config;
    c.seed = options.seeds[i];
    scenes[i] = generate_scene(c);
    pooled[i] = scenes[i].labeled_source(kAllTiers);
  });

  std::vector<std::vector<RunResult>> runs(methods.size(), std::vector<RunResult>(n_seeds));
  run_parallel(methods.size() * n_seeds, options.threads, [&](std::size_t job) {
    const std::size_t mi = job / n_seeds, si = job % n_seeds;
    SelectionSettings s = settings;
    s.bins.seed = options.seeds[si];
    const SelectionResult sel = select_for_scene(scenes[si], pooled[si], methods[mi], s);
    HyperParams h = hp;
    h.seed = options.seeds[si];
    RunResult& out = runs[mi][si];
    out.method = std::string(to_string(methods[mi]));
    out.dataset = "seed" + std::to_string(options.seeds[si]);
    out.report = discover_and_evaluate(scenes[si], pooled[si], sel.weights, h);
  });

  std::vector<ComparisonRow> rows;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    ComparisonRow row;
    row.method = std::string(to_string(methods[m]));
    row.acc_all = mean_all(runs[m]);
    row.acc_old = mean_of(runs[m], &EvalReport::acc_old);
    row.acc_new = mean_of(runs[m], &EvalReport::acc_new);
    row.runs = std::move(runs[m]);
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

template <class Row>
const Row& find_row(const std::vector<Row>& rows, std::string_view key, std::string Row::*field) {
  for (const auto& r : rows) {
    if (r.*field == key) return r;
  }
  throw Error(ErrorCode::kInvalidArgument, "bench table has no row '" + std::string(key) + "'");
}

MarginCheck check(std::string name, double value, double threshold) {
  return {std::move(name), value, threshold, value >= threshold};
}

ordered_json checks_json(const std::vector<MarginCheck>& checks) {
  ordered_json out = ordered_json::array();
  for (const auto& c : checks) {
    out.push_back({{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"pass", c.pass}});
  }
  return out;
}

}  // namespace

std::vector<MarginCheck> sweetspot_checks(const std::vector<SweetSpotRow>& rows) {
  auto row = [&](HierarchyTier t) -> const SweetSpotRow& {
    return find_row(rows, to_string(t), &SweetSpotRow::labeled);
  };
  const auto& similar = row(HierarchyTier::kSimilar);
  const auto& medium = row(HierarchyTier::kMedium);
  const auto& ood = row(HierarchyTier::kOOD);
  return {check("medium_minus_similar_acc_new", medium.acc_new - similar.acc_new, 0.05),
          check("medium_minus_ood_acc_new", medium.acc_new - ood.acc_new, 0.05),
          // strict inequality: any positive gap
          check("similar_minus_ood_frac_as_old", similar.frac_as_old - ood.frac_as_old,
                std::numeric_limits<double>::min()),
          check("ood_frac_as_new", ood.frac_as_new, 0.9)};
}

std::vector<MarginCheck> comparison_checks(const std::vector<ComparisonRow>& rows) {
  auto acc = [&](std::string_view m) { return find_row(rows, m, &ComparisonRow::method).acc_new; };
  const double none = acc("none");
  return {check("bins_minus_none_acc_new", acc("bins") - none, 0.03),
          check("beta_minus_none_acc_new", acc("beta") - none, 0.03),
          check("none_minus_greedy_acc_new", none - acc("greedy"), 0.0)};
}

bool all_pass(const std::vector<MarginCheck>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const MarginCheck& c) { return c.pass; });
}

std::string sweep_csv(const std::vector<SweetSpotRow>& rows) {
  std::string out = sweep_csv_header() + "\n";
  for (const auto& row : rows) {
    for (const auto& r : row.runs) out += sweep_csv_row(r.method, r.dataset, r.report) + "\n";
  }
  return out;
}

std::string sweep_csv(const std::vector<ComparisonRow>& rows) {
  std::string out = sweep_csv_header() + "\n";
  for (const auto& row : rows) {
    for (const auto& r : row.runs) out += sweep_csv_row(r.method, r.dataset, r.report) + "\n";
  }
  return out;
}

std::string summary_json(const std::vector<SweetSpotRow>& rows) {
  ordered_json j;
  j["table"] = "sweetspot";
  ordered_json table = ordered_json::array();
  for (const auto& r : rows) {
    table.push_back({{"labeled", r.labeled},
                     {"acc_all", r.acc_all},
                     {"acc_old", r.acc_old},
                     {"acc_new", r.acc_new},
                     {"frac_as_old", r.frac_as_old},
                     {"frac_as_new", r.frac_as_new}});
  }
  j["rows"] = table;
  const auto checks = sweetspot_checks(rows);
  j["checks"] = checks_json(checks);
  j["pass"] = all_pass(checks);
  return j.dump(2) + "\n";
}

std::string summary_json(const std::vector<ComparisonRow>& rows) {
  ordered_json j;
  j["table"] = "selection";
  ordered_json table = ordered_json::array();
  for (const auto& r : rows) {
    table.push_back({{"method", r.method}, {"acc_all", r.acc_all}, {"acc_old", r.acc_old}, {"acc_new", r.acc_new}});
  }
  j["rows"] = table;
  const auto checks = comparison_checks(rows);
  j["checks"] = checks_json(checks);
  j["pass"] = all_pass(checks);
  return j.dump(2) + "\n";
}

std::string plot_data_csv(const std::vector<SweetSpotRow>& rows) {
  std::string out = "rank,tier,acc_new\n";
  int rank = 1;
  for (HierarchyTier t : kAllTiers) {
    const auto& r = find_row(rows, to_string(t), &SweetSpotRow::labeled);
    out += std::to_string(rank++) + "," + r.labeled + "," + std::to_string(r.acc_new) + "\n";
  }
  return out;
}

SynthConfig default_synth_config() { return SynthConfig{}; }

HyperParams default_bench_hyperparams() {
  HyperParams hp;
  hp.epochs = 60;
  return hp;
}

}  // namespace dsel
