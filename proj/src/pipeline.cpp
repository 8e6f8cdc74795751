#include "dsel/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "dsel/clustering.hpp"
#include "dsel/transport.hpp"

namespace dsel {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

void require_file(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::kMissingFile, "no such file: " + path.string());
}

EmbeddingSet load_any(const fs::path& path) {
  require_file(path);
  return load_embeddings(path, format_from_path(path));
}

template <class T>
T get_or(const ordered_json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    throw Error(ErrorCode::kMalformedHeader, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kMalformedHeader, "config must be a JSON object");
  PipelineConfig c;
  try {
    if (j.contains("labeled")) {
      const auto& l = j["labeled"];
      if (l.is_string()) {
        c.labeled = {l.get<std::string>()};
      } else {
        for (const auto& p : l) c.labeled.emplace_back(p.get<std::string>());
      }
    }
    if (j.contains("unlabeled")) c.unlabeled = j["unlabeled"].get<std::string>();
    if (j.contains("truth")) c.truth = j["truth"].get<std::string>();
    if (j.contains("old_classes")) c.old_classes = j["old_classes"].get<std::set<int>>();
    if (j.contains("method")) c.method = selection_method_from_string(j["method"].get<std::string>());
    if (j.contains("selection")) {
      const auto& s = j["selection"];
      c.selection.beta.alpha = get_or(s, "alpha", c.selection.beta.alpha);
      c.selection.beta.beta = get_or(s, "beta", c.selection.beta.beta);
      if (s.contains("reduce")) c.selection.beta.reduce = reduce_from_string(s["reduce"].get<std::string>());
      c.selection.bins.n_chunks = get_or(s, "L", c.selection.bins.n_chunks);
      c.selection.bins.n_splits = get_or(s, "splits", c.selection.bins.n_splits);
      c.selection.bins.select_chunk = get_or(s, "chunk", c.selection.bins.select_chunk);
      if (s.contains("metric")) c.selection.bins.metric = metric_from_string(s["metric"].get<std::string>());
      c.selection.bins.uniform_marginals = get_or(s, "uniform_marginals", c.selection.bins.uniform_marginals);
      c.selection.greedy_budget = get_or(s, "budget", c.selection.greedy_budget);
      if (s.contains("harden")) c.selection.harden_threshold = s["harden"].get<double>();
    }
    if (j.contains("k_unlabeled")) c.k_unlabeled = j["k_unlabeled"].get<int>();
    if (j.contains("hp")) c.hp = HyperParams::from_json(j["hp"].dump());
    if (j.contains("K")) c.K = j["K"].get<int>();
    if (j.contains("weights")) {
      const auto w = j["weights"].get<std::string>();
      if (w == "all-ones") {
        c.weights_all_ones = true;
      } else {
        c.weights = w;
      }
    }
    if (j.contains("dump_flow")) c.dump_flow = j["dump_flow"].get<std::string>();
    if (j.contains("synth")) c.synth = SynthConfig::from_json(j["synth"].dump());
    c.preset = get_or(j, "preset", c.preset);
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    c.seed = get_or(j, "seed", c.seed);
    c.threads = get_or(j, "threads", c.threads);
  } catch (const ordered_json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bad config field: ") + e.what());
  }
  return c;
}

std::string PipelineConfig::to_json() const {
  ordered_json j;
  ordered_json l = ordered_json::array();
  for (const auto& p : labeled) l.push_back(p.string());
  j["labeled"] = l;
  j["unlabeled"] = unlabeled.string();
  if (truth) j["truth"] = truth->string();
  j["old_classes"] = old_classes;
  j["method"] = std::string(to_string(method));
  j["selection"] = {{"alpha", selection.beta.alpha},
                    {"beta", selection.beta.beta},
                    {"reduce", std::string(to_string(selection.beta.reduce))},
                    {"L", selection.bins.n_chunks},
                    {"splits", selection.bins.n_splits},
                    {"chunk", selection.bins.select_chunk},
                    {"metric", std::string(to_string(selection.bins.metric))},
                    {"uniform_marginals", selection.bins.uniform_marginals},
                    {"budget", selection.greedy_budget}};
  if (selection.harden_threshold) j["selection"]["harden"] = *selection.harden_threshold;
  if (k_unlabeled) j["k_unlabeled"] = *k_unlabeled;
  j["hp"] = ordered_json::parse(hyper().to_json());
  if (K) j["K"] = *K;
  if (weights_all_ones) {
    j["weights"] = "all-ones";
  } else if (weights) {
    j["weights"] = weights->string();
  }
  if (dump_flow) j["dump_flow"] = dump_flow->string();
  j["synth"] = ordered_json::parse(synth.to_json());
  j["preset"] = preset;
  j["seeds"] = seeds;
  j["output_dir"] = output_dir.string();
  j["seed"] = seed;
  j["threads"] = threads;
  return j.dump(2);
}

int thread_budget() {
  if (const char* env = std::getenv("DSEL_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<int>(n);
    warn("ignoring DSEL_THREADS='" + std::string(env) + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return err->is_input_error() ? kExitInput : kExitInternal;
  return kExitInternal;
}

std::vector<int> load_label_file(const fs::path& path) {
  require_file(path);
  const auto ext = path.extension().string();
  if (ext == ".bin" || ext == ".csv") {
    std::ifstream probe(path);
    std::string first;
    std::getline(probe, first);
    if (ext == ".bin" || first.rfind("dim0", 0) == 0) {
      const EmbeddingSet s = load_embeddings(path, format_from_path(path));
      if (!s.has_labels()) throw Error(ErrorCode::kUnlabeled, path.string() + " carries no labels");
      return s.labels();
    }
  }
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line == "label")) continue;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(line, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != line.size()) {
      throw Error(ErrorCode::kMalformedHeader, path.string() + ":" + std::to_string(line_no) + ": not an integer label");
    }
    if (v < 0) throw Error(ErrorCode::kLabelOutOfRange, path.string() + ":" + std::to_string(line_no) + ": negative label");
    labels.push_back(v);
  }
  if (labels.empty()) throw Error(ErrorCode::kMalformedHeader, path.string() + " holds no labels");
  return labels;
}

void save_label_file(std::span<const int> labels, const fs::path& path) {
  std::string text = "label\n";
  for (int l : labels) text += std::to_string(l) + "\n";
  write_text(path, text);
}

std::set<int> parse_int_set(const std::string& text) {
  std::set<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw Error(ErrorCode::kInvalidArgument, "not an integer list: '" + text + "'");
    out.insert(v);
  }
  return out;
}

EmbeddingSet load_labeled_sources(const std::vector<fs::path>& paths) {
  if (paths.empty()) throw Error(ErrorCode::kInvalidArgument, "no labeled source given");
  std::vector<EmbeddingSet> sets;
  std::vector<std::string> names;
  for (const auto& p : paths) {
    sets.push_back(load_any(p));
    if (!sets.back().has_labels()) throw Error(ErrorCode::kUnlabeled, p.string() + " carries no labels");
    names.push_back(p.stem().string());
  }
  if (sets.size() == 1) return std::move(sets.front());
  return merge_sources(sets, names);
}

SelectionResult cmd_select(const PipelineConfig& config) {
  const EmbeddingSet labeled = load_labeled_sources(config.labeled);
  const EmbeddingSet unlabeled = load_any(config.unlabeled).without_labels();
  const bool needs_k = config.method == SelectionMethod::kBins || config.method == SelectionMethod::kGreedy ||
                       config.dump_flow.has_value();
  if (needs_k && !config.k_unlabeled) {
    throw Error(ErrorCode::kInvalidArgument, "--k-unlabeled is required for this selection (cluster count of the target)");
  }

  SelectionSettings s = config.selection;
  s.bins.seed = config.seed;
  SelectionResult result;
  std::optional<KMeansResult> clusters;
  auto target_clusters = [&]() -> const KMeansResult& {
    if (!clusters) {
      KMeansOptions ko;
      ko.seed = config.seed;
      clusters = kmeans(unlabeled, *config.k_unlabeled, ko);
    }
    return *clusters;
  };
  switch (config.method) {
    case SelectionMethod::kNone:
      result.weights = WeightAssignment::all_ones(labeled.n_categories());
      result.diagnostics.method = "none";
      break;
    case SelectionMethod::kGreedy: {
      const int budget = s.greedy_budget >= 0 ? s.greedy_budget : *config.k_unlabeled;
      result = greedy_similar_selection(category_centroids(labeled), target_clusters().centroids, budget,
                                        s.bins.metric, s.bins.uniform_marginals);
      break;
    }
    case SelectionMethod::kBins:
      result = binning_select(labeled, target_clusters().centroids, s.bins);
      break;
    case SelectionMethod::kBeta: {
      const auto sims = category_similarity(category_centroids(labeled), unlabeled, s.beta.reduce);
      result = beta_weights(sims, s.beta);
      if (s.harden_threshold) {
        result.weights = harden_weights(result.weights, *s.harden_threshold);
        result.diagnostics.method = "beta-hard";
      }
      break;
    }
  }

  fs::create_directories(config.output_dir);
  save_weights(result.weights, config.output_dir / "weights.json");
  write_text(config.output_dir / "selection.json", result.to_json() + "\n");
  if (config.dump_flow) {
    const CentroidSet src = category_centroids(labeled);
    const CentroidSet& tgt = target_clusters().centroids;
    const CostMatrix cost = pairwise_cost(src, tgt, s.bins.metric);
    const auto ms = s.bins.uniform_marginals ? uniform_marginals(src.counts.size()) : marginals_from_counts(src.counts);
    const auto mt = s.bins.uniform_marginals ? uniform_marginals(tgt.counts.size()) : marginals_from_counts(tgt.counts);
    dump_flow_csv(solve_emd(cost, ms, mt).flow, *config.dump_flow);
  }
  return result;
}

std::optional<EvalReport> cmd_discover(const PipelineConfig& config) {
  const EmbeddingSet unlabeled = load_any(config.unlabeled).without_labels();
  EmbeddingSet labeled;
  if (!config.labeled.empty()) labeled = load_labeled_sources(config.labeled);
  if (!config.K) {
    throw Error(ErrorCode::kInvalidArgument,
                "--k is required: supply the total number of categories (estimating it is not supported)");
  }

  WeightAssignment weights = WeightAssignment::all_ones(labeled.has_labels() ? labeled.n_categories() : 0);
  if (config.weights && !config.weights_all_ones) {
    require_file(*config.weights);
    weights = load_weights(*config.weights);
  }

  HyperParams hp = config.hyper();
  hp.seed = config.seed;
  fs::create_directories(config.output_dir);
  std::ofstream log(config.output_dir / "metrics.jsonl");
  if (!log) throw Error(ErrorCode::kIo, "cannot write " + (config.output_dir / "metrics.jsonl").string());
  TrainOptions opts;
  opts.on_epoch = [&](const EpochMetrics& m) { log << metrics_to_json_line(m) << '\n'; };

  const DiscoveryModel model = train(labeled, unlabeled, weights, hp, *config.K, opts);
  save_checkpoint(model, config.output_dir / "model.dsmd");
  const std::vector<int> pred = assign_labels(model, unlabeled);
  save_label_file(pred, config.output_dir / "assignments.txt");

  if (!config.truth) return std::nullopt;
  const std::vector<int> truth = load_label_file(*config.truth);
  if (truth.size() != pred.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "ground truth has " + std::to_string(truth.size()) +
                                                   " labels for " + std::to_string(pred.size()) + " instances");
  }
  const EvalReport report = split_accuracy(truth, pred, config.old_classes);
  write_text(config.output_dir / "report.json", report.to_json() + "\n");
  return report;
}

EvalReport cmd_evaluate(const fs::path& truth_path, const fs::path& predicted_path, const std::set<int>& old_classes) {
  const std::vector<int> truth = load_label_file(truth_path);
  const std::vector<int> pred = load_label_file(predicted_path);
  if (truth.size() != pred.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "label files differ in length: " + std::to_string(truth.size()) +
                                                   " vs " + std::to_string(pred.size()));
  }
  return split_accuracy(truth, pred, old_classes);
}

void cmd_synth(const PipelineConfig& config) {
  SynthConfig sc = config.synth;
  sc.seed = config.seed;
  const Scene scene = generate_scene(sc);
  const fs::path& dir = config.output_dir;
  fs::create_directories(dir);
  save_embeddings(scene.target, dir / "target.bin", EmbeddingFormat::kBinary);
  save_embeddings(scene.target_unlabeled(), dir / "unlabeled.bin", EmbeddingFormat::kBinary);
  save_embeddings(scene.old_labeled, dir / "old.bin", EmbeddingFormat::kBinary);
  for (HierarchyTier t : kAllTiers) {
    save_embeddings(scene.tiers.at(t), dir / ("tier_" + std::string(to_string(t)) + ".bin"),
                    EmbeddingFormat::kBinary);
  }
  const EmbeddingSet pooled = scene.labeled_source(kAllTiers);
  save_embeddings(pooled, dir / "pooled.bin", EmbeddingFormat::kBinary);

  ordered_json j;
  j["config"] = ordered_json::parse(sc.to_json());
  j["old_classes"] = scene.old_classes;
  j["n_target_categories"] = scene.n_target_categories();
  j["pooled_categories"] = pooled.category_names();
  j["suggested_K"] = pooled.n_categories() + sc.n_new;
  write_text(dir / "scene.json", j.dump(2) + "\n");
}

int cmd_pipeline(const PipelineConfig& config) {
  const fs::path& dir = config.output_dir;
  fs::create_directories(dir);
  BenchOptions bench;
  bench.seeds = config.seeds;
  bench.threads = config.threads;
  const HyperParams hp = config.hp.value_or(default_bench_hyperparams());

  if (config.preset == "sweetspot") {
    const auto rows = run_sweetspot(config.synth, hp, bench);
    write_text(dir / "sweep.csv", sweep_csv(rows));
    write_text(dir / "summary.json", summary_json(rows));
    write_text(dir / "plot.csv", plot_data_csv(rows));
    return all_pass(sweetspot_checks(rows)) ? kExitOk : kExitMargin;
  }
  if (config.preset == "selection") {
    const auto rows = run_selection_comparison(
        config.synth, hp, config.selection,
        {SelectionMethod::kNone, SelectionMethod::kGreedy, SelectionMethod::kBins, SelectionMethod::kBeta}, bench);
    write_text(dir / "sweep.csv", sweep_csv(rows));
    write_text(dir / "summary.json", summary_json(rows));
    return all_pass(comparison_checks(rows)) ? kExitOk : kExitMargin;
  }
  if (!config.preset.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "unknown preset '" + config.preset + "' (sweetspot, selection)");
  }

  SynthConfig sc = config.synth;
  sc.seed = config.seed;
  const Scene scene = generate_scene(sc);
  const EmbeddingSet pooled = scene.labeled_source(kAllTiers);
  SelectionSettings s = config.selection;
  s.bins.seed = config.seed;
  const SelectionResult sel = select_for_scene(scene, pooled, config.method, s);
  save_weights(sel.weights, dir / "weights.json");
  write_text(dir / "selection.json", sel.to_json() + "\n");
  HyperParams h = hp;
  h.seed = config.seed;
  const EvalReport report = discover_and_evaluate(scene, pooled, sel.weights, h);
  write_text(dir / "report.json", report.to_json() + "\n");
  write_text(dir / "sweep.csv", sweep_csv_header() + "\n" +
                                    sweep_csv_row(std::string(to_string(config.method)),
                                                  "seed" + std::to_string(config.seed), report) +
                                    "\n");
  return kExitOk;
}

}  // namespace dsel
