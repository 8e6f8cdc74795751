#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dsel/pipeline.hpp"

namespace {

using dsel::PipelineConfig;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dsel::Error(dsel::ErrorCode::kMissingFile, "no such file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Flags bound to plain variables; applied over the config file only when given.
struct Flags {
  std::string config;
  std::vector<std::string> labeled;
  std::string unlabeled, truth, predicted, old_classes, method, reduce, metric, weights, dump_flow, preset, out;
  double alpha = 0, beta = 0, harden = 0;
  int L = 0, splits = 0, chunk = 0, budget = 0, k_unlabeled = 0, K = 0, epochs = 0;
  double lambda = 0, epsilon = 0, lr = 0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;
};

bool given(CLI::App* app, const char* name) {
  const CLI::Option* opt = app->get_option_no_throw(name);
  return opt != nullptr && opt->count() > 0;
}

PipelineConfig build_config(CLI::App* app, const Flags& f) {
  PipelineConfig c = f.config.empty() ? PipelineConfig{} : PipelineConfig::from_json(read_file(f.config));
  auto given = [&](const char* name) { return ::given(app, name); };
  if (given("--labeled")) c.labeled.assign(f.labeled.begin(), f.labeled.end());
  if (given("--unlabeled")) c.unlabeled = f.unlabeled;
  if (given("--truth")) c.truth = f.truth;
  if (given("--old-classes")) c.old_classes = dsel::parse_int_set(f.old_classes);
  if (given("--method")) c.method = dsel::selection_method_from_string(f.method);
  if (given("--alpha")) c.selection.beta.alpha = f.alpha;
  if (given("--beta")) c.selection.beta.beta = f.beta;
  if (given("--reduce")) c.selection.beta.reduce = dsel::reduce_from_string(f.reduce);
  if (given("--harden")) c.selection.harden_threshold = f.harden;
  if (given("--L")) c.selection.bins.n_chunks = f.L;
  if (given("--splits")) c.selection.bins.n_splits = f.splits;
  if (given("--chunk")) c.selection.bins.select_chunk = f.chunk;
  if (given("--metric")) c.selection.bins.metric = dsel::metric_from_string(f.metric);
  if (given("--budget")) c.selection.greedy_budget = f.budget;
  if (given("--k-unlabeled")) c.k_unlabeled = f.k_unlabeled;
  if (given("--k")) c.K = f.K;
  if (given("--weights")) {
    if (f.weights == "all-ones") {
      c.weights_all_ones = true;
      c.weights.reset();
    } else {
      c.weights_all_ones = false;
      c.weights = f.weights;
    }
  }
  if (given("--dump-flow")) c.dump_flow = f.dump_flow;
  if (given("--preset")) c.preset = f.preset;
  if (given("--out")) c.output_dir = f.out;
  if (given("--seed")) c.seed = f.seed;
  if (given("--seeds")) c.seeds = f.seeds;
  if (given("--epochs") || given("--lambda") || given("--epsilon") || given("--lr")) {
    dsel::HyperParams hp = c.hp.value_or(c.preset.empty() ? dsel::HyperParams{} : dsel::default_bench_hyperparams());
    if (given("--epochs")) hp.epochs = f.epochs;
    if (given("--lambda")) hp.lambda = f.lambda;
    if (given("--epsilon")) hp.epsilon = f.epsilon;
    if (given("--lr")) hp.lr = f.lr;
    c.hp = hp;
  }
  c.threads = dsel::thread_budget();
  return c;
}

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON config; flags override its fields");
  app->add_option("--out", f.out, "Output directory");
  app->add_option("--seed", f.seed, "Random seed");
}

void add_inputs(CLI::App* app, Flags& f) {
  app->add_option("--labeled", f.labeled, "Labeled embedding file(s); several are merged");
  app->add_option("--unlabeled", f.unlabeled, "Unlabeled target embedding file");
}

void add_selection(CLI::App* app, Flags& f) {
  app->add_option("--method", f.method, "none, greedy, bins or beta");
  app->add_option("--alpha", f.alpha, "Beta shape alpha");
  app->add_option("--beta", f.beta, "Beta shape beta");
  app->add_option("--reduce", f.reduce, "Similarity reduce: min, median or max");
  app->add_option("--harden", f.harden, "Harden beta weights at this threshold");
  app->add_option("--L", f.L, "Number of binning chunks");
  app->add_option("--splits", f.splits, "Random target bisections for binning");
  app->add_option("--chunk", f.chunk, "Chunk to keep (1-based)");
  app->add_option("--metric", f.metric, "euclidean, cosine or l2norm-euclidean");
  app->add_option("--budget", f.budget, "Greedy selection budget");
  app->add_option("--k-unlabeled", f.k_unlabeled, "Cluster count of the target for bins and greedy");
}

void add_training(CLI::App* app, Flags& f) {
  app->add_option("--k", f.K, "Total number of categories K");
  app->add_option("--epochs", f.epochs, "Training epochs");
  app->add_option("--lambda", f.lambda, "Supervised mixing weight");
  app->add_option("--epsilon", f.epsilon, "Entropy regulariser weight");
  app->add_option("--lr", f.lr, "Prototype learning rate");
}

int run(int argc, char** argv) {
  CLI::App app{"Labeled-data selection and category discovery on embedding files"};
  app.require_subcommand(1);
  Flags f;

  auto* select = app.add_subcommand("select", "Weight or filter labeled categories against the target");
  add_common(select, f);
  add_inputs(select, f);
  add_selection(select, f);
  select->add_option("--dump-flow", f.dump_flow, "Write the source-to-target EMD flow as CSV");

  auto* discover = app.add_subcommand("discover", "Train the discovery model and assign target labels");
  add_common(discover, f);
  add_inputs(discover, f);
  add_training(discover, f);
  discover->add_option("--weights", f.weights, "Weight JSON file or 'all-ones'");
  discover->add_option("--truth", f.truth, "Ground-truth labels of the unlabeled set");
  discover->add_option("--old-classes", f.old_classes, "Comma-separated old class ids");

  auto* evaluate = app.add_subcommand("evaluate", "Score predicted labels against ground truth");
  evaluate->add_option("--truth", f.truth, "Ground-truth labels")->required();
  evaluate->add_option("--pred", f.predicted, "Predicted labels")->required();
  evaluate->add_option("--old-classes", f.old_classes, "Comma-separated old class ids");
  evaluate->add_option("--out", f.out, "Write report.json here instead of stdout");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene");
  add_common(synth, f);

  auto* pipeline = app.add_subcommand("pipeline", "Synthesize, select, discover and evaluate");
  add_common(pipeline, f);
  add_selection(pipeline, f);
  add_training(pipeline, f);
  pipeline->add_option("--preset", f.preset, "sweetspot or selection");
  pipeline->add_option("--seeds", f.seeds, "Seeds for preset tables");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? dsel::kExitOk : dsel::kExitInput;
  }

  try {
    if (*select) {
      const auto result = dsel::cmd_select(build_config(select, f));
      std::cerr << "selected " << result.weights.category_weights.size() << " category weights\n";
      return dsel::kExitOk;
    }
    if (*discover) {
      const auto report = dsel::cmd_discover(build_config(discover, f));
      if (report) std::cout << report->to_json() << '\n';
      return dsel::kExitOk;
    }
    if (*evaluate) {
      const auto report = dsel::cmd_evaluate(f.truth, f.predicted, dsel::parse_int_set(f.old_classes));
      if (evaluate->count("--out") > 0) {
        std::filesystem::create_directories(f.out);
        std::ofstream(std::filesystem::path(f.out) / "report.json") << report.to_json() << '\n';
      } else {
        std::cout << report.to_json() << '\n';
      }
      return dsel::kExitOk;
    }
    if (*synth) {
      dsel::cmd_synth(build_config(synth, f));
      return dsel::kExitOk;
    }
    if (*pipeline) {
      const PipelineConfig c = build_config(pipeline, f);
      const int rc = dsel::cmd_pipeline(c);
      if (rc == dsel::kExitMargin) std::cerr << "acceptance margins missed; see " << (c.output_dir / "summary.json") << '\n';
      return rc;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return dsel::exit_code_for(e);
  }
  return dsel::kExitInternal;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
