#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dsel/pipeline.hpp"

using namespace dsel;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "dsel_test_pipeline" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SynthConfig small_synth() {
  SynthConfig c;
  c.per_category = 15;
  c.labeled_per_category = 10;
  return c;
}

}  // namespace

TEST_CASE("config json round trip") {
  PipelineConfig c;
  c.labeled = {"a.bin", "b.csv"};
  c.unlabeled = "u.bin";
  c.old_classes = {0, 2};
  c.method = SelectionMethod::kBeta;
  c.selection.beta.alpha = 3;
  c.selection.harden_threshold = 0.2;
  c.K = 9;
  c.weights_all_ones = true;
  c.seeds = {4, 5};
  const PipelineConfig back = PipelineConfig::from_json(c.to_json());
  CHECK(back.labeled == c.labeled);
  CHECK(back.old_classes == c.old_classes);
  CHECK(back.method == SelectionMethod::kBeta);
  CHECK(back.selection.beta.alpha == 3);
  CHECK(*back.selection.harden_threshold == 0.2);
  CHECK(*back.K == 9);
  CHECK(back.weights_all_ones);
  CHECK(back.seeds == c.seeds);
  CHECK(PipelineConfig::from_json(R"({"labeled": "one.bin"})").labeled.size() == 1);
  CHECK_THROWS_AS(PipelineConfig::from_json("{"), Error);
  CHECK_THROWS_AS(PipelineConfig::from_json(R"({"method": "all"})"), Error);
  CHECK_THROWS_AS(PipelineConfig::from_json(R"({"K": "nine"})"), Error);
}

TEST_CASE("thread budget follows DSEL_THREADS") {
  ::setenv("DSEL_THREADS", "3", 1);
  CHECK(thread_budget() == 3);
  ::setenv("DSEL_THREADS", "zero", 1);
  CHECK(thread_budget() >= 1);
  ::unsetenv("DSEL_THREADS");
  CHECK(thread_budget() >= 1);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(Error(ErrorCode::kMissingFile, "x")) == kExitInput);
  CHECK(exit_code_for(Error(ErrorCode::kInvalidArgument, "x")) == kExitInput);
  CHECK(exit_code_for(Error(ErrorCode::kDivergence, "x")) == kExitInternal);
  CHECK(exit_code_for(std::runtime_error("x")) == kExitInternal);
}

TEST_CASE("label files and integer lists") {
  const fs::path d = fresh_dir("labels");
  const std::vector<int> labels = {3, 0, 1};
  save_label_file(labels, d / "l.txt");
  CHECK(load_label_file(d / "l.txt") == labels);
  std::ofstream(d / "bad.txt") << "label\n1\nx\n";
  CHECK_THROWS_AS(load_label_file(d / "bad.txt"), Error);
  CHECK_THROWS_AS(load_label_file(d / "absent.txt"), Error);
  CHECK(parse_int_set("0,1,3") == std::set<int>{0, 1, 3});
  CHECK(parse_int_set("").empty());
  CHECK_THROWS_AS(parse_int_set("1,a"), Error);
}

TEST_CASE("synth, select, discover and evaluate through files") {
  const fs::path d = fresh_dir("flow");
  PipelineConfig c;
  c.synth = small_synth();
  c.seed = 3;
  c.output_dir = d / "scene";
  cmd_synth(c);
  for (const char* f : {"target.bin", "unlabeled.bin", "old.bin", "pooled.bin", "tier_OOD.bin", "scene.json"}) {
    CHECK(fs::exists(d / "scene" / f));
  }
  const std::string first = slurp(d / "scene" / "target.bin");
  cmd_synth(c);
  CHECK(slurp(d / "scene" / "target.bin") == first);

  PipelineConfig s;
  s.labeled = {d / "scene" / "pooled.bin"};
  s.unlabeled = d / "scene" / "unlabeled.bin";
  s.method = SelectionMethod::kBins;
  s.output_dir = d / "select";
  CHECK_THROWS_AS(cmd_select(s), Error);
  s.k_unlabeled = 8;
  s.dump_flow = d / "select" / "flow.csv";
  const SelectionResult sel = cmd_select(s);
  CHECK(sel.weights.category_weights.size() == 20);
  CHECK(load_weights(d / "select" / "weights.json").category_weights == sel.weights.category_weights);
  CHECK(fs::exists(d / "select" / "flow.csv"));

  PipelineConfig disc;
  disc.labeled = s.labeled;
  disc.unlabeled = s.unlabeled;
  disc.output_dir = d / "discover";
  disc.truth = d / "scene" / "target.bin";
  disc.old_classes = {0, 1, 2, 3};
  HyperParams hp;
  hp.epochs = 3;
  disc.hp = hp;
  CHECK_THROWS_AS(cmd_discover(disc), Error);
  disc.K = 24;
  disc.weights = d / "select" / "weights.json";
  const auto report = cmd_discover(disc);
  REQUIRE(report.has_value());
  CHECK(report->n_all == 8 * 15);
  std::ifstream metrics(d / "discover" / "metrics.jsonl");
  int lines = 0;
  for (std::string l; std::getline(metrics, l);) ++lines;
  CHECK(lines == 3);
  const EvalReport again = cmd_evaluate(d / "scene" / "target.bin", d / "discover" / "assignments.txt", {0, 1, 2, 3});
  CHECK(again.acc_all == report->acc_all);
}

TEST_CASE("all-ones weights match the weight file of ones") {
  const fs::path d = fresh_dir("ones");
  PipelineConfig c;
  c.synth = small_synth();
  c.output_dir = d;
  cmd_synth(c);
  save_weights(WeightAssignment::all_ones(4), d / "ones.json");
  HyperParams hp;
  hp.epochs = 2;
  PipelineConfig a;
  a.labeled = {d / "old.bin"};
  a.unlabeled = d / "unlabeled.bin";
  a.K = 8;
  a.hp = hp;
  a.weights_all_ones = true;
  a.output_dir = d / "a";
  PipelineConfig b = a;
  b.weights_all_ones = false;
  b.weights = d / "ones.json";
  b.output_dir = d / "b";
  cmd_discover(a);
  cmd_discover(b);
  CHECK(slurp(d / "a" / "model.dsmd") == slurp(d / "b" / "model.dsmd"));
}

TEST_CASE("pipeline rejects unknown presets") {
  PipelineConfig c;
  c.output_dir = fresh_dir("preset");
  c.preset = "everything";
  CHECK_THROWS_AS(cmd_pipeline(c), Error);
}
