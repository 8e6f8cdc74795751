#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dsel/discovery.hpp"
#include "dsel/evaluation.hpp"
#include "dsel/selection.hpp"
#include "dsel/synthbench.hpp"

namespace dsel {

enum ExitCode : int { kExitOk = 0, kExitInternal = 1, kExitInput = 2, kExitMargin = 3 };

/// Everything one CLI invocation needs. Loaded from a JSON config file and
/// then overridden field by field from command-line flags.
struct PipelineConfig {
  std::vector<std::filesystem::path> labeled;  // merged when more than one
  std::filesystem::path unlabeled;
  std::optional<std::filesystem::path> truth;  // ground-truth labels of the unlabeled set
  std::set<int> old_classes;

  SelectionMethod method = SelectionMethod::kNone;
  SelectionSettings selection;
  std::optional<int> k_unlabeled;  // target clusters for bins / greedy

  std::optional<HyperParams> hp;
  std::optional<int> K;
  std::optional<std::filesystem::path> weights;  // discover: weight file
  bool weights_all_ones = false;
  std::optional<std::filesystem::path> dump_flow;

  SynthConfig synth = default_synth_config();
  std::string preset;  // pipeline: "", "sweetspot" or "selection"
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  int threads = 1;

  HyperParams hyper() const { return hp.value_or(HyperParams{}); }
  static PipelineConfig from_json(const std::string& text);
  std::string to_json() const;
};

// DSEL_THREADS when set and positive, else the hardware concurrency.
int thread_budget();

// 2 for input errors (bad files, flags, configs), 1 for everything else.
int exit_code_for(const std::exception& e);

// One integer per line, optional "label" header; labeled embedding files also accepted.
std::vector<int> load_label_file(const std::filesystem::path& path);
void save_label_file(std::span<const int> labels, const std::filesystem::path& path);

std::set<int> parse_int_set(const std::string& text);

EmbeddingSet load_labeled_sources(const std::vector<std::filesystem::path>& paths);

// Writes weights.json and selection.json (and the flow CSV when requested).
SelectionResult cmd_select(const PipelineConfig& config);

// Writes model.dsmd, assignments.txt, metrics.jsonl and, with ground truth, report.json.
std::optional<EvalReport> cmd_discover(const PipelineConfig& config);

EvalReport cmd_evaluate(const std::filesystem::path& truth, const std::filesystem::path& predicted,
                        const std::set<int>& old_classes);

// Writes the scene: target.bin (with labels), unlabeled.bin, old.bin, one file per tier, pooled.bin, scene.json.
void cmd_synth(const PipelineConfig& config);

// Presets run the bench tables; otherwise synth, select, discover and evaluate on one scene.
// Returns kExitMargin when a preset misses an acceptance margin.
int cmd_pipeline(const PipelineConfig& config);

}  // namespace dsel
