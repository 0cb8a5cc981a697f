#ifndef VREID_EXPERIMENTS_HPP
#define VREID_EXPERIMENTS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vreid/eval.hpp"
#include "vreid/postprocess.hpp"
#include "vreid/synthgen.hpp"
#include "vreid/trainer.hpp"

namespace vreid {

// Synthetic benchmark around a target source (source 1) with held-out
// validation classes: the training side of every trend experiment.
struct BenchmarkConfig {
  SynthConfig synth;
  int val_class_count = 5;
  StageConfig stage1;
  StageConfig stage2;
  bool cross_camera_junk = true;
  std::vector<int> k_values = {1, 5};
};

BenchmarkConfig default_benchmark_config();

struct ArmOutcome {
  double map = 0.0;
  double rank1 = 0.0;
  TrainLog stage1_log;
  TrainLog stage2_log;  // empty unless two-stage
  HeadParameters params;
  HeadParameters stage1_params;   // before the classifier swap (two-stage only)
  int target_class_count = 0;     // train classes of the target source
};

// Trains on the target source plus the given auxiliary sources (subset of
// 2..D). two_stage=false trains only the pooled stage-1 objective; the
// validation mAP always scores the target source's held-out classes.
ArmOutcome run_training_arm(const BenchmarkConfig& cfg, const std::vector<int>& aux_sources,
                            bool two_stage, std::uint64_t seed,
                            const std::vector<std::string>& post_steps = {},
                            const PipelineConfig& post_cfg = {});

// Classifier restricted to its first columns, e.g. to probe target-class
// margins of a model trained with auxiliary classes present (the target
// source merges first, so its classes occupy the leading columns).
HeadParameters restrict_classifier(const HeadParameters& params, int column_count);

// Post-processing ablation on raw synthetic embeddings (no training): two
// embedding realizations of the same instance act as the model ensemble.
struct PostAblationConfig {
  SynthConfig synth;
  int queries_per_identity = 2;
  std::vector<std::string> steps = {"aggregate", "ensemble", "query_expansion",
                                    "camera_verification", "rerank"};
  PipelineConfig pipeline;
  bool cross_camera_junk = true;
};

PostAblationConfig default_post_ablation_config();

std::vector<StepReport> run_post_ablation(const PostAblationConfig& cfg, std::uint64_t seed);

struct SamplerComparisonOutcome {
  double naive_map = 0.0;
  double balanced_map = 0.0;
  int max_class_count = 0;   // long-tail premise: most images in few classes
  double mean_class_count = 0.0;
};

SamplerComparisonOutcome run_sampler_comparison(const BenchmarkConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Ablation grids (the `ablate` subcommand)

struct AblationArmSpec {
  std::string name;
  std::vector<int> aux_sources;
  bool two_stage = false;
  SamplerKind sampler = SamplerKind::kNaive;
  std::vector<std::string> post_steps;
};

struct AblationSpec {
  BenchmarkConfig benchmark;
  PipelineConfig pipeline;
  std::vector<AblationArmSpec> arms;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
};

struct AblationRow {
  std::string arm;
  std::uint64_t seed = 0;
  double map = 0.0;
  double rank1 = 0.0;
};

AblationSpec ablation_spec_from_json(const std::string& text);
std::string ablation_spec_to_json(const AblationSpec& spec);  // resolved defaults echoed

std::vector<AblationRow> run_ablation(const AblationSpec& spec);

// Markdown + CSV report with the resolved config and version info embedded.
void write_ablation_report(const AblationSpec& spec, const std::vector<AblationRow>& rows,
                           const std::string& md_path, const std::string& csv_path);

double median(std::vector<double> values);

}  // namespace vreid

#endif  // VREID_EXPERIMENTS_HPP
