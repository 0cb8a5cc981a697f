#ifndef VREID_TRAINER_HPP
#define VREID_TRAINER_HPP

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vreid/embed_head.hpp"
#include "vreid/manifest.hpp"

namespace vreid {

enum class SamplerKind { kNaive, kBalanced };

SamplerKind sampler_from_name(const std::string& name);
std::string sampler_name(SamplerKind kind);

struct StageConfig {
  int epochs = 60;
  int batch_size = 36;
  LrSchedule schedule{0.02, {40}, 0.1};
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 1;
  SamplerKind sampler = SamplerKind::kNaive;
  // 0 means "one pass over the data", matching the naive policy's step count.
  std::size_t balanced_draws = 0;

  void validate() const;
};

// Stock protocol: 60 epochs with the lr divided by 10 at epoch 40 for the
// first stage; 12 epochs with the drop at epoch 8 for the second.
StageConfig default_stage1_config();
StageConfig default_stage2_config();

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
  std::uint64_t checksum = 0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
};

void save_train_log_csv(const TrainLog& log, const std::string& path);

// One shuffled pass: every index appears exactly once. Deterministic in
// (seed, epoch).
std::vector<std::size_t> naive_sampler(std::size_t count, std::uint64_t seed, int epoch);

// Class chosen uniformly, then a uniform record within the class.
std::vector<std::size_t> balanced_sampler(std::span<const int> labels, std::uint64_t seed,
                                          int epoch, std::size_t draws);

// Dense training inputs resolved from sample records.
struct TrainSet {
  Mat features;             // n x d_in, promoted to double
  std::vector<int> labels;  // global class ids
};

TrainSet build_train_set(const std::vector<SampleRecord>& records, int class_count);

// Stage-I: plain cross-entropy over the pooled multi-source records. Pooling
// the data realizes the per-source double sum, with all sources treated
// equally.
std::pair<HeadParameters, TrainLog> train_stage1(const std::vector<SampleRecord>& records,
                                                 const MergedLabelSpace& space,
                                                 const StageConfig& cfg);

// Stage-II: replaces the classifier for the target label space, then
// fine-tunes everything on the target records.
std::pair<HeadParameters, TrainLog> train_stage2(HeadParameters params,
                                                 const std::vector<SampleRecord>& records,
                                                 const MergedLabelSpace& target_space,
                                                 const StageConfig& cfg);

struct MarginReport {
  std::map<int, double> per_class_mean;
  double overall_mean = 0.0;
};

// Per-sample angular margin: cosine to the own classifier weight minus the
// best cosine to any other class weight.
MarginReport margin_probe(const HeadParameters& params, const Mat& features,
                          std::span<const int> labels);

}  // namespace vreid

#endif  // VREID_TRAINER_HPP
