#ifndef VREID_EMBED_HEAD_HPP
#define VREID_EMBED_HEAD_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vreid/linalg.hpp"

namespace vreid {

// The embedding f is the batch-norm output: input features -> fc1 (512-d)
// -> batch norm -> f, and a linear classifier on top of f for training.
constexpr std::size_t kEmbedDim = 512;
constexpr double kBnEpsilon = 1e-5;
constexpr double kBnMomentum = 0.1;

enum class ForwardMode { kTrain, kEval };

struct HeadParameters {
  std::size_t d_in = 0;
  std::size_t class_count = 0;
  Mat fc1_weight;          // d_in x 512
  std::vector<double> fc1_bias;
  std::vector<double> bn_gamma;
  std::vector<double> bn_beta;
  std::vector<double> bn_running_mean;
  std::vector<double> bn_running_var;
  Mat classifier_weight;   // 512 x C
  std::vector<double> classifier_bias;
};

// Fan-in scaled uniform init for both linear layers; gamma = 1, beta = 0,
// running stats (0, 1). Deterministic in the seed.
HeadParameters init_head(std::size_t d_in, std::size_t class_count, std::uint64_t seed);

// Replaces the classifier with a fresh one; everything before it is
// preserved bit for bit.
void swap_classifier(HeadParameters& params, std::size_t new_class_count, std::uint64_t seed);

struct Prediction {
  Mat logits;  // n x C
  Mat probs;   // n x C, rows sum to 1
};

struct ForwardCache {
  Mat input;        // n x d_in
  Mat pre_bn;       // fc1 output
  Mat normalized;   // (pre_bn - mean) / std
  std::vector<double> batch_mean;
  std::vector<double> batch_var;   // biased
  std::vector<double> inv_std;
};

struct ForwardResult {
  Mat embeddings;  // n x 512, the batch-norm output
  Prediction pred;
  std::optional<ForwardCache> cache;  // train mode only
};

// Train mode normalizes with batch statistics and updates the running
// estimates in place; eval mode is a pure function of (params, batch).
ForwardResult forward(HeadParameters& params, const Mat& batch, ForwardMode mode);
ForwardResult forward_eval(const HeadParameters& params, const Mat& batch);

// Mean softmax cross-entropy over the batch, computed from logits via
// log-sum-exp.
double cross_entropy(const Prediction& pred, std::span<const int> labels);

struct HeadGradients {
  Mat fc1_weight;
  std::vector<double> fc1_bias;
  std::vector<double> bn_gamma;
  std::vector<double> bn_beta;
  Mat classifier_weight;
  std::vector<double> classifier_bias;
};

// Analytic gradients of the mean cross-entropy through classifier, batch
// norm (batch-statistics chain rule) and fc1.
HeadGradients backward(const HeadParameters& params, const ForwardResult& fwd,
                       std::span<const int> labels);

struct SgdConfig {
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

// Momentum buffers, zero-initialized on first use.
struct SgdState {
  Mat fc1_weight;
  std::vector<double> fc1_bias;
  std::vector<double> bn_gamma;
  std::vector<double> bn_beta;
  Mat classifier_weight;
  std::vector<double> classifier_bias;
  bool initialized = false;
};

// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v.
// Batch-norm gamma/beta are excluded from decay, running stats untouched.
void sgd_step(HeadParameters& params, const HeadGradients& grads, SgdState& state,
              const SgdConfig& cfg);

struct LrSchedule {
  double base_lr = 0.02;
  std::vector<int> milestones;  // epochs at which lr is multiplied by factor
  double factor = 0.1;
};

double lr_at_epoch(const LrSchedule& schedule, int epoch);

// FNV-1a over the parameter bytes, running statistics included.
std::uint64_t parameter_checksum(const HeadParameters& params);
bool theta_equal(const HeadParameters& a, const HeadParameters& b);  // all but classifier

// Checkpoint file: magic "RFHD", version, d_in, C, then little-endian
// 64-bit-float tensors in declared order.
void save_checkpoint(const HeadParameters& params, const std::string& path);
HeadParameters load_checkpoint(const std::string& path);

}  // namespace vreid

#endif  // VREID_EMBED_HEAD_HPP
