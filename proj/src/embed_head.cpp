#include "vreid/embed_head.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "vreid/errors.hpp"
#include "vreid/io.hpp"
#include "vreid/rng.hpp"

namespace vreid {

namespace {

void fill_fan_in_uniform(Mat& w, std::vector<double>& bias, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : w.a) v = rng.next_uniform(-bound, bound);
  for (double& v : bias) v = rng.next_uniform(-bound, bound);
}

void check_finite(const Mat& m, const char* what) {
  for (double v : m.a)
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
}

}  // namespace

HeadParameters init_head(std::size_t d_in, std::size_t class_count, std::uint64_t seed) {
  if (d_in == 0) throw ConfigError("init_head: d_in must be positive");
  if (class_count < 2) throw ConfigError("init_head: need at least 2 classes");
  HeadParameters p;
  p.d_in = d_in;
  p.class_count = class_count;
  p.fc1_weight = Mat(d_in, kEmbedDim);
  p.fc1_bias.assign(kEmbedDim, 0.0);
  p.bn_gamma.assign(kEmbedDim, 1.0);
  p.bn_beta.assign(kEmbedDim, 0.0);
  p.bn_running_mean.assign(kEmbedDim, 0.0);
  p.bn_running_var.assign(kEmbedDim, 1.0);
  p.classifier_weight = Mat(kEmbedDim, class_count);
  p.classifier_bias.assign(class_count, 0.0);

  Rng fc1 = Rng::stream(seed, {rngtag::kHeadFc1});
  fill_fan_in_uniform(p.fc1_weight, p.fc1_bias, d_in, fc1);
  Rng fc2 = Rng::stream(seed, {rngtag::kHeadClassifier});
  fill_fan_in_uniform(p.classifier_weight, p.classifier_bias, kEmbedDim, fc2);
  return p;
}

void swap_classifier(HeadParameters& params, std::size_t new_class_count, std::uint64_t seed) {
  if (new_class_count < 2) throw ConfigError("swap_classifier: need at least 2 classes");
  params.class_count = new_class_count;
  params.classifier_weight = Mat(kEmbedDim, new_class_count);
  params.classifier_bias.assign(new_class_count, 0.0);
  Rng fc2 = Rng::stream(seed, {rngtag::kHeadClassifier});
  fill_fan_in_uniform(params.classifier_weight, params.classifier_bias, kEmbedDim, fc2);
}

namespace {

ForwardResult forward_impl(const HeadParameters& params, HeadParameters* mutable_params,
                           const Mat& batch, ForwardMode mode) {
  if (batch.cols != params.d_in)
    throw DataError("forward: batch has " + std::to_string(batch.cols) +
                    " columns, head expects " + std::to_string(params.d_in));
  if (batch.rows == 0) throw DataError("forward: empty batch");
  check_finite(batch, "input batch");

  const std::size_t n = batch.rows;
  Mat z = matmul(batch, params.fc1_weight);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < kEmbedDim; ++j) z[i][j] += params.fc1_bias[j];

  ForwardResult out;
  Mat f(n, kEmbedDim);
  if (mode == ForwardMode::kTrain) {
    ForwardCache cache;
    cache.input = batch;
    cache.batch_mean.assign(kEmbedDim, 0.0);
    cache.batch_var.assign(kEmbedDim, 0.0);
    cache.inv_std.assign(kEmbedDim, 0.0);
    for (std::size_t j = 0; j < kEmbedDim; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += z[i][j];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double d = z[i][j] - mean;
        var += d * d;
      }
      var /= static_cast<double>(n);
      cache.batch_mean[j] = mean;
      cache.batch_var[j] = var;
      cache.inv_std[j] = 1.0 / std::sqrt(var + kBnEpsilon);
    }
    cache.normalized = Mat(n, kEmbedDim);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < kEmbedDim; ++j) {
        double nv = (z[i][j] - cache.batch_mean[j]) * cache.inv_std[j];
        cache.normalized[i][j] = nv;
        f[i][j] = params.bn_gamma[j] * nv + params.bn_beta[j];
      }
    if (mutable_params) {
      for (std::size_t j = 0; j < kEmbedDim; ++j) {
        mutable_params->bn_running_mean[j] =
            (1.0 - kBnMomentum) * mutable_params->bn_running_mean[j] +
            kBnMomentum * cache.batch_mean[j];
        mutable_params->bn_running_var[j] =
            (1.0 - kBnMomentum) * mutable_params->bn_running_var[j] +
            kBnMomentum * cache.batch_var[j];
      }
    }
    cache.pre_bn = std::move(z);
    out.cache = std::move(cache);
  } else {
    for (std::size_t j = 0; j < kEmbedDim; ++j) {
      double inv_std = 1.0 / std::sqrt(params.bn_running_var[j] + kBnEpsilon);
      for (std::size_t i = 0; i < n; ++i)
        f[i][j] = params.bn_gamma[j] * (z[i][j] - params.bn_running_mean[j]) * inv_std +
                  params.bn_beta[j];
    }
  }

  Mat logits = matmul(f, params.classifier_weight);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < params.class_count; ++j) logits[i][j] += params.classifier_bias[j];

  Mat probs(n, params.class_count);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits[i][0];
    for (std::size_t j = 1; j < params.class_count; ++j) mx = std::max(mx, logits[i][j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < params.class_count; ++j) {
      probs[i][j] = std::exp(logits[i][j] - mx);
      sum += probs[i][j];
    }
    for (std::size_t j = 0; j < params.class_count; ++j) probs[i][j] /= sum;
  }

  out.embeddings = std::move(f);
  out.pred.logits = std::move(logits);
  out.pred.probs = std::move(probs);
  return out;
}

}  // namespace

ForwardResult forward(HeadParameters& params, const Mat& batch, ForwardMode mode) {
  return forward_impl(params, mode == ForwardMode::kTrain ? &params : nullptr, batch, mode);
}

ForwardResult forward_eval(const HeadParameters& params, const Mat& batch) {
  return forward_impl(params, nullptr, batch, ForwardMode::kEval);
}

double cross_entropy(const Prediction& pred, std::span<const int> labels) {
  const std::size_t n = pred.logits.rows;
  const std::size_t c = pred.logits.cols;
  if (labels.size() != n) throw DataError("cross_entropy: label count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw DataError("cross_entropy: label " + std::to_string(y) + " out of range for C=" +
                      std::to_string(c));
    double mx = pred.logits[i][0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, pred.logits[i][j]);
    double lse = 0.0;
    for (std::size_t j = 0; j < c; ++j) lse += std::exp(pred.logits[i][j] - mx);
    total += (mx + std::log(lse)) - pred.logits[i][static_cast<std::size_t>(y)];
  }
  return total / static_cast<double>(n);
}

HeadGradients backward(const HeadParameters& params, const ForwardResult& fwd,
                       std::span<const int> labels) {
  if (!fwd.cache) throw DataError("backward: missing forward cache (train-mode forward required)");
  const ForwardCache& cache = *fwd.cache;
  const std::size_t n = cache.input.rows;
  if (labels.size() != n) throw DataError("backward: label count mismatch");

  // d(mean CE)/d logits = (softmax - onehot) / n
  Mat dlogits = fwd.pred.probs;
  for (std::size_t i = 0; i < n; ++i) {
    int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= params.class_count)
      throw DataError("backward: label out of range");
    dlogits[i][static_cast<std::size_t>(y)] -= 1.0;
    for (std::size_t j = 0; j < params.class_count; ++j) dlogits[i][j] /= static_cast<double>(n);
  }

  HeadGradients g;
  g.classifier_weight = matmul_at_b(fwd.embeddings, dlogits);
  g.classifier_bias.assign(params.class_count, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < params.class_count; ++j) g.classifier_bias[j] += dlogits[i][j];

  Mat df = matmul_a_bt(dlogits, params.classifier_weight);

  g.bn_gamma.assign(kEmbedDim, 0.0);
  g.bn_beta.assign(kEmbedDim, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < kEmbedDim; ++j) {
      g.bn_gamma[j] += df[i][j] * cache.normalized[i][j];
      g.bn_beta[j] += df[i][j];
    }

  // Batch-norm backward with batch statistics:
  // dz = inv_std/n * (n*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
  Mat dz(n, kEmbedDim);
  for (std::size_t j = 0; j < kEmbedDim; ++j) {
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double dxhat = df[i][j] * params.bn_gamma[j];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * cache.normalized[i][j];
    }
    for (std::size_t i = 0; i < n; ++i) {
      double dxhat = df[i][j] * params.bn_gamma[j];
      dz[i][j] = cache.inv_std[j] / static_cast<double>(n) *
                 (static_cast<double>(n) * dxhat - sum_dxhat -
                  cache.normalized[i][j] * sum_dxhat_xhat);
    }
  }

  g.fc1_weight = matmul_at_b(cache.input, dz);
  g.fc1_bias.assign(kEmbedDim, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < kEmbedDim; ++j) g.fc1_bias[j] += dz[i][j];
  return g;
}

namespace {

void sgd_apply(std::vector<double>& param, const std::vector<double>& grad,
               std::vector<double>& velocity, double lr, double momentum, double decay) {
  if (velocity.size() != param.size()) velocity.assign(param.size(), 0.0);
  for (std::size_t i = 0; i < param.size(); ++i) {
    double v = momentum * velocity[i] + grad[i] + decay * param[i];
    velocity[i] = v;
    param[i] -= lr * v;
  }
}

void sgd_apply(Mat& param, const Mat& grad, Mat& velocity, double lr, double momentum,
               double decay) {
  if (!velocity.same_shape(param)) velocity = Mat(param.rows, param.cols);
  sgd_apply(param.a, grad.a, velocity.a, lr, momentum, decay);
}

}  // namespace

void sgd_step(HeadParameters& params, const HeadGradients& grads, SgdState& state,
              const SgdConfig& cfg) {
  if (cfg.lr < 0.0) throw ConfigError("sgd_step: negative learning rate");
  sgd_apply(params.fc1_weight, grads.fc1_weight, state.fc1_weight, cfg.lr, cfg.momentum,
            cfg.weight_decay);
  sgd_apply(params.fc1_bias, grads.fc1_bias, state.fc1_bias, cfg.lr, cfg.momentum,
            cfg.weight_decay);
  sgd_apply(params.bn_gamma, grads.bn_gamma, state.bn_gamma, cfg.lr, cfg.momentum, 0.0);
  sgd_apply(params.bn_beta, grads.bn_beta, state.bn_beta, cfg.lr, cfg.momentum, 0.0);
  sgd_apply(params.classifier_weight, grads.classifier_weight, state.classifier_weight, cfg.lr,
            cfg.momentum, cfg.weight_decay);
  sgd_apply(params.classifier_bias, grads.classifier_bias, state.classifier_bias, cfg.lr,
            cfg.momentum, cfg.weight_decay);
  state.initialized = true;
}

double lr_at_epoch(const LrSchedule& schedule, int epoch) {
  if (epoch < 0) throw ConfigError("lr_at_epoch: negative epoch");
  double lr = schedule.base_lr;
  for (int m : schedule.milestones)
    if (epoch >= m) lr *= schedule.factor;
  return lr;
}

namespace {

void checksum_bytes(std::uint64_t& h, const void* data, std::size_t len) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

void checksum_vec(std::uint64_t& h, const std::vector<double>& v) {
  checksum_bytes(h, v.data(), v.size() * sizeof(double));
}

}  // namespace

std::uint64_t parameter_checksum(const HeadParameters& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  checksum_vec(h, p.fc1_weight.a);
  checksum_vec(h, p.fc1_bias);
  checksum_vec(h, p.bn_gamma);
  checksum_vec(h, p.bn_beta);
  checksum_vec(h, p.bn_running_mean);
  checksum_vec(h, p.bn_running_var);
  checksum_vec(h, p.classifier_weight.a);
  checksum_vec(h, p.classifier_bias);
  return h;
}

bool theta_equal(const HeadParameters& a, const HeadParameters& b) {
  return a.d_in == b.d_in && a.fc1_weight.a == b.fc1_weight.a && a.fc1_bias == b.fc1_bias &&
         a.bn_gamma == b.bn_gamma && a.bn_beta == b.bn_beta &&
         a.bn_running_mean == b.bn_running_mean && a.bn_running_var == b.bn_running_var;
}

namespace {
constexpr char kCheckpointMagic[4] = {'R', 'F', 'H', 'D'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_tensor(std::ostream& os, const std::vector<double>& v) {
  for (double x : v) io::write_f64(os, x);
}

void read_tensor(std::istream& is, std::vector<double>& v, std::size_t n, const char* ctx) {
  v.resize(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = io::read_f64(is, ctx);
}

}  // namespace

void save_checkpoint(const HeadParameters& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  io::write_magic(out, kCheckpointMagic);
  io::write_u32(out, kCheckpointVersion);
  io::write_u32(out, static_cast<std::uint32_t>(p.d_in));
  io::write_u32(out, static_cast<std::uint32_t>(p.class_count));
  write_tensor(out, p.fc1_weight.a);
  write_tensor(out, p.fc1_bias);
  write_tensor(out, p.bn_gamma);
  write_tensor(out, p.bn_beta);
  write_tensor(out, p.bn_running_mean);
  write_tensor(out, p.bn_running_var);
  write_tensor(out, p.classifier_weight.a);
  write_tensor(out, p.classifier_bias);
  if (!out) throw DataError("write failed for checkpoint '" + path + "'");
}

HeadParameters load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  io::expect_magic(in, kCheckpointMagic, path);
  std::uint32_t version = io::read_u32(in, path);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint '" + path + "': unsupported version " + std::to_string(version));
  HeadParameters p;
  p.d_in = io::read_u32(in, path);
  p.class_count = io::read_u32(in, path);
  p.fc1_weight = Mat(p.d_in, kEmbedDim);
  read_tensor(in, p.fc1_weight.a, p.d_in * kEmbedDim, "fc1_weight");
  read_tensor(in, p.fc1_bias, kEmbedDim, "fc1_bias");
  read_tensor(in, p.bn_gamma, kEmbedDim, "bn_gamma");
  read_tensor(in, p.bn_beta, kEmbedDim, "bn_beta");
  read_tensor(in, p.bn_running_mean, kEmbedDim, "bn_running_mean");
  read_tensor(in, p.bn_running_var, kEmbedDim, "bn_running_var");
  p.classifier_weight = Mat(kEmbedDim, p.class_count);
  read_tensor(in, p.classifier_weight.a, kEmbedDim * p.class_count, "classifier_weight");
  read_tensor(in, p.classifier_bias, p.class_count, "classifier_bias");
  return p;
}

}  // namespace vreid
