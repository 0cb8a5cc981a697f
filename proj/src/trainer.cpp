#include "vreid/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "vreid/errors.hpp"
#include "vreid/rng.hpp"

namespace vreid {

SamplerKind sampler_from_name(const std::string& name) {
  if (name == "naive") return SamplerKind::kNaive;
  if (name == "balanced") return SamplerKind::kBalanced;
  throw ConfigError("unknown sampler '" + name + "'");
}

std::string sampler_name(SamplerKind kind) {
  return kind == SamplerKind::kNaive ? "naive" : "balanced";
}

void StageConfig::validate() const {
  if (epochs < 0) throw ConfigError("stage config: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("stage config: batch_size must be >= 1");
  if (schedule.base_lr < 0.0) throw ConfigError("stage config: negative learning rate");
  if (weight_decay < 0.0) throw ConfigError("stage config: negative weight decay");
}

StageConfig default_stage1_config() {
  StageConfig cfg;
  cfg.epochs = 60;
  cfg.schedule = LrSchedule{0.02, {40}, 0.1};
  return cfg;
}

StageConfig default_stage2_config() {
  StageConfig cfg;
  cfg.epochs = 12;
  cfg.schedule = LrSchedule{0.02, {8}, 0.1};
  return cfg;
}

void save_train_log_csv(const TrainLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write train log '" + path + "'");
  out << "epoch,loss,lr,seconds\n";
  for (const auto& e : log.epochs) {
    std::ostringstream line;
    line.precision(10);
    line << e.epoch << "," << e.mean_loss << "," << e.lr << "," << e.seconds << "\n";
    out << line.str();
  }
}

std::vector<std::size_t> naive_sampler(std::size_t count, std::uint64_t seed, int epoch) {
  if (count == 0) throw DataError("naive_sampler: no records");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::stream(seed, {rngtag::kEpochOrder, static_cast<std::uint64_t>(epoch)});
  for (std::size_t i = count; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::vector<std::size_t> balanced_sampler(std::span<const int> labels, std::uint64_t seed,
                                          int epoch, std::size_t draws) {
  if (labels.empty()) throw DataError("balanced_sampler: no records");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::vector<const std::vector<std::size_t>*> classes;
  classes.reserve(by_class.size());
  for (const auto& [cls, rows] : by_class) classes.push_back(&rows);

  Rng rng = Rng::stream(seed, {rngtag::kBalancedDraw, static_cast<std::uint64_t>(epoch)});
  std::vector<std::size_t> out;
  out.reserve(draws);
  for (std::size_t d = 0; d < draws; ++d) {
    const auto& rows = *classes[rng.next_below(classes.size())];
    out.push_back(rows[rng.next_below(rows.size())]);
  }
  return out;
}

TrainSet build_train_set(const std::vector<SampleRecord>& records, int class_count) {
  if (records.empty()) throw DataError("build_train_set: no records");
  std::vector<std::string> missing;
  std::size_t d_in = 0;
  for (const auto& r : records) {
    if (!r.feature || r.feature->empty()) {
      missing.push_back(r.image_id);
      continue;
    }
    if (d_in == 0) d_in = r.feature->size();
    if (r.feature->size() != d_in)
      throw DataError("build_train_set: feature dimension mismatch at image '" + r.image_id + "'");
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < std::min<std::size_t>(missing.size(), 8); ++i)
      list += (i ? ", " : "") + missing[i];
    if (missing.size() > 8) list += ", ...";
    throw DataError("build_train_set: " + std::to_string(missing.size()) +
                    " records lack features: " + list);
  }

  TrainSet set;
  set.features = Mat(records.size(), d_in);
  set.labels.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.global_class < 0 || r.global_class >= class_count)
      throw DataError("build_train_set: image '" + r.image_id + "' has class " +
                      std::to_string(r.global_class) + " outside [0, " +
                      std::to_string(class_count) + ")");
    for (std::size_t d = 0; d < d_in; ++d)
      set.features[i][d] = static_cast<double>((*r.feature)[d]);
    set.labels.push_back(r.global_class);
  }
  return set;
}

namespace {

Mat gather_rows(const Mat& features, std::span<const std::size_t> rows) {
  Mat out(rows.size(), features.cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(features[rows[i]], features[rows[i]] + features.cols, out[i]);
  return out;
}

TrainLog run_epochs(HeadParameters& params, const TrainSet& set, const StageConfig& cfg) {
  TrainLog log;
  SgdState opt;
  const std::size_t n = set.features.rows;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    double lr = lr_at_epoch(cfg.schedule, epoch);
    std::vector<std::size_t> order;
    if (cfg.sampler == SamplerKind::kNaive) {
      order = naive_sampler(n, cfg.seed, epoch);
    } else {
      std::size_t draws = cfg.balanced_draws ? cfg.balanced_draws : n;
      order = balanced_sampler(set.labels, cfg.seed, epoch, draws);
    }

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> rows(order.data() + start, end - start);
      Mat batch = gather_rows(set.features, rows);
      std::vector<int> labels(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = set.labels[rows[i]];

      ForwardResult fwd = forward(params, batch, ForwardMode::kTrain);
      double loss = cross_entropy(fwd.pred, labels);
      if (!std::isfinite(loss)) throw NumericError("training diverged: non-finite loss");
      loss_sum += loss * static_cast<double>(rows.size());
      HeadGradients grads = backward(params, fwd, labels);
      sgd_step(params, grads, opt,
               SgdConfig{lr, cfg.momentum, cfg.weight_decay});
    }

    auto t1 = std::chrono::steady_clock::now();
    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = loss_sum / static_cast<double>(order.size());
    entry.lr = lr;
    entry.seconds = std::chrono::duration<double>(t1 - t0).count();
    entry.checksum = parameter_checksum(params);
    log.epochs.push_back(entry);
  }
  return log;
}

}  // namespace

std::pair<HeadParameters, TrainLog> train_stage1(const std::vector<SampleRecord>& records,
                                                 const MergedLabelSpace& space,
                                                 const StageConfig& cfg) {
  cfg.validate();
  if (cfg.epochs < 1) throw ConfigError("train_stage1: epochs must be >= 1");
  TrainSet set = build_train_set(records, space.total_classes());
  HeadParameters params =
      init_head(set.features.cols, static_cast<std::size_t>(space.total_classes()), cfg.seed);
  TrainLog log = run_epochs(params, set, cfg);
  return {std::move(params), std::move(log)};
}

std::pair<HeadParameters, TrainLog> train_stage2(HeadParameters params,
                                                 const std::vector<SampleRecord>& records,
                                                 const MergedLabelSpace& target_space,
                                                 const StageConfig& cfg) {
  cfg.validate();
  TrainSet set = build_train_set(records, target_space.total_classes());

  std::vector<bool> present(static_cast<std::size_t>(target_space.total_classes()), false);
  for (int label : set.labels) present[static_cast<std::size_t>(label)] = true;
  for (int c = 0; c < target_space.total_classes(); ++c)
    if (!present[static_cast<std::size_t>(c)])
      throw DataError("train_stage2: target class " + std::to_string(c) + " has no records");

  if (set.features.cols != params.d_in)
    throw DataError("train_stage2: checkpoint expects d_in " + std::to_string(params.d_in) +
                    ", records have " + std::to_string(set.features.cols));

  swap_classifier(params, static_cast<std::size_t>(target_space.total_classes()), cfg.seed);
  TrainLog log = run_epochs(params, set, cfg);  // fresh optimizer state per stage
  return {std::move(params), std::move(log)};
}

MarginReport margin_probe(const HeadParameters& params, const Mat& features,
                          std::span<const int> labels) {
  if (params.class_count < 2) throw ConfigError("margin_probe: need at least 2 classes");
  for (double v : params.classifier_weight.a)
    if (!std::isfinite(v)) throw NumericError("margin_probe: classifier has non-finite weights");
  for (double v : params.fc1_weight.a)
    if (!std::isfinite(v)) throw NumericError("margin_probe: head has non-finite weights");
  if (features.rows != labels.size()) throw DataError("margin_probe: label count mismatch");

  ForwardResult fwd = forward_eval(params, features);

  // Unit-normalized classifier columns.
  const std::size_t c_count = params.class_count;
  std::vector<std::vector<double>> weight_cols(c_count, std::vector<double>(kEmbedDim));
  for (std::size_t c = 0; c < c_count; ++c) {
    double norm = 0.0;
    for (std::size_t d = 0; d < kEmbedDim; ++d) {
      weight_cols[c][d] = params.classifier_weight[d][c];
      norm += weight_cols[c][d] * weight_cols[c][d];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) throw NumericError("margin_probe: zero classifier column");
    for (double& v : weight_cols[c]) v /= norm;
  }

  MarginReport report;
  std::map<int, std::pair<double, std::size_t>> acc;
  double total = 0.0;
  for (std::size_t i = 0; i < features.rows; ++i) {
    int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c_count)
      throw DataError("margin_probe: label out of range");
    double fnorm = 0.0;
    for (std::size_t d = 0; d < kEmbedDim; ++d) fnorm += fwd.embeddings[i][d] * fwd.embeddings[i][d];
    fnorm = std::sqrt(fnorm);
    if (fnorm == 0.0) throw NumericError("margin_probe: zero embedding");

    double own = 0.0;
    double best_other = -2.0;
    for (std::size_t c = 0; c < c_count; ++c) {
      double cosv = 0.0;
      for (std::size_t d = 0; d < kEmbedDim; ++d) cosv += fwd.embeddings[i][d] * weight_cols[c][d];
      cosv /= fnorm;
      if (static_cast<std::size_t>(y) == c)
        own = cosv;
      else
        best_other = std::max(best_other, cosv);
    }
    double margin = own - best_other;
    auto& slot = acc[y];
    slot.first += margin;
    slot.second += 1;
    total += margin;
  }
  for (const auto& [cls, slot] : acc)
    report.per_class_mean[cls] = slot.first / static_cast<double>(slot.second);
  report.overall_mean = total / static_cast<double>(features.rows);
  return report;
}

}  // namespace vreid
