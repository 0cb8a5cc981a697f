// Acceptance suite: one pass/fail line per criterion, non-zero exit on any
// failure. Trend criteria run the synthetic benchmark at the pinned defaults.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "vreid/embed_head.hpp"
#include "vreid/eval.hpp"
#include "vreid/experiments.hpp"
#include "vreid/postprocess.hpp"
#include "vreid/retrieval.hpp"
#include "vreid/rng.hpp"
#include "vreid/synthgen.hpp"
#include "vreid/trainer.hpp"

using namespace vreid;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail, double seconds) {
  std::printf("[%s] criterion %d: %s (%.1fs)\n", pass ? "PASS" : "FAIL", criterion,
              detail.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::vector<std::uint64_t> seeds() { return {101, 202, 303, 404, 505}; }

// ---------------------------------------------------------------------------
// 1. Metric oracle equivalence on random instances.

void criterion1() {
  Timer timer;
  Rng rng = Rng::stream(7, {900});
  double max_diff = 0.0;
  for (int instance = 0; instance < 100; ++instance) {
    std::size_t nq = 1 + rng.next_below(30);
    std::size_t ng = 5 + rng.next_below(196);
    std::size_t dim = 4 + rng.next_below(12);
    std::size_t classes = 2 + rng.next_below(12);

    EmbeddingStore queries, gallery;
    queries.count = nq;
    queries.dim = dim;
    queries.data.resize(nq * dim);
    for (float& v : queries.data) v = static_cast<float>(rng.next_gaussian());
    gallery.count = ng;
    gallery.dim = dim;
    gallery.data.resize(ng * dim);
    for (float& v : gallery.data) v = static_cast<float>(rng.next_gaussian());
    normalize_store(queries);
    normalize_store(gallery);

    std::vector<int> query_class(nq), gallery_class(ng);
    for (auto& c : query_class) c = static_cast<int>(rng.next_below(classes));
    for (auto& c : gallery_class) c = static_cast<int>(rng.next_below(classes));

    std::vector<RelevanceJudgment> judgments(nq);
    for (std::size_t q = 0; q < nq; ++q)
      for (std::size_t g = 0; g < ng; ++g) {
        if (gallery_class[g] == query_class[q])
          judgments[q].relevant.insert(g);
        else if (rng.next_double() < 0.02)
          judgments[q].junk.insert(g);  // junk distractors excluded from ranks
      }

    RankingResult ranking = rank_gallery(queries, gallery);
    EvalReport report_lib = evaluate(ranking, judgments, {1, 5, 10});

    double ap_sum = 0.0;
    std::size_t scored = 0;
    double r1 = 0, r5 = 0, r10 = 0;
    for (std::size_t q = 0; q < nq; ++q) {
      double ap = oracles::ap_reference(ranking.queries[q].indices, judgments[q].relevant,
                                        judgments[q].junk);
      if (std::isnan(ap)) continue;
      ++scored;
      ap_sum += ap;
      r1 += oracles::rank_at_k_reference(ranking.queries[q].indices, judgments[q].relevant,
                                         judgments[q].junk, 1);
      r5 += oracles::rank_at_k_reference(ranking.queries[q].indices, judgments[q].relevant,
                                         judgments[q].junk, 5);
      r10 += oracles::rank_at_k_reference(ranking.queries[q].indices, judgments[q].relevant,
                                          judgments[q].junk, 10);
    }
    if (scored == 0) continue;
    max_diff = std::max(max_diff, std::fabs(report_lib.map - ap_sum / scored));
    max_diff = std::max(max_diff, std::fabs(report_lib.rank_at_k[0] - r1 / scored));
    max_diff = std::max(max_diff, std::fabs(report_lib.rank_at_k[1] - r5 / scored));
    max_diff = std::max(max_diff, std::fabs(report_lib.rank_at_k[2] - r10 / scored));
  }
  double secs = timer.seconds();
  bool pass = max_diff < 1e-9 && secs < 10.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "mAP/Rank@K vs brute force, max |diff| = %.2e over 100 instances",
                max_diff);
  report(1, pass, buf, secs);
}

// ---------------------------------------------------------------------------
// 2. Gradient check against central finite differences.

void criterion2() {
  Timer timer;
  const std::size_t batch = 8, d_in = 16, classes = 7;
  const double step = 1e-4;
  double worst = 0.0;

  for (std::uint64_t seed : {11ULL, 22ULL, 33ULL, 44ULL, 55ULL}) {
    HeadParameters params = init_head(d_in, classes, seed);
    Rng rng = Rng::stream(seed, {77});
    Mat batch_data(batch, d_in);
    for (double& v : batch_data.a) v = rng.next_gaussian();
    std::vector<int> labels(batch);
    for (auto& y : labels) y = static_cast<int>(rng.next_below(classes));

    ForwardResult fwd = forward(params, batch_data, ForwardMode::kTrain);
    HeadGradients grads = backward(params, fwd, labels);

    auto loss_of = [&](const HeadParameters& p) {
      HeadParameters copy = p;  // running-stat updates stay local
      ForwardResult f = forward(copy, batch_data, ForwardMode::kTrain);
      return cross_entropy(f.pred, labels);
    };
    auto check = [&](std::vector<double>& tensor, const std::vector<double>& analytic) {
      for (std::size_t i = 0; i < tensor.size(); ++i) {
        double keep = tensor[i];
        tensor[i] = keep + step;
        double up = loss_of(params);
        tensor[i] = keep - step;
        double down = loss_of(params);
        tensor[i] = keep;
        double numeric = (up - down) / (2.0 * step);
        // Relative where gradients are meaningful, absolute at the tolerance
        // scale where they vanish into finite-difference noise.
        double denom = std::max({std::fabs(numeric), std::fabs(analytic[i]), 1e-4});
        worst = std::max(worst, std::fabs(numeric - analytic[i]) / denom);
      }
    };
    check(params.fc1_weight.a, grads.fc1_weight.a);
    check(params.fc1_bias, grads.fc1_bias);
    check(params.bn_gamma, grads.bn_gamma);
    check(params.bn_beta, grads.bn_beta);
    check(params.classifier_weight.a, grads.classifier_weight.a);
    check(params.classifier_bias, grads.classifier_bias);
  }
  double secs = timer.seconds();
  bool pass = worst < 1e-4 && secs < 30.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "analytic vs finite-difference gradients, max rel err = %.2e (5 seeds)", worst);
  report(2, pass, buf, secs);
}

// ---------------------------------------------------------------------------
// 3 + 6. Two-stage trend and convergence trend share the training arms.

struct TrendArms {
  std::vector<double> two_stage_map;
  std::vector<double> target_only_map;
  std::vector<double> stage2_loss_at_t2;
  std::vector<double> scratch_loss_at_t2;
  int t2_epochs = 0;
};

TrendArms run_trend_arms() {
  TrendArms arms;
  BenchmarkConfig cfg = default_benchmark_config();
  arms.t2_epochs = cfg.stage2.epochs;
  std::vector<int> all_aux = {2, 3, 4};
  for (std::uint64_t seed : seeds()) {
    ArmOutcome two_stage = run_training_arm(cfg, all_aux, true, seed);
    ArmOutcome target_only = run_training_arm(cfg, {}, false, seed);
    arms.two_stage_map.push_back(two_stage.map);
    arms.target_only_map.push_back(target_only.map);
    arms.stage2_loss_at_t2.push_back(two_stage.stage2_log.epochs.back().mean_loss);
    std::size_t idx = static_cast<std::size_t>(cfg.stage2.epochs) - 1;
    arms.scratch_loss_at_t2.push_back(target_only.stage1_log.epochs[idx].mean_loss);
  }
  return arms;
}

void criterion3_and_6(const TrendArms& arms, double train_seconds) {
  double med_two = median(arms.two_stage_map);
  double med_single = median(arms.target_only_map);
  bool pass3 = (med_two - med_single) >= 0.02 && train_seconds < 180.0;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "two-stage median mAP %.4f vs target-only %.4f (gap %+.2f points, need >= +2)",
                med_two, med_single, 100.0 * (med_two - med_single));
  report(3, pass3, buf, train_seconds);

  double med_stage2 = median(arms.stage2_loss_at_t2);
  double med_scratch = median(arms.scratch_loss_at_t2);
  bool pass6 = med_stage2 < med_scratch;
  std::snprintf(buf, sizeof(buf),
                "stage-II loss at epoch %d median %.4f < from-scratch %.4f", arms.t2_epochs,
                med_stage2, med_scratch);
  report(6, pass6, buf, 0.0);
}

// ---------------------------------------------------------------------------
// 4. More-data trend over auxiliary-source subsets.

void criterion4() {
  Timer timer;
  BenchmarkConfig cfg = default_benchmark_config();
  std::vector<std::pair<std::string, std::vector<int>>> subsets = {
      {"target", {}}, {"target+s2", {2}}, {"target+s3", {3}}, {"target+s4", {4}},
      {"all", {2, 3, 4}}};

  std::map<std::string, double> medians;
  std::string detail;
  for (const auto& [name, aux] : subsets) {
    std::vector<double> maps;
    for (std::uint64_t seed : seeds()) maps.push_back(run_training_arm(cfg, aux, false, seed).map);
    medians[name] = median(maps);
    char part[64];
    std::snprintf(part, sizeof(part), "%s=%.4f ", name.c_str(), medians[name]);
    detail += part;
  }
  bool never_decreases = medians["target+s2"] >= medians["target"] &&
                         medians["target+s3"] >= medians["target"] &&
                         medians["target+s4"] >= medians["target"];
  bool all_is_max = true;
  for (const auto& [name, value] : medians)
    if (value > medians["all"] + 1e-12) all_is_max = false;
  double secs = timer.seconds();
  report(4, never_decreases && all_is_max && secs < 300.0,
         "stage-I median mAP by subset: " + detail, secs);
}

// ---------------------------------------------------------------------------
// 5. Post-processing trend: re-ranking and the full pipeline column.

void criterion5() {
  Timer timer;
  PostAblationConfig cfg = default_post_ablation_config();

  std::map<std::string, std::vector<double>> columns;
  std::vector<std::string> row_order;
  for (std::uint64_t seed : seeds()) {
    std::vector<StepReport> reports = run_post_ablation(cfg, seed);
    if (row_order.empty())
      for (const auto& r : reports) row_order.push_back(r.name);
    for (const auto& r : reports) columns[r.name].push_back(r.map.value_or(0.0));
  }

  std::string detail;
  std::vector<double> med_column;
  for (const auto& name : row_order) {
    med_column.push_back(median(columns[name]));
    char part[64];
    std::snprintf(part, sizeof(part), "%s=%.4f ", name.c_str(), med_column.back());
    detail += part;
  }
  bool non_decreasing = true;
  for (std::size_t i = 1; i < med_column.size(); ++i)
    if (med_column[i] + 1e-12 < med_column[i - 1]) non_decreasing = false;
  bool rerank_helps = med_column.back() >= med_column.front();
  double secs = timer.seconds();
  report(5, non_decreasing && rerank_helps && secs < 120.0, "median mAP column: " + detail, secs);
}

// ---------------------------------------------------------------------------
// 7. Sampling policy comparison on a long-tailed set.

void criterion7() {
  Timer timer;
  BenchmarkConfig cfg = default_benchmark_config();
  cfg.synth.long_tail_exponent = 2.5;

  std::vector<double> naive, balanced;
  int max_count = 0;
  for (std::uint64_t seed : seeds()) {
    SamplerComparisonOutcome out = run_sampler_comparison(cfg, seed);
    naive.push_back(out.naive_map);
    balanced.push_back(out.balanced_map);
    max_count = std::max(max_count, out.max_class_count);
  }
  double med_naive = median(naive);
  double med_balanced = median(balanced);
  bool pass = med_naive >= med_balanced;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "naive median mAP %.4f >= balanced %.4f (long tail: largest class %d images, "
                "mean %d)",
                med_naive, med_balanced, max_count, cfg.synth.images_per_identity);
  report(7, pass, buf, timer.seconds());
}

// ---------------------------------------------------------------------------
// 8. Reference-transcription equivalence and byte-stable determinism.

bool dbscan_matches_reference(std::uint64_t seed, std::size_t count) {
  Rng rng = Rng::stream(seed, {4242});
  EmbeddingStore store;
  store.dim = 6;
  store.count = count;
  store.data.resize(count * 6);
  for (float& v : store.data) v = static_cast<float>(rng.next_gaussian());
  normalize_store(store);

  DbscanConfig cfg;
  cfg.eps = 0.2 + 0.3 * rng.next_double();
  cfg.min_pts = 2 + static_cast<int>(rng.next_below(4));
  ClusterAssignment ours = dbscan(store, cfg);

  std::vector<std::vector<double>> dist(count, std::vector<double>(count, 0.0));
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < count; ++j) {
      double dot = 0.0;
      for (std::size_t d = 0; d < store.dim; ++d)
        dot += static_cast<double>(store.row(i)[d]) * static_cast<double>(store.row(j)[d]);
      dist[i][j] = 1.0 - dot;
    }
  std::vector<int> reference = oracles::dbscan_reference(dist, cfg.eps, cfg.min_pts);

  // Exact agreement up to cluster-id permutation.
  std::map<int, int> fwd, bwd;
  for (std::size_t i = 0; i < count; ++i) {
    int a = ours.labels[i];
    int b = reference[i];
    if ((a == -1) != (b == -1)) return false;
    if (a == -1) continue;
    auto fit = fwd.find(a);
    auto bit = bwd.find(b);
    if (fit == fwd.end() && bit == bwd.end()) {
      fwd[a] = b;
      bwd[b] = a;
    } else if (fit == fwd.end() || bit == bwd.end() || fit->second != b || bit->second != a) {
      return false;
    }
  }
  return true;
}

bool rerank_matches_reference(std::uint64_t seed, std::size_t nq, std::size_t ng) {
  Rng rng = Rng::stream(seed, {777});
  auto random_store = [&](std::size_t n) {
    EmbeddingStore s;
    s.dim = 8;
    s.count = n;
    s.data.resize(n * 8);
    for (float& v : s.data) v = static_cast<float>(rng.next_gaussian());
    normalize_store(s);
    return s;
  };
  EmbeddingStore queries = random_store(nq);
  EmbeddingStore gallery = random_store(ng);

  RerankConfig cfg;
  cfg.k1 = std::min<int>(8, static_cast<int>(ng) - 1);
  cfg.k2 = 3;
  cfg.lambda = 0.3;

  std::vector<std::vector<double>> ours = k_reciprocal_final_distances(queries, gallery, cfg);

  std::vector<std::vector<double>> qrows(nq, std::vector<double>(8));
  std::vector<std::vector<double>> grows(ng, std::vector<double>(8));
  for (std::size_t i = 0; i < nq; ++i)
    for (std::size_t d = 0; d < 8; ++d) qrows[i][d] = queries.row(i)[d];
  for (std::size_t i = 0; i < ng; ++i)
    for (std::size_t d = 0; d < 8; ++d) grows[i][d] = gallery.row(i)[d];
  oracles::RerankReferenceResult ref =
      oracles::rerank_reference(qrows, grows, cfg.k1, cfg.k2, cfg.lambda);

  for (std::size_t q = 0; q < nq; ++q)
    for (std::size_t g = 0; g < ng; ++g)
      if (std::fabs(ours[q][g] - ref.final_dist[q][g]) > 1e-9) return false;
  return true;
}

std::string file_bytes(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) return "";
  std::string bytes;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) bytes.append(buf, n);
  std::fclose(f);
  return bytes;
}

void criterion8() {
  Timer timer;
  bool dbscan_ok = true;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL})
    dbscan_ok = dbscan_ok && dbscan_matches_reference(seed, seed == 1 ? 200 : 60 + 20 * seed);

  bool rerank_ok = rerank_matches_reference(5, 12 / 2, 12 / 2) &&  // 12-point instance
                   rerank_matches_reference(6, 20, 180) &&          // 200-point instance
                   rerank_matches_reference(7, 10, 50);

  // Filter idempotence and commutation.
  Rng rng = Rng::stream(9, {31});
  EmbeddingStore queries, gallery;
  queries.dim = gallery.dim = 5;
  queries.count = 6;
  gallery.count = 40;
  queries.data.resize(queries.count * 5);
  gallery.data.resize(gallery.count * 5);
  for (float& v : queries.data) v = static_cast<float>(rng.next_gaussian());
  for (float& v : gallery.data) v = static_cast<float>(rng.next_gaussian());
  normalize_store(queries);
  normalize_store(gallery);
  std::vector<std::optional<int>> qcams, gcams;
  std::vector<std::optional<std::int64_t>> qts, gts;
  for (std::size_t i = 0; i < queries.count; ++i) {
    qcams.push_back(static_cast<int>(rng.next_below(3)));
    qts.push_back(static_cast<std::int64_t>(rng.next_below(1000)));
  }
  for (std::size_t i = 0; i < gallery.count; ++i) {
    gcams.push_back(i % 7 == 0 ? std::optional<int>{} : std::optional<int>(static_cast<int>(rng.next_below(3))));
    gts.push_back(static_cast<std::int64_t>(rng.next_below(1000)));
  }
  RankingResult base = rank_gallery(queries, gallery);
  auto cam = [&](const RankingResult& r) { return camera_verification(r, qcams, gcams); };
  auto tmp = [&](const RankingResult& r) { return temporal_filter(r, qts, gts, 250.0); };
  auto same = [](const RankingResult& a, const RankingResult& b) {
    if (a.queries.size() != b.queries.size()) return false;
    for (std::size_t q = 0; q < a.queries.size(); ++q)
      if (a.queries[q].indices != b.queries[q].indices) return false;
    return true;
  };
  bool filters_ok = same(cam(cam(base)), cam(base)) && same(tmp(tmp(base)), tmp(base)) &&
                    same(cam(tmp(base)), tmp(cam(base)));

  // Determinism golden files: byte-identical across two runs.
  SynthConfig synth;
  synth.sources = 2;
  synth.identities_per_source = 5;
  synth.images_per_identity = 4;
  synth.feature_dim = 12;
  synth.seed = 321;
  SynthDataset a = generate(synth);
  SynthDataset b = generate(synth);
  save_embeddings(a.sources[0].features, "acc_golden_a.emb");
  save_embeddings(b.sources[0].features, "acc_golden_b.emb");
  bool synth_stable = file_bytes("acc_golden_a.emb") == file_bytes("acc_golden_b.emb") &&
                      !file_bytes("acc_golden_a.emb").empty();

  EmbeddingStore qs = a.sources[0].features;
  EmbeddingStore gs = a.sources[1].features;
  normalize_store(qs);
  normalize_store(gs);
  save_ranking_jsonl(rank_gallery(qs, gs), "acc_golden_a.jsonl");
  save_ranking_jsonl(rank_gallery(qs, gs), "acc_golden_b.jsonl");
  bool rank_stable = file_bytes("acc_golden_a.jsonl") == file_bytes("acc_golden_b.jsonl") &&
                     !file_bytes("acc_golden_a.jsonl").empty();

  for (const char* scratch : {"acc_golden_a.emb", "acc_golden_b.emb", "acc_golden_a.jsonl",
                              "acc_golden_b.jsonl"})
    std::remove(scratch);

  bool pass = dbscan_ok && rerank_ok && filters_ok && synth_stable && rank_stable;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "dbscan oracle %s, rerank oracle %s, filter laws %s, golden bytes %s",
                dbscan_ok ? "ok" : "MISMATCH", rerank_ok ? "ok" : "MISMATCH",
                filters_ok ? "ok" : "VIOLATED", (synth_stable && rank_stable) ? "stable" : "UNSTABLE");
  report(8, pass, buf, timer.seconds());
}

}  // namespace

int main() {
  Timer total;
  criterion1();
  criterion2();
  Timer trend_timer;
  TrendArms arms = run_trend_arms();
  criterion3_and_6(arms, trend_timer.seconds());
  criterion4();
  criterion5();
  criterion7();
  criterion8();
  std::printf("acceptance total: %.1fs, %d failure(s)\n", total.seconds(), g_failures);
  return g_failures == 0 ? 0 : 1;
}
