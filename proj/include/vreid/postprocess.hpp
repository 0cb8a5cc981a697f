#ifndef VREID_POSTPROCESS_HPP
#define VREID_POSTPROCESS_HPP

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "vreid/eval.hpp"
#include "vreid/retrieval.hpp"

namespace vreid {

struct DbscanConfig {
  double eps = 0.5;   // cosine-distance radius
  int min_pts = 2;
};

struct ClusterAssignment {
  std::vector<int> labels;  // -1 = noise, else contiguous ids from 0
  int cluster_count = 0;
};

// Density clustering over a normalized store with distance = 1 - cosine.
// Scan order is ascending index, so labels are deterministic.
ClusterAssignment dbscan(const EmbeddingStore& store, const DbscanConfig& cfg);

// Each clustered query becomes the normalized mean of the other members'
// original features (or of the whole cluster with include_self). Singleton
// and noise queries pass through.
EmbeddingStore query_expansion(const EmbeddingStore& queries, const ClusterAssignment& clusters,
                               bool include_self = false);

struct FilterReport {
  std::size_t skipped_queries = 0;          // query lacked the needed attribute
  std::size_t missing_gallery_entries = 0;  // gallery entries kept for lack of it
};

// Deletes gallery candidates in the query's own camera cluster.
RankingResult camera_verification(const RankingResult& ranking,
                                  const std::vector<std::optional<int>>& query_cams,
                                  const std::vector<std::optional<int>>& gallery_cams,
                                  FilterReport* report = nullptr);

// Keeps candidates with timestamp in [t - tau, t + tau]; +inf tau is identity.
RankingResult temporal_filter(const RankingResult& ranking,
                              const std::vector<std::optional<std::int64_t>>& query_ts,
                              const std::vector<std::optional<std::int64_t>>& gallery_ts,
                              double tau, FilterReport* report = nullptr);

struct RerankConfig {
  int k1 = 20;
  int k2 = 6;
  double lambda = 0.3;

  void validate(std::size_t gallery_size) const;
};

// k-reciprocal re-ranking over the concatenated query+gallery set. Final
// distance = lambda * original + (1 - lambda) * Jaccard distance over the
// expanded reciprocal neighborhoods.
RankingResult k_reciprocal_rerank(const EmbeddingStore& queries, const EmbeddingStore& gallery,
                                  const RerankConfig& cfg);

// The final distance matrix (queries x gallery), for callers that need to
// re-sort restricted candidate sets.
std::vector<std::vector<double>> k_reciprocal_final_distances(const EmbeddingStore& queries,
                                                              const EmbeddingStore& gallery,
                                                              const RerankConfig& cfg);

// ---------------------------------------------------------------------------
// Pipeline

enum class PipelineStep {
  kAggregate,
  kEnsemble,
  kQueryExpansion,
  kCameraVerification,
  kTemporalFilter,
  kRerank,
};

PipelineStep pipeline_step_from_name(const std::string& name);
std::string pipeline_step_name(PipelineStep step);

// Embeddings with possibly several views per sample (crops, flips, ...).
struct MultiViewSet {
  EmbeddingStore rows;               // one row per view
  std::vector<std::size_t> owner;    // row -> sample index (non-decreasing)
  std::size_t sample_count = 0;

  static MultiViewSet single_view(EmbeddingStore store);
};

struct PipelineInput {
  std::vector<MultiViewSet> query_models;    // one entry per model
  std::vector<MultiViewSet> gallery_models;
  std::vector<std::optional<int>> query_cams;
  std::vector<std::optional<int>> gallery_cams;
  std::vector<std::optional<std::int64_t>> query_ts;
  std::vector<std::optional<std::int64_t>> gallery_ts;
  const std::vector<RelevanceJudgment>* judgments = nullptr;  // enables per-step mAP
};

struct PipelineConfig {
  DbscanConfig dbscan;
  bool qe_include_self = false;
  double tau = std::numeric_limits<double>::infinity();
  RerankConfig rerank;
};

struct StepReport {
  std::string name;
  double mean_candidates = 0.0;
  std::size_t empty_candidate_queries = 0;
  std::optional<double> map;
  std::size_t warnings = 0;
};

struct PipelineResult {
  RankingResult ranking;
  std::vector<StepReport> reports;  // "base" row first, then one per step
};

// Applies the steps in order. Filters shrink per-query candidate sets;
// embedding-level steps re-rank the surviving candidates.
PipelineResult run_pipeline(const PipelineInput& input, const std::vector<PipelineStep>& steps,
                            const PipelineConfig& cfg);

}  // namespace vreid

#endif  // VREID_POSTPROCESS_HPP
