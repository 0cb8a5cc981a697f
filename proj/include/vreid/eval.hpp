#ifndef VREID_EVAL_HPP
#define VREID_EVAL_HPP

#include <set>
#include <vector>

#include "vreid/manifest.hpp"
#include "vreid/retrieval.hpp"

namespace vreid {

// Per-query ground truth: relevant gallery rows and junk rows. Junk entries
// are removed from the ranked list before any rank is assigned.
struct RelevanceJudgment {
  std::set<std::size_t> relevant;
  std::set<std::size_t> junk;
};

struct EvalReport {
  double map = 0.0;
  std::vector<int> k_values;
  std::vector<double> rank_at_k;       // aligned with k_values
  std::vector<double> per_query_ap;    // NaN for skipped queries
  std::size_t query_count = 0;
  std::size_t scored_queries = 0;
  std::size_t skipped_queries = 0;     // queries with no relevant item
};

// AP = (1/R) * sum over relevant hits at rank r of (hits_so_far / r), where R
// counts all relevant items for the query (hits missing from a filtered list
// simply never accumulate).
double average_precision(const QueryRanking& ranking, const RelevanceJudgment& judgment);

// 1 if any relevant item appears in the top K after junk removal.
int rank_at_k(const QueryRanking& ranking, const RelevanceJudgment& judgment, int k);

EvalReport evaluate(const RankingResult& rankings,
                    const std::vector<RelevanceJudgment>& judgments,
                    const std::vector<int>& k_values);

struct JudgmentOptions {
  // Same identity seen from the query's own camera counted as junk.
  bool cross_camera_junk = false;
  // Keep only the top N gallery entries per query (0 = full list).
  std::size_t truncate_at = 0;
};

// Builds judgments from metadata: same global class is relevant, the
// identical image (same source and image_id) is junk.
std::vector<RelevanceJudgment> judgments_from_meta(const std::vector<MetaRecord>& query_meta,
                                                   const std::vector<MetaRecord>& gallery_meta,
                                                   const JudgmentOptions& options = {});

// Applies JudgmentOptions.truncate_at to a ranking (identity when 0).
RankingResult truncate_ranking(const RankingResult& ranking, std::size_t top_n);

}  // namespace vreid

#endif  // VREID_EVAL_HPP
