#include "vreid/eval.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

#include "vreid/errors.hpp"

namespace vreid {

double average_precision(const QueryRanking& ranking, const RelevanceJudgment& judgment) {
  std::unordered_set<std::size_t> seen;
  seen.reserve(ranking.indices.size());
  for (std::size_t idx : ranking.indices)
    if (!seen.insert(idx).second)
      throw DataError("average_precision: duplicate gallery index " + std::to_string(idx));

  std::size_t relevant_total = 0;
  for (std::size_t r : judgment.relevant)
    if (!judgment.junk.count(r)) ++relevant_total;
  if (relevant_total == 0) return std::numeric_limits<double>::quiet_NaN();

  double ap = 0.0;
  std::size_t rank = 0;
  std::size_t hits = 0;
  for (std::size_t idx : ranking.indices) {
    if (judgment.junk.count(idx)) continue;  // junk does not occupy a rank
    ++rank;
    if (judgment.relevant.count(idx)) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(rank);
    }
  }
  return ap / static_cast<double>(relevant_total);
}

int rank_at_k(const QueryRanking& ranking, const RelevanceJudgment& judgment, int k) {
  if (k < 1) throw ConfigError("rank_at_k: K must be >= 1");
  std::size_t rank = 0;
  for (std::size_t idx : ranking.indices) {
    if (judgment.junk.count(idx)) continue;
    ++rank;
    if (rank > static_cast<std::size_t>(k)) break;
    if (judgment.relevant.count(idx) && !judgment.junk.count(idx)) return 1;
  }
  return 0;
}

EvalReport evaluate(const RankingResult& rankings,
                    const std::vector<RelevanceJudgment>& judgments,
                    const std::vector<int>& k_values) {
  if (rankings.queries.size() != judgments.size())
    throw DataError("evaluate: " + std::to_string(rankings.queries.size()) + " rankings vs " +
                    std::to_string(judgments.size()) + " judgments");

  EvalReport report;
  report.k_values = k_values;
  report.rank_at_k.assign(k_values.size(), 0.0);
  report.query_count = rankings.queries.size();
  report.per_query_ap.reserve(report.query_count);

  double ap_sum = 0.0;
  for (std::size_t q = 0; q < rankings.queries.size(); ++q) {
    double ap = average_precision(rankings.queries[q], judgments[q]);
    report.per_query_ap.push_back(ap);
    if (std::isnan(ap)) {
      ++report.skipped_queries;
      continue;
    }
    ++report.scored_queries;
    ap_sum += ap;
    for (std::size_t ki = 0; ki < k_values.size(); ++ki)
      report.rank_at_k[ki] += rank_at_k(rankings.queries[q], judgments[q], k_values[ki]);
  }
  if (report.scored_queries > 0) {
    report.map = ap_sum / static_cast<double>(report.scored_queries);
    for (double& v : report.rank_at_k) v /= static_cast<double>(report.scored_queries);
  }
  return report;
}

std::vector<RelevanceJudgment> judgments_from_meta(const std::vector<MetaRecord>& query_meta,
                                                   const std::vector<MetaRecord>& gallery_meta,
                                                   const JudgmentOptions& options) {
  std::vector<RelevanceJudgment> out(query_meta.size());
  for (std::size_t q = 0; q < query_meta.size(); ++q) {
    const MetaRecord& qm = query_meta[q];
    RelevanceJudgment& j = out[q];
    for (std::size_t g = 0; g < gallery_meta.size(); ++g) {
      const MetaRecord& gm = gallery_meta[g];
      if (gm.global_class != qm.global_class) continue;
      if (gm.source_id == qm.source_id && gm.image_id == qm.image_id) {
        j.junk.insert(g);  // the query itself sitting in the gallery
        continue;
      }
      if (options.cross_camera_junk && qm.camera_id && gm.camera_id &&
          *qm.camera_id == *gm.camera_id) {
        j.junk.insert(g);
        continue;
      }
      j.relevant.insert(g);
    }
  }
  return out;
}

RankingResult truncate_ranking(const RankingResult& ranking, std::size_t top_n) {
  if (top_n == 0) return ranking;
  RankingResult out;
  out.steps = ranking.steps;
  out.queries.reserve(ranking.queries.size());
  for (const auto& qr : ranking.queries) {
    QueryRanking t;
    std::size_t n = std::min(top_n, qr.indices.size());
    t.indices.assign(qr.indices.begin(), qr.indices.begin() + n);
    t.scores.assign(qr.scores.begin(), qr.scores.begin() + n);
    out.queries.push_back(std::move(t));
  }
  return out;
}

}  // namespace vreid
