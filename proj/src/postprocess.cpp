#include "vreid/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "vreid/errors.hpp"

namespace vreid {

namespace {

double cosine_distance(const EmbeddingStore& store, std::size_t a, std::size_t b) {
  auto ra = store.row(a);
  auto rb = store.row(b);
  double dot = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i)
    dot += static_cast<double>(ra[i]) * static_cast<double>(rb[i]);
  return 1.0 - dot;
}

std::vector<std::size_t> eps_neighbors(const EmbeddingStore& store, std::size_t p, double eps) {
  std::vector<std::size_t> out;
  for (std::size_t q = 0; q < store.count; ++q)
    if (cosine_distance(store, p, q) <= eps) out.push_back(q);
  return out;
}

}  // namespace

ClusterAssignment dbscan(const EmbeddingStore& store, const DbscanConfig& cfg) {
  if (store.count == 0) throw DataError("dbscan: empty store");
  if (!store.normalized) throw DataError("dbscan: store must be normalized");
  if (cfg.eps <= 0.0) throw ConfigError("dbscan: eps must be positive");
  if (cfg.min_pts < 1) throw ConfigError("dbscan: min_pts must be >= 1");

  constexpr int kUnvisited = -2;
  ClusterAssignment out;
  out.labels.assign(store.count, kUnvisited);

  int next_cluster = 0;
  for (std::size_t p = 0; p < store.count; ++p) {
    if (out.labels[p] != kUnvisited) continue;
    std::vector<std::size_t> neighbors = eps_neighbors(store, p, cfg.eps);
    if (neighbors.size() < static_cast<std::size_t>(cfg.min_pts)) {
      out.labels[p] = -1;
      continue;
    }
    const int cluster = next_cluster++;
    out.labels[p] = cluster;
    std::deque<std::size_t> seeds(neighbors.begin(), neighbors.end());
    while (!seeds.empty()) {
      std::size_t q = seeds.front();
      seeds.pop_front();
      if (out.labels[q] == -1) out.labels[q] = cluster;  // border point
      if (out.labels[q] != kUnvisited) continue;
      out.labels[q] = cluster;
      std::vector<std::size_t> qn = eps_neighbors(store, q, cfg.eps);
      if (qn.size() >= static_cast<std::size_t>(cfg.min_pts))
        seeds.insert(seeds.end(), qn.begin(), qn.end());
    }
  }
  out.cluster_count = next_cluster;
  return out;
}

EmbeddingStore query_expansion(const EmbeddingStore& queries, const ClusterAssignment& clusters,
                               bool include_self) {
  if (clusters.labels.size() != queries.count)
    throw DataError("query_expansion: cluster assignment covers " +
                    std::to_string(clusters.labels.size()) + " samples, store has " +
                    std::to_string(queries.count));

  std::vector<std::vector<std::size_t>> members(
      static_cast<std::size_t>(std::max(clusters.cluster_count, 0)));
  for (std::size_t i = 0; i < queries.count; ++i)
    if (clusters.labels[i] >= 0) members[static_cast<std::size_t>(clusters.labels[i])].push_back(i);

  // All means are taken over the original features so update order is moot.
  EmbeddingStore out = queries;
  for (const auto& cluster : members) {
    if (cluster.size() < 2) continue;
    for (std::size_t self : cluster) {
      std::vector<double> mean(queries.dim, 0.0);
      std::size_t used = 0;
      for (std::size_t other : cluster) {
        if (!include_self && other == self) continue;
        auto r = queries.row(other);
        for (std::size_t d = 0; d < queries.dim; ++d) mean[d] += r[d];
        ++used;
      }
      std::vector<float> avg(queries.dim);
      for (std::size_t d = 0; d < queries.dim; ++d)
        avg[d] = static_cast<float>(mean[d] / static_cast<double>(used));
      std::vector<float> unit = l2_normalize(avg);
      std::copy(unit.begin(), unit.end(), out.row(self).begin());
    }
  }
  return out;
}

namespace {

template <typename Keep>
RankingResult filter_ranking(const RankingResult& ranking, const std::string& step, Keep keep) {
  RankingResult out;
  out.steps = ranking.steps;
  out.steps.push_back(step);
  out.queries.resize(ranking.queries.size());
  for (std::size_t q = 0; q < ranking.queries.size(); ++q) {
    const QueryRanking& in = ranking.queries[q];
    QueryRanking& o = out.queries[q];
    for (std::size_t i = 0; i < in.indices.size(); ++i) {
      if (!keep(q, in.indices[i])) continue;
      o.indices.push_back(in.indices[i]);
      o.scores.push_back(in.scores[i]);
    }
  }
  return out;
}

}  // namespace

RankingResult camera_verification(const RankingResult& ranking,
                                  const std::vector<std::optional<int>>& query_cams,
                                  const std::vector<std::optional<int>>& gallery_cams,
                                  FilterReport* report) {
  if (query_cams.size() != ranking.queries.size())
    throw DataError("camera_verification: query camera list mismatch");
  FilterReport local;
  RankingResult out =
      filter_ranking(ranking, "camera_verification", [&](std::size_t q, std::size_t g) {
        if (!query_cams[q]) return true;
        if (g >= gallery_cams.size()) throw DataError("camera_verification: gallery index out of range");
        if (!gallery_cams[g]) {
          ++local.missing_gallery_entries;
          return true;
        }
        return *gallery_cams[g] != *query_cams[q];
      });
  for (std::size_t q = 0; q < query_cams.size(); ++q)
    if (!query_cams[q]) ++local.skipped_queries;
  if (report) *report = local;
  return out;
}

RankingResult temporal_filter(const RankingResult& ranking,
                              const std::vector<std::optional<std::int64_t>>& query_ts,
                              const std::vector<std::optional<std::int64_t>>& gallery_ts,
                              double tau, FilterReport* report) {
  if (tau < 0.0) throw ConfigError("temporal_filter: tau must be >= 0");
  if (query_ts.size() != ranking.queries.size())
    throw DataError("temporal_filter: query timestamp list mismatch");
  if (std::isinf(tau)) {
    if (report) *report = FilterReport{};
    return ranking;  // sentinel: no window
  }
  FilterReport local;
  RankingResult out = filter_ranking(ranking, "temporal_filter", [&](std::size_t q, std::size_t g) {
    if (!query_ts[q]) return true;
    if (g >= gallery_ts.size()) throw DataError("temporal_filter: gallery index out of range");
    if (!gallery_ts[g]) {
      ++local.missing_gallery_entries;
      return true;
    }
    double dt = std::abs(static_cast<double>(*gallery_ts[g] - *query_ts[q]));
    return dt <= tau;
  });
  for (std::size_t q = 0; q < query_ts.size(); ++q)
    if (!query_ts[q]) ++local.skipped_queries;
  if (report) *report = local;
  return out;
}

void RerankConfig::validate(std::size_t gallery_size) const {
  if (k1 < 1 || k2 < 1) throw ConfigError("rerank: k1 and k2 must be >= 1");
  if (k2 > k1) throw ConfigError("rerank: k2 must not exceed k1");
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("rerank: lambda must be in [0, 1]");
  if (static_cast<std::size_t>(k1) >= gallery_size)
    throw ConfigError("rerank: k1 (" + std::to_string(k1) + ") must be smaller than the gallery (" +
                      std::to_string(gallery_size) + ")");
}

std::vector<std::vector<double>> k_reciprocal_final_distances(const EmbeddingStore& queries,
                                                              const EmbeddingStore& gallery,
                                                              const RerankConfig& cfg) {
  if (!queries.normalized || !gallery.normalized)
    throw DataError("rerank: stores must be normalized");
  if (queries.dim != gallery.dim) throw DataError("rerank: dimension mismatch");
  cfg.validate(gallery.count);

  const std::size_t nq = queries.count;
  const std::size_t ng = gallery.count;
  const std::size_t all = nq + ng;
  auto row_of = [&](std::size_t i) {
    return i < nq ? queries.row(i) : gallery.row(i - nq);
  };

  // Squared Euclidean distance on the unit-normalized rows, each row scaled
  // by its max.
  std::vector<std::vector<double>> dist(all, std::vector<double>(all, 0.0));
  for (std::size_t i = 0; i < all; ++i) {
    auto ri = row_of(i);
    for (std::size_t j = i + 1; j < all; ++j) {
      auto rj = row_of(j);
      double d2 = 0.0;
      for (std::size_t d = 0; d < ri.size(); ++d) {
        double diff = static_cast<double>(ri[d]) - static_cast<double>(rj[d]);
        d2 += diff * diff;
      }
      dist[i][j] = d2;
      dist[j][i] = d2;
    }
  }
  for (std::size_t i = 0; i < all; ++i) {
    double mx = *std::max_element(dist[i].begin(), dist[i].end());
    if (mx > 0.0)
      for (double& v : dist[i]) v /= mx;
  }

  // Ascending-distance neighbor lists, ties broken by index.
  std::vector<std::vector<std::size_t>> initial_rank(all);
  for (std::size_t i = 0; i < all; ++i) {
    std::vector<std::size_t>& order = initial_rank[i];
    order.resize(all);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (dist[i][a] != dist[i][b]) return dist[i][a] < dist[i][b];
      return a < b;
    });
  }

  auto k_reciprocal = [&](std::size_t i, std::size_t k) {
    std::vector<std::size_t> out;
    std::size_t take = std::min<std::size_t>(k + 1, all);
    for (std::size_t fi = 0; fi < take; ++fi) {
      std::size_t cand = initial_rank[i][fi];
      for (std::size_t bi = 0; bi < take; ++bi)
        if (initial_rank[cand][bi] == i) {
          out.push_back(cand);
          break;
        }
    }
    return out;
  };

  const std::size_t k1 = static_cast<std::size_t>(cfg.k1);
  // Half-neighborhood size rounds half to even, matching the published
  // procedure (k1 = 5 -> 2, k1 = 6 -> 3).
  const std::size_t half_k1 = [&] {
    std::size_t m = static_cast<std::size_t>(cfg.k1) / 2;
    if (cfg.k1 % 2 == 1 && m % 2 == 1) ++m;
    return m;
  }();

  std::vector<std::vector<double>> V(all, std::vector<double>(all, 0.0));
  for (std::size_t i = 0; i < all; ++i) {
    std::vector<std::size_t> reciprocal = k_reciprocal(i, k1);
    std::vector<std::size_t> expansion = reciprocal;
    for (std::size_t cand : reciprocal) {
      std::vector<std::size_t> cand_reciprocal = k_reciprocal(cand, half_k1);
      std::size_t overlap = 0;
      for (std::size_t c : cand_reciprocal)
        if (std::find(reciprocal.begin(), reciprocal.end(), c) != reciprocal.end()) ++overlap;
      if (3 * overlap > 2 * cand_reciprocal.size())
        expansion.insert(expansion.end(), cand_reciprocal.begin(), cand_reciprocal.end());
    }
    std::sort(expansion.begin(), expansion.end());
    expansion.erase(std::unique(expansion.begin(), expansion.end()), expansion.end());

    double sum = 0.0;
    for (std::size_t j : expansion) sum += std::exp(-dist[i][j]);
    for (std::size_t j : expansion) V[i][j] = std::exp(-dist[i][j]) / sum;
  }

  // Local expansion: average the encoding over the k2 nearest neighbors.
  if (cfg.k2 > 1) {
    std::vector<std::vector<double>> Vqe(all, std::vector<double>(all, 0.0));
    for (std::size_t i = 0; i < all; ++i) {
      std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(cfg.k2), all);
      for (std::size_t t = 0; t < take; ++t) {
        std::size_t nb = initial_rank[i][t];
        for (std::size_t j = 0; j < all; ++j) Vqe[i][j] += V[nb][j];
      }
      for (std::size_t j = 0; j < all; ++j) Vqe[i][j] /= static_cast<double>(take);
    }
    V = std::move(Vqe);
  }

  std::vector<std::vector<std::size_t>> nonzero(all);
  for (std::size_t i = 0; i < all; ++i)
    for (std::size_t j = 0; j < all; ++j)
      if (V[j][i] != 0.0) nonzero[i].push_back(j);  // rows with weight on column i

  std::vector<std::vector<double>> final_dist(nq, std::vector<double>(ng, 0.0));
  for (std::size_t q = 0; q < nq; ++q) {
    std::vector<double> min_sum(all, 0.0);
    for (std::size_t col = 0; col < all; ++col) {
      double vq = V[q][col];
      if (vq == 0.0) continue;
      for (std::size_t r : nonzero[col]) min_sum[r] += std::min(vq, V[r][col]);
    }
    for (std::size_t g = 0; g < ng; ++g) {
      double jaccard = 1.0 - min_sum[nq + g] / (2.0 - min_sum[nq + g]);
      final_dist[q][g] = (1.0 - cfg.lambda) * jaccard + cfg.lambda * dist[q][nq + g];
    }
  }
  return final_dist;
}

RankingResult k_reciprocal_rerank(const EmbeddingStore& queries, const EmbeddingStore& gallery,
                                  const RerankConfig& cfg) {
  if (gallery.count == 1) {
    RankingResult out = rank_gallery(queries, gallery);
    out.steps = {"rerank"};
    return out;
  }
  std::vector<std::vector<double>> final_dist = k_reciprocal_final_distances(queries, gallery, cfg);
  RankingResult out;
  out.steps = {"rerank"};
  out.queries.resize(queries.count);
  for (std::size_t q = 0; q < queries.count; ++q) {
    std::vector<std::size_t> order(gallery.count);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (final_dist[q][a] != final_dist[q][b]) return final_dist[q][a] < final_dist[q][b];
      return a < b;
    });
    QueryRanking& qr = out.queries[q];
    qr.indices = std::move(order);
    qr.scores.resize(gallery.count);
    for (std::size_t i = 0; i < gallery.count; ++i)
      qr.scores[i] = -final_dist[q][qr.indices[i]];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

PipelineStep pipeline_step_from_name(const std::string& name) {
  if (name == "aggregate") return PipelineStep::kAggregate;
  if (name == "ensemble") return PipelineStep::kEnsemble;
  if (name == "query_expansion" || name == "qe") return PipelineStep::kQueryExpansion;
  if (name == "camera_verification" || name == "camver") return PipelineStep::kCameraVerification;
  if (name == "temporal_filter" || name == "temporal") return PipelineStep::kTemporalFilter;
  if (name == "rerank") return PipelineStep::kRerank;
  throw ConfigError("unknown pipeline step '" + name + "'");
}

std::string pipeline_step_name(PipelineStep step) {
  switch (step) {
    case PipelineStep::kAggregate: return "aggregate";
    case PipelineStep::kEnsemble: return "ensemble";
    case PipelineStep::kQueryExpansion: return "query_expansion";
    case PipelineStep::kCameraVerification: return "camera_verification";
    case PipelineStep::kTemporalFilter: return "temporal_filter";
    case PipelineStep::kRerank: return "rerank";
  }
  return "?";
}

MultiViewSet MultiViewSet::single_view(EmbeddingStore store) {
  MultiViewSet set;
  set.sample_count = store.count;
  set.owner.resize(store.count);
  std::iota(set.owner.begin(), set.owner.end(), 0);
  set.rows = std::move(store);
  return set;
}

namespace {

// First view of every sample; the cheap default when no aggregation is asked for.
EmbeddingStore first_view_store(const MultiViewSet& set) {
  EmbeddingStore out;
  out.dim = set.rows.dim;
  out.count = set.sample_count;
  out.data.resize(out.count * out.dim);
  std::vector<bool> seen(set.sample_count, false);
  for (std::size_t r = 0; r < set.rows.count; ++r) {
    std::size_t s = set.owner[r];
    if (s >= set.sample_count) throw DataError("pipeline: view owner out of range");
    if (seen[s]) continue;
    seen[s] = true;
    auto src = set.rows.row(r);
    std::copy(src.begin(), src.end(), out.row(s).begin());
  }
  for (std::size_t s = 0; s < set.sample_count; ++s)
    if (!seen[s]) throw DataError("pipeline: sample " + std::to_string(s) + " has no views");
  normalize_store(out);
  return out;
}

EmbeddingStore aggregate_store(const MultiViewSet& set) {
  std::vector<std::vector<std::vector<float>>> views(set.sample_count);
  for (std::size_t r = 0; r < set.rows.count; ++r) {
    auto row = set.rows.row(r);
    views[set.owner[r]].emplace_back(row.begin(), row.end());
  }
  EmbeddingStore out;
  out.dim = set.rows.dim;
  out.count = set.sample_count;
  out.data.resize(out.count * out.dim);
  for (std::size_t s = 0; s < set.sample_count; ++s) {
    if (views[s].empty()) throw DataError("pipeline: sample " + std::to_string(s) + " has no views");
    std::vector<float> agg = aggregate_views(views[s]);
    std::copy(agg.begin(), agg.end(), out.row(s).begin());
  }
  out.normalized = true;
  return out;
}

// Ranking uses the first model's store until an ensemble step collapses all
// models into one, mirroring how an ablation table adds one technique at a
// time on top of a single-model baseline.
struct PipelineState {
  std::vector<EmbeddingStore> query_models;
  std::vector<EmbeddingStore> gallery_models;
  RankingResult ranking;
  bool ranked = false;

  EmbeddingStore& single_query_store(const char* step) {
    if (query_models.size() != 1)
      throw ConfigError(std::string(step) + " requires a single model; apply ensemble first");
    return query_models.front();
  }
};

// Re-sorts each query's surviving candidates by cosine against the current
// stores (full rank_gallery on first use).
void rescore_candidates(PipelineState& state, const std::string& step) {
  const EmbeddingStore& qs = state.query_models.front();
  const EmbeddingStore& gs = state.gallery_models.front();
  if (!state.ranked) {
    state.ranking = rank_gallery(qs, gs);
    state.ranked = true;
    if (!step.empty()) state.ranking.steps.push_back(step);
    return;
  }
  for (std::size_t q = 0; q < state.ranking.queries.size(); ++q) {
    QueryRanking& qr = state.ranking.queries[q];
    std::vector<double> scores(qr.indices.size());
    for (std::size_t i = 0; i < qr.indices.size(); ++i)
      scores[i] = cosine_similarity(qs.row(q), gs.row(qr.indices[i]));
    std::vector<std::size_t> order(qr.indices.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return qr.indices[a] < qr.indices[b];
    });
    QueryRanking next;
    for (std::size_t i : order) {
      next.indices.push_back(qr.indices[i]);
      next.scores.push_back(scores[i]);
    }
    qr = std::move(next);
  }
  if (!step.empty()) state.ranking.steps.push_back(step);
}

StepReport report_for(const PipelineState& state, const PipelineInput& input,
                      const std::string& name, std::size_t warnings) {
  StepReport r;
  r.name = name;
  r.warnings = warnings;
  std::size_t total = 0;
  for (const auto& q : state.ranking.queries) {
    total += q.indices.size();
    if (q.indices.empty()) ++r.empty_candidate_queries;
  }
  r.mean_candidates = state.ranking.queries.empty()
                          ? 0.0
                          : static_cast<double>(total) /
                                static_cast<double>(state.ranking.queries.size());
  if (input.judgments) {
    EvalReport e = evaluate(state.ranking, *input.judgments, {});
    r.map = e.map;
  }
  return r;
}

}  // namespace

PipelineResult run_pipeline(const PipelineInput& input, const std::vector<PipelineStep>& steps,
                            const PipelineConfig& cfg) {
  if (input.query_models.empty() || input.gallery_models.empty())
    throw ConfigError("pipeline: need at least one query and gallery model");
  if (input.query_models.size() != input.gallery_models.size())
    throw ConfigError("pipeline: query/gallery model counts differ");

  PipelineState state;
  for (const auto& m : input.query_models) state.query_models.push_back(first_view_store(m));
  for (const auto& m : input.gallery_models) state.gallery_models.push_back(first_view_store(m));

  PipelineResult result;
  auto emit_report = [&](const std::string& name, std::size_t warnings) {
    result.reports.push_back(report_for(state, input, name, warnings));
  };

  rescore_candidates(state, "");
  emit_report("base", 0);

  for (PipelineStep step : steps) {
    switch (step) {
      case PipelineStep::kAggregate: {
        for (std::size_t m = 0; m < state.query_models.size(); ++m)
          state.query_models[m] = aggregate_store(input.query_models[m]);
        for (std::size_t m = 0; m < state.gallery_models.size(); ++m)
          state.gallery_models[m] = aggregate_store(input.gallery_models[m]);
        rescore_candidates(state, "aggregate");
        emit_report("aggregate", 0);
        break;
      }
      case PipelineStep::kEnsemble: {
        EmbeddingStore q = ensemble_stores(state.query_models);
        EmbeddingStore g = ensemble_stores(state.gallery_models);
        normalize_store(q);
        normalize_store(g);
        state.query_models = {std::move(q)};
        state.gallery_models = {std::move(g)};
        rescore_candidates(state, "ensemble");
        emit_report("ensemble", 0);
        break;
      }
      case PipelineStep::kQueryExpansion: {
        EmbeddingStore& qs = state.single_query_store("query_expansion");
        ClusterAssignment clusters = dbscan(qs, cfg.dbscan);
        qs = query_expansion(qs, clusters, cfg.qe_include_self);
        rescore_candidates(state, "query_expansion");
        emit_report("query_expansion", 0);
        break;
      }
      case PipelineStep::kCameraVerification: {
        FilterReport fr;
        state.ranking =
            camera_verification(state.ranking, input.query_cams, input.gallery_cams, &fr);
        emit_report("camera_verification", fr.skipped_queries + fr.missing_gallery_entries);
        break;
      }
      case PipelineStep::kTemporalFilter: {
        FilterReport fr;
        state.ranking =
            temporal_filter(state.ranking, input.query_ts, input.gallery_ts, cfg.tau, &fr);
        emit_report("temporal_filter", fr.skipped_queries + fr.missing_gallery_entries);
        break;
      }
      case PipelineStep::kRerank: {
        const EmbeddingStore& qs = state.single_query_store("rerank");
        const EmbeddingStore& gs = state.gallery_models.front();
        if (gs.count == 1) {
          state.ranking.steps.push_back("rerank");
          emit_report("rerank", 0);
          break;
        }
        std::vector<std::vector<double>> final_dist =
            k_reciprocal_final_distances(qs, gs, cfg.rerank);
        for (std::size_t q = 0; q < state.ranking.queries.size(); ++q) {
          QueryRanking& qr = state.ranking.queries[q];
          std::vector<std::size_t> order(qr.indices.size());
          std::iota(order.begin(), order.end(), 0);
          std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            double da = final_dist[q][qr.indices[a]];
            double db = final_dist[q][qr.indices[b]];
            if (da != db) return da < db;
            return qr.indices[a] < qr.indices[b];
          });
          QueryRanking next;
          for (std::size_t i : order) {
            next.indices.push_back(qr.indices[i]);
            next.scores.push_back(-final_dist[q][qr.indices[i]]);
          }
          qr = std::move(next);
        }
        state.ranking.steps.push_back("rerank");
        emit_report("rerank", 0);
        break;
      }
    }
  }

  result.ranking = state.ranking;
  return result;
}

}  // namespace vreid
