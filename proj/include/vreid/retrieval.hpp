#ifndef VREID_RETRIEVAL_HPP
#define VREID_RETRIEVAL_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vreid/manifest.hpp"

namespace vreid {

// Row-major single-precision embeddings with aligned metadata.
struct EmbeddingStore {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<float> data;
  bool normalized = false;
  std::vector<MetaRecord> meta;  // empty or aligned with rows

  std::span<const float> row(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }
  std::span<float> row(std::size_t i) {
    return {data.data() + i * dim, dim};
  }
};

std::vector<float> l2_normalize(std::span<const float> v);
void normalize_store(EmbeddingStore& store);

// Cosine similarity with double accumulation; inputs need not be unit norm.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

struct QueryRanking {
  std::vector<std::size_t> indices;  // gallery rows, best first
  std::vector<double> scores;        // non-increasing
};

struct RankingResult {
  std::vector<QueryRanking> queries;
  std::vector<std::string> steps;  // provenance of applied post-processing
};

// Full descending sort per query; ties broken by ascending gallery index.
RankingResult rank_gallery(const EmbeddingStore& queries, const EmbeddingStore& gallery);

// Mean of the views, L2-normalized. Used for multi-crop / flipped variants.
std::vector<float> aggregate_views(const std::vector<std::vector<float>>& views);

// Per-model L2 normalization followed by concatenation; output norm sqrt(n).
std::vector<float> ensemble_concat(const std::vector<std::vector<float>>& parts);

// Row-wise ensemble of aligned stores.
EmbeddingStore ensemble_stores(const std::vector<EmbeddingStore>& stores);

// Embedding file: magic "RFEB", version, count, dim, flags bit0=normalized,
// then little-endian 32-bit floats row-major.
void save_embeddings(const EmbeddingStore& store, const std::string& path);
EmbeddingStore load_embeddings(const std::string& path);

void save_ranking_jsonl(const RankingResult& ranking, const std::string& path);
RankingResult load_ranking_jsonl(const std::string& path);

}  // namespace vreid

#endif  // VREID_RETRIEVAL_HPP
