#include "vreid/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "vreid/errors.hpp"
#include "vreid/io.hpp"

namespace vreid {

using nlohmann::json;

std::vector<float> l2_normalize(std::span<const float> v) {
  if (v.empty()) throw DataError("l2_normalize: empty vector");
  double sq = 0.0;
  for (float x : v) {
    if (!std::isfinite(x)) throw NumericError("l2_normalize: non-finite component");
    sq += static_cast<double>(x) * static_cast<double>(x);
  }
  if (sq == 0.0) throw NumericError("l2_normalize: zero vector has no direction");
  double inv = 1.0 / std::sqrt(sq);
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = static_cast<float>(static_cast<double>(v[i]) * inv);
  return out;
}

void normalize_store(EmbeddingStore& store) {
  for (std::size_t i = 0; i < store.count; ++i) {
    auto r = store.row(i);
    std::vector<float> n = l2_normalize(r);
    std::copy(n.begin(), n.end(), r.begin());
  }
  store.normalized = true;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw DataError("cosine_similarity: dimension mismatch " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
    nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
  }
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine_similarity: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

RankingResult rank_gallery(const EmbeddingStore& queries, const EmbeddingStore& gallery) {
  if (gallery.count == 0) throw DataError("rank_gallery: empty gallery");
  if (queries.dim != gallery.dim) throw DataError("rank_gallery: dimension mismatch");

  RankingResult result;
  result.steps.push_back("base");
  result.queries.resize(queries.count);
  for (std::size_t q = 0; q < queries.count; ++q) {
    auto qv = queries.row(q);
    std::vector<double> scores(gallery.count);
    for (std::size_t g = 0; g < gallery.count; ++g)
      scores[g] = cosine_similarity(qv, gallery.row(g));
    std::vector<std::size_t> order(gallery.count);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return a < b;
    });
    QueryRanking& qr = result.queries[q];
    qr.indices = std::move(order);
    qr.scores.resize(gallery.count);
    for (std::size_t i = 0; i < gallery.count; ++i) qr.scores[i] = scores[qr.indices[i]];
  }
  return result;
}

std::vector<float> aggregate_views(const std::vector<std::vector<float>>& views) {
  if (views.empty()) throw DataError("aggregate_views: no views");
  const std::size_t dim = views.front().size();
  std::vector<double> mean(dim, 0.0);
  for (const auto& v : views) {
    if (v.size() != dim) throw DataError("aggregate_views: dimension mismatch between views");
    for (std::size_t i = 0; i < dim; ++i) mean[i] += v[i];
  }
  std::vector<float> avg(dim);
  for (std::size_t i = 0; i < dim; ++i)
    avg[i] = static_cast<float>(mean[i] / static_cast<double>(views.size()));
  return l2_normalize(avg);  // throws NumericError if the mean collapsed to zero
}

std::vector<float> ensemble_concat(const std::vector<std::vector<float>>& parts) {
  if (parts.empty()) throw DataError("ensemble_concat: no parts");
  std::vector<float> out;
  for (const auto& p : parts) {
    std::vector<float> n = l2_normalize(p);
    out.insert(out.end(), n.begin(), n.end());
  }
  return out;
}

EmbeddingStore ensemble_stores(const std::vector<EmbeddingStore>& stores) {
  if (stores.empty()) throw DataError("ensemble_stores: no stores");
  const std::size_t n = stores.front().count;
  std::size_t total_dim = 0;
  for (const auto& s : stores) {
    if (s.count != n) throw DataError("ensemble_stores: row count mismatch");
    total_dim += s.dim;
  }
  EmbeddingStore out;
  out.count = n;
  out.dim = total_dim;
  out.data.resize(n * total_dim);
  out.meta = stores.front().meta;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::vector<float>> parts;
    parts.reserve(stores.size());
    for (const auto& s : stores) {
      auto r = s.row(i);
      parts.emplace_back(r.begin(), r.end());
    }
    std::vector<float> cat = ensemble_concat(parts);
    std::copy(cat.begin(), cat.end(), out.row(i).begin());
  }
  out.normalized = false;  // row norm is sqrt(n models), not 1
  return out;
}

namespace {
constexpr char kEmbeddingMagic[4] = {'R', 'F', 'E', 'B'};
constexpr std::uint32_t kEmbeddingVersion = 1;
}  // namespace

void save_embeddings(const EmbeddingStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write embeddings '" + path + "'");
  io::write_magic(out, kEmbeddingMagic);
  io::write_u32(out, kEmbeddingVersion);
  io::write_u64(out, store.count);
  io::write_u32(out, static_cast<std::uint32_t>(store.dim));
  io::write_u32(out, store.normalized ? 1u : 0u);
  for (float v : store.data) io::write_f32(out, v);
  if (!out) throw DataError("write failed for embeddings '" + path + "'");
}

EmbeddingStore load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embeddings '" + path + "'");
  io::expect_magic(in, kEmbeddingMagic, path);
  std::uint32_t version = io::read_u32(in, path);
  if (version != kEmbeddingVersion)
    throw DataError("embeddings '" + path + "': unsupported version " + std::to_string(version));
  EmbeddingStore store;
  store.count = io::read_u64(in, path);
  store.dim = io::read_u32(in, path);
  store.normalized = (io::read_u32(in, path) & 1u) != 0;
  store.data.resize(store.count * store.dim);
  for (float& v : store.data) v = io::read_f32(in, path);
  return store;
}

void save_ranking_jsonl(const RankingResult& ranking, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write ranking '" + path + "'");
  for (std::size_t q = 0; q < ranking.queries.size(); ++q) {
    const auto& qr = ranking.queries[q];
    json j;
    j["query"] = q;
    j["indices"] = qr.indices;
    j["scores"] = qr.scores;
    j["steps"] = ranking.steps;
    out << j.dump() << "\n";
  }
}

RankingResult load_ranking_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ranking '" + path + "'");
  RankingResult result;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    QueryRanking qr;
    qr.indices = j.at("indices").get<std::vector<std::size_t>>();
    qr.scores = j.at("scores").get<std::vector<double>>();
    if (result.queries.empty() && j.contains("steps"))
      result.steps = j["steps"].get<std::vector<std::string>>();
    result.queries.push_back(std::move(qr));
  }
  return result;
}

}  // namespace vreid
