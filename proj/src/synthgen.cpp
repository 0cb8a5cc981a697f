#include "vreid/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "vreid/errors.hpp"
#include "vreid/rng.hpp"

namespace vreid {

using nlohmann::json;

void SynthConfig::validate() const {
  if (sources < 1) throw ConfigError("synth: sources must be >= 1");
  if (identities_per_source < 2) throw ConfigError("synth: need at least 2 identities per source");
  if (images_per_identity < 1) throw ConfigError("synth: images_per_identity must be >= 1");
  if (feature_dim < 2) throw ConfigError("synth: feature_dim must be >= 2");
  if (identity_dim < 0 || identity_dim > feature_dim)
    throw ConfigError("synth: identity_dim must be in [0, feature_dim]");
  if (domain_gain_spread < 1.0)
    throw ConfigError("synth: domain_gain_spread must be >= 1");
  if (camera_count < 1) throw ConfigError("synth: camera_count must be >= 1");
  if (views_per_sample < 1) throw ConfigError("synth: views_per_sample must be >= 1");
  if (identity_scale < 0 || domain_scale < 0 || camera_scale < 0 || noise_sigma < 0 ||
      long_tail_exponent < 0)
    throw ConfigError("synth: scales must be non-negative");
  if (time_window < 0) throw ConfigError("synth: time_window must be >= 0");
}

std::vector<int> long_tail_counts(int identities, int total_images, double exponent,
                                  std::uint64_t seed) {
  if (identities < 1) throw ConfigError("long_tail_counts: identities must be >= 1");
  if (total_images < identities)
    throw ConfigError("long_tail_counts: total_images must cover one image per identity");

  // One guaranteed image each; the remainder is split by rank weights
  // (r+1)^-exponent using largest-remainder rounding.
  std::vector<double> weights(identities);
  double weight_sum = 0.0;
  for (int r = 0; r < identities; ++r) {
    weights[r] = std::pow(static_cast<double>(r + 1), -exponent);
    weight_sum += weights[r];
  }
  int remaining = total_images - identities;
  std::vector<int> counts(identities, 1);
  std::vector<std::pair<double, int>> fractions;
  int assigned = 0;
  for (int r = 0; r < identities; ++r) {
    double ideal = remaining * weights[r] / weight_sum;
    int whole = static_cast<int>(std::floor(ideal));
    counts[r] += whole;
    assigned += whole;
    fractions.emplace_back(ideal - whole, r);
  }
  std::sort(fractions.begin(), fractions.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int i = 0; i < remaining - assigned; ++i) counts[fractions[i].second] += 1;

  Rng rng = Rng::stream(seed, {rngtag::kSynthCounts});
  for (std::size_t i = counts.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(counts[i - 1], counts[j]);
  }
  return counts;
}

namespace {

// Direction of given norm supported on coordinates [lo, hi); gaussian draw
// normalized then scaled.
std::vector<double> scaled_direction(Rng& rng, int dim, int lo, int hi, double scale) {
  std::vector<double> v(dim, 0.0);
  double norm = 0.0;
  for (int d = lo; d < hi; ++d) {
    v[d] = rng.next_gaussian();
    norm += v[d] * v[d];
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) norm = 1.0;
  for (int d = lo; d < hi; ++d) v[d] *= scale / norm;
  return v;
}

}  // namespace

SynthDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthDataset out;

  const int dim = cfg.feature_dim;
  const int id_dim =
      cfg.identity_dim > 0 ? std::min(cfg.identity_dim, cfg.feature_dim) : cfg.feature_dim;
  const int nuisance_lo = id_dim < dim ? id_dim : 0;  // complement, or full space
  const double noise_component = cfg.noise_sigma / std::sqrt(static_cast<double>(dim));

  std::vector<SourceManifest> manifests;
  for (int s = 1; s <= cfg.sources; ++s) {
    SynthSource source;
    source.manifest.source_id = s;

    Rng domain_rng = Rng::stream(cfg.seed, {rngtag::kSynthDomain, cfg.model_salt,
                                            static_cast<std::uint64_t>(s)});
    std::vector<double> domain =
        scaled_direction(domain_rng, dim, nuisance_lo, dim, cfg.domain_scale);

    std::vector<double> gains(static_cast<std::size_t>(id_dim), 1.0);
    if (cfg.domain_gain_spread > 1.0) {
      Rng gain_rng = Rng::stream(cfg.seed, {rngtag::kSynthDomain, cfg.model_salt,
                                            static_cast<std::uint64_t>(s), 0xd0a1ULL});
      const double log_spread = std::log(cfg.domain_gain_spread);
      for (double& g : gains) g = std::exp(gain_rng.next_uniform(-log_spread, log_spread));
    }

    std::vector<std::vector<double>> camera_offsets;
    for (int cam = 0; cam < cfg.camera_count; ++cam) {
      Rng cam_rng = Rng::stream(cfg.seed, {rngtag::kSynthCamera, cfg.model_salt,
                                           static_cast<std::uint64_t>(s),
                                           static_cast<std::uint64_t>(cam)});
      camera_offsets.push_back(scaled_direction(cam_rng, dim, nuisance_lo, dim, cfg.camera_scale));
    }

    std::vector<int> counts = long_tail_counts(
        cfg.identities_per_source, cfg.identities_per_source * cfg.images_per_identity,
        cfg.long_tail_exponent,
        splitmix64(cfg.seed ^ static_cast<std::uint64_t>(s) * 0x9e3779b97f4a7c15ULL));

    std::vector<float> rows;
    for (int id = 0; id < cfg.identities_per_source; ++id) {
      const std::uint64_t centroid_source =
          cfg.shared_identities ? 0 : static_cast<std::uint64_t>(s);
      Rng centroid_rng = Rng::stream(cfg.seed, {rngtag::kSynthCentroid, cfg.model_salt,
                                                centroid_source,
                                                static_cast<std::uint64_t>(id)});
      std::vector<double> centroid =
          scaled_direction(centroid_rng, dim, 0, id_dim, cfg.identity_scale);

      const std::int64_t identity_base =
          (static_cast<std::int64_t>(s - 1) * cfg.identities_per_source + id) * 1000;

      for (int k = 0; k < counts[static_cast<std::size_t>(id)]; ++k) {
        // Metadata stream carries no model salt: every realization of this
        // config shares cameras and timestamps.
        Rng meta_rng = Rng::stream(cfg.seed, {rngtag::kSynthSample, static_cast<std::uint64_t>(s),
                                              static_cast<std::uint64_t>(id),
                                              static_cast<std::uint64_t>(k)});
        int camera = static_cast<int>(meta_rng.next_below(cfg.camera_count));
        std::int64_t timestamp =
            identity_base +
            (cfg.time_window > 0
                 ? static_cast<std::int64_t>(meta_rng.next_below(
                       static_cast<std::uint64_t>(cfg.time_window) + 1))
                 : 0);

        Rng noise_rng = Rng::stream(cfg.seed, {rngtag::kSynthSample, cfg.model_salt + 0x5bd1e995,
                                               static_cast<std::uint64_t>(s),
                                               static_cast<std::uint64_t>(id),
                                               static_cast<std::uint64_t>(k)});
        std::vector<std::vector<float>> views;
        for (int v = 0; v < cfg.views_per_sample; ++v) {
          std::vector<double> feat(dim);
          double norm = 0.0;
          for (int d = 0; d < dim; ++d) {
            double signal = d < id_dim ? gains[static_cast<std::size_t>(d)] * centroid[d]
                                       : centroid[d];
            feat[d] = signal + domain[d] + camera_offsets[static_cast<std::size_t>(camera)][d] +
                      noise_component * noise_rng.next_gaussian();
            norm += feat[d] * feat[d];
          }
          norm = std::sqrt(norm);
          if (norm == 0.0) throw NumericError("synth: degenerate zero feature");
          std::vector<float> row(dim);
          for (int d = 0; d < dim; ++d) row[d] = static_cast<float>(feat[d] / norm);
          views.push_back(std::move(row));
        }

        RawRecord rec;
        rec.image_id = "s" + std::to_string(s) + "_c" + std::to_string(id) + "_" + std::to_string(k);
        rec.local_class = id;
        rec.camera_id = camera;
        rec.timestamp = timestamp;
        rec.split = Split::kTrain;
        source.manifest.samples.push_back(std::move(rec));

        rows.insert(rows.end(), views[0].begin(), views[0].end());
        source.views.push_back(std::move(views));
      }
    }

    source.features.count = source.manifest.samples.size();
    source.features.dim = static_cast<std::size_t>(dim);
    source.features.data = std::move(rows);
    source.features.normalized = true;
    manifests.push_back(source.manifest);
    out.sources.push_back(std::move(source));
  }

  out.space = merge_label_spaces(manifests);
  for (auto& source : out.sources) {
    for (const auto& rec : source.manifest.samples) {
      MetaRecord meta;
      meta.image_id = rec.image_id;
      meta.source_id = source.manifest.source_id;
      meta.global_class = out.space.global_of(source.manifest.source_id, rec.local_class);
      meta.camera_id = rec.camera_id;
      meta.timestamp = rec.timestamp;
      source.meta.push_back(std::move(meta));
    }
    source.features.meta = source.meta;
  }
  return out;
}

SynthConfig synth_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth config parse: ") + e.what());
  }
  SynthConfig cfg;
  cfg.sources = j.value("sources", cfg.sources);
  cfg.identities_per_source = j.value("identities_per_source", cfg.identities_per_source);
  cfg.images_per_identity = j.value("images_per_identity", cfg.images_per_identity);
  cfg.long_tail_exponent = j.value("long_tail_exponent", cfg.long_tail_exponent);
  cfg.feature_dim = j.value("feature_dim", cfg.feature_dim);
  cfg.identity_dim = j.value("identity_dim", cfg.identity_dim);
  cfg.domain_gain_spread = j.value("domain_gain_spread", cfg.domain_gain_spread);
  cfg.identity_scale = j.value("identity_scale", cfg.identity_scale);
  cfg.domain_scale = j.value("domain_scale", cfg.domain_scale);
  cfg.camera_count = j.value("camera_count", cfg.camera_count);
  cfg.camera_scale = j.value("camera_scale", cfg.camera_scale);
  cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
  cfg.views_per_sample = j.value("views_per_sample", cfg.views_per_sample);
  cfg.time_window = j.value("time_window", cfg.time_window);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.model_salt = j.value("model_salt", cfg.model_salt);
  cfg.shared_identities = j.value("shared_identities", cfg.shared_identities);
  cfg.validate();
  return cfg;
}

std::string synth_config_to_json(const SynthConfig& cfg) {
  json j;
  j["sources"] = cfg.sources;
  j["identities_per_source"] = cfg.identities_per_source;
  j["images_per_identity"] = cfg.images_per_identity;
  j["long_tail_exponent"] = cfg.long_tail_exponent;
  j["feature_dim"] = cfg.feature_dim;
  j["identity_dim"] = cfg.identity_dim;
  j["domain_gain_spread"] = cfg.domain_gain_spread;
  j["identity_scale"] = cfg.identity_scale;
  j["domain_scale"] = cfg.domain_scale;
  j["camera_count"] = cfg.camera_count;
  j["camera_scale"] = cfg.camera_scale;
  j["noise_sigma"] = cfg.noise_sigma;
  j["views_per_sample"] = cfg.views_per_sample;
  j["time_window"] = cfg.time_window;
  j["seed"] = cfg.seed;
  j["model_salt"] = cfg.model_salt;
  j["shared_identities"] = cfg.shared_identities;
  return j.dump(2);
}

}  // namespace vreid
