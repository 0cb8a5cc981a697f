#ifndef VREID_SYNTHGEN_HPP
#define VREID_SYNTHGEN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "vreid/manifest.hpp"
#include "vreid/retrieval.hpp"

namespace vreid {

// Synthetic multi-source embedding datasets: per-identity centroids plus a
// per-source domain offset, per-camera viewpoint offsets and sample noise,
// all on the unit sphere. Scales are vector norms (expected norm for noise).
struct SynthConfig {
  int sources = 4;
  int identities_per_source = 16;
  int images_per_identity = 8;       // mean count; the long tail skews it
  double long_tail_exponent = 0.0;
  int feature_dim = 64;
  // Identity centroids live in the first identity_dim coordinates (0 = full
  // space); domain and camera offsets live in the complement when one exists.
  // Separating identities from nuisance directions is what makes knowledge
  // transfer across sources measurable.
  int identity_dim = 0;
  double identity_scale = 1.0;
  double domain_scale = 0.8;
  // Per-source rendering: identity coordinates are scaled by a log-uniform
  // gain in [1/spread, spread], redrawn per source. Signal only, noise
  // untouched, so which dimensions carry information differs per domain.
  double domain_gain_spread = 1.0;
  int camera_count = 4;
  double camera_scale = 0.3;
  double noise_sigma = 0.5;
  int views_per_sample = 1;          // extra views redraw the noise only
  std::int64_t time_window = 200;    // timestamp jitter within an identity
  std::uint64_t seed = 1;
  // Alternate embedding realization of the same manifest (a second "model"):
  // different salt, same seed => identical metadata, independent features.
  std::uint64_t model_salt = 0;
  // When set, local class c uses the same centroid direction in every source,
  // so the same identity can be observed across domains.
  bool shared_identities = false;

  void validate() const;
};

struct SynthSource {
  SourceManifest manifest;
  EmbeddingStore features;  // view 0, one row per manifest record, normalized
  std::vector<std::vector<std::vector<float>>> views;  // per sample, per view
  std::vector<MetaRecord> meta;  // global classes from this generation's space
};

struct SynthDataset {
  std::vector<SynthSource> sources;  // source ids 1..D
  MergedLabelSpace space;
};

SynthDataset generate(const SynthConfig& cfg);

// Power-law image counts: each >= 1, summing exactly to total_images. The
// seed shuffles which identity receives which count.
std::vector<int> long_tail_counts(int identities, int total_images, double exponent,
                                  std::uint64_t seed);

SynthConfig synth_config_from_json(const std::string& text);
std::string synth_config_to_json(const SynthConfig& cfg);

}  // namespace vreid

#endif  // VREID_SYNTHGEN_HPP
