#ifndef VREID_MANIFEST_HPP
#define VREID_MANIFEST_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace vreid {

enum class Split { kTrain, kQuery, kGallery };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

// One line of a per-source manifest file.
struct RawRecord {
  std::string image_id;
  int local_class = 0;
  std::optional<int> camera_id;
  std::optional<std::int64_t> timestamp;
  Split split = Split::kTrain;
};

// A single source dataset: 1-based source id plus its raw records.
struct SourceManifest {
  int source_id = 0;
  std::vector<RawRecord> samples;

  // Enforces unique image ids and non-negative local classes.
  void validate() const;
  std::set<int> distinct_classes(Split split) const;
};

SourceManifest load_manifest_jsonl(const std::string& path, int source_id);
void save_manifest_jsonl(const SourceManifest& m, const std::string& path);

// Mapping (source_id, local_class) -> contiguous global class id.
class MergedLabelSpace {
 public:
  int global_of(int source_id, int local_class) const;           // throws on unknown
  std::pair<int, int> source_local_of(int global_class) const;   // round trip
  bool contains(int source_id, int local_class) const;
  int total_classes() const { return static_cast<int>(reverse_.size()); }
  const std::vector<int>& sources() const { return source_ids_; }

  std::string to_json() const;  // versioned, "v1"
  static MergedLabelSpace from_json(const std::string& text);

  friend MergedLabelSpace merge_label_spaces(const std::vector<SourceManifest>& manifests);
  friend std::pair<MergedLabelSpace, std::vector<int>> remap_for_target(
      const MergedLabelSpace& space, int target_source);

 private:
  std::map<std::pair<int, int>, int> forward_;
  std::vector<std::pair<int, int>> reverse_;
  std::vector<int> source_ids_;
};

// Assigns global ids source by source (ascending source_id, then ascending
// local_class). Only records with split == train define the class set.
MergedLabelSpace merge_label_spaces(const std::vector<SourceManifest>& manifests);

// Restriction of a merged space to one source, re-contiguous from 0. The
// second element translates old global ids (-1 where a class was dropped).
std::pair<MergedLabelSpace, std::vector<int>> remap_for_target(
    const MergedLabelSpace& space, int target_source);

// A sample with resolved global label and (optionally) its feature vector.
struct SampleRecord {
  int global_index = 0;
  int source_id = 0;
  int global_class = -1;
  std::string image_id;
  std::optional<int> camera_id;
  std::optional<std::int64_t> timestamp;
  std::optional<std::vector<float>> feature;
};

// Train/validation carve-up of one source's train split. The validation
// gallery is the full original train split, so query images also appear in
// the gallery and evaluation must junk the self match.
struct SplitSpec {
  std::set<int> train_classes;
  std::vector<std::size_t> train_rows;       // row indices into the manifest
  std::vector<std::size_t> val_query_rows;
  std::vector<std::size_t> val_gallery_rows;
};

SplitSpec split_train_val(const SourceManifest& manifest, int val_class_count,
                          std::uint64_t seed);

// Sidecar metadata for embedding files, one JSON line per row.
struct MetaRecord {
  std::string image_id;
  int source_id = 0;
  int global_class = -1;
  std::optional<int> camera_id;
  std::optional<std::int64_t> timestamp;
};

std::vector<MetaRecord> load_meta_jsonl(const std::string& path);
void save_meta_jsonl(const std::vector<MetaRecord>& meta, const std::string& path);

}  // namespace vreid

#endif  // VREID_MANIFEST_HPP
