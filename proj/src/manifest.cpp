#include "vreid/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "vreid/errors.hpp"
#include "vreid/rng.hpp"

namespace vreid {

using nlohmann::json;

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kQuery: return "query";
    case Split::kGallery: return "gallery";
  }
  return "train";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "query") return Split::kQuery;
  if (name == "gallery") return Split::kGallery;
  throw DataError("unknown split tag '" + name + "'");
}

void SourceManifest::validate() const {
  std::unordered_set<std::string> seen;
  seen.reserve(samples.size());
  for (const auto& r : samples) {
    if (r.local_class < 0)
      throw DataError("source " + std::to_string(source_id) + ": negative local_class for image '" +
                      r.image_id + "'");
    if (!seen.insert(r.image_id).second)
      throw DataError("source " + std::to_string(source_id) + ": duplicate image_id '" +
                      r.image_id + "'");
  }
}

std::set<int> SourceManifest::distinct_classes(Split split) const {
  std::set<int> out;
  for (const auto& r : samples)
    if (r.split == split) out.insert(r.local_class);
  return out;
}

SourceManifest load_manifest_jsonl(const std::string& path, int source_id) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  SourceManifest m;
  m.source_id = source_id;
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
    RawRecord r;
    try {
      r.image_id = j.at("image_id").get<std::string>();
      r.local_class = j.at("local_class").get<int>();
      if (j.contains("camera_id") && !j["camera_id"].is_null())
        r.camera_id = j["camera_id"].get<int>();
      if (j.contains("timestamp") && !j["timestamp"].is_null())
        r.timestamp = j["timestamp"].get<std::int64_t>();
      r.split = split_from_name(j.at("split").get<std::string>());
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    m.samples.push_back(std::move(r));
  }
  m.validate();
  return m;
}

void save_manifest_jsonl(const SourceManifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest '" + path + "'");
  for (const auto& r : m.samples) {
    json j;
    j["image_id"] = r.image_id;
    j["local_class"] = r.local_class;
    j["camera_id"] = r.camera_id ? json(*r.camera_id) : json(nullptr);
    j["timestamp"] = r.timestamp ? json(*r.timestamp) : json(nullptr);
    j["split"] = split_name(r.split);
    out << j.dump() << "\n";
  }
}

int MergedLabelSpace::global_of(int source_id, int local_class) const {
  auto it = forward_.find({source_id, local_class});
  if (it == forward_.end())
    throw DataError("label space has no entry for source " + std::to_string(source_id) +
                    " class " + std::to_string(local_class));
  return it->second;
}

std::pair<int, int> MergedLabelSpace::source_local_of(int global_class) const {
  if (global_class < 0 || global_class >= total_classes())
    throw DataError("global class " + std::to_string(global_class) + " out of range");
  return reverse_[static_cast<std::size_t>(global_class)];
}

bool MergedLabelSpace::contains(int source_id, int local_class) const {
  return forward_.count({source_id, local_class}) > 0;
}

std::string MergedLabelSpace::to_json() const {
  json j;
  j["version"] = "v1";
  j["total_classes"] = total_classes();
  json entries = json::array();
  for (int g = 0; g < total_classes(); ++g) {
    const auto& sl = reverse_[static_cast<std::size_t>(g)];
    entries.push_back({{"source", sl.first}, {"local_class", sl.second}, {"global_class", g}});
  }
  j["entries"] = std::move(entries);
  return j.dump(2);
}

MergedLabelSpace MergedLabelSpace::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("label space parse: ") + e.what());
  }
  if (!j.contains("version") || j["version"] != "v1")
    throw DataError("label space: unsupported or missing version");
  MergedLabelSpace space;
  std::set<int> sources;
  for (const auto& e : j.at("entries")) {
    int s = e.at("source").get<int>();
    int l = e.at("local_class").get<int>();
    int g = e.at("global_class").get<int>();
    if (g != static_cast<int>(space.reverse_.size()))
      throw DataError("label space: global ids not contiguous");
    space.forward_[{s, l}] = g;
    space.reverse_.emplace_back(s, l);
    sources.insert(s);
  }
  space.source_ids_.assign(sources.begin(), sources.end());
  if (j.at("total_classes").get<int>() != space.total_classes())
    throw DataError("label space: total_classes mismatch");
  return space;
}

MergedLabelSpace merge_label_spaces(const std::vector<SourceManifest>& manifests) {
  if (manifests.empty()) throw ConfigError("merge_label_spaces: no manifests given");
  std::set<int> seen_sources;
  for (const auto& m : manifests) {
    if (!seen_sources.insert(m.source_id).second)
      throw ConfigError("merge_label_spaces: duplicate source_id " + std::to_string(m.source_id));
    if (m.samples.empty())
      throw DataError("merge_label_spaces: source " + std::to_string(m.source_id) +
                      " has no records");
    m.validate();
  }

  std::vector<const SourceManifest*> ordered;
  ordered.reserve(manifests.size());
  for (const auto& m : manifests) ordered.push_back(&m);
  std::sort(ordered.begin(), ordered.end(),
            [](const SourceManifest* a, const SourceManifest* b) {
              return a->source_id < b->source_id;
            });

  MergedLabelSpace space;
  for (const SourceManifest* m : ordered) {
    std::set<int> classes = m->distinct_classes(Split::kTrain);
    if (classes.empty())
      throw DataError("merge_label_spaces: source " + std::to_string(m->source_id) +
                      " has no train records");
    for (int local : classes) {
      int g = space.total_classes();
      space.forward_[{m->source_id, local}] = g;
      space.reverse_.emplace_back(m->source_id, local);
    }
    space.source_ids_.push_back(m->source_id);
  }
  return space;
}

std::pair<MergedLabelSpace, std::vector<int>> remap_for_target(const MergedLabelSpace& space,
                                                               int target_source) {
  bool known = std::find(space.source_ids_.begin(), space.source_ids_.end(), target_source) !=
               space.source_ids_.end();
  if (!known)
    throw ConfigError("remap_for_target: unknown source " + std::to_string(target_source));

  MergedLabelSpace out;
  out.source_ids_.push_back(target_source);
  std::vector<int> translation(static_cast<std::size_t>(space.total_classes()), -1);
  for (int g = 0; g < space.total_classes(); ++g) {
    const auto& sl = space.reverse_[static_cast<std::size_t>(g)];
    if (sl.first != target_source) continue;
    int ng = out.total_classes();
    out.forward_[sl] = ng;
    out.reverse_.push_back(sl);
    translation[static_cast<std::size_t>(g)] = ng;
  }
  return {std::move(out), std::move(translation)};
}

SplitSpec split_train_val(const SourceManifest& manifest, int val_class_count,
                          std::uint64_t seed) {
  std::set<int> class_set = manifest.distinct_classes(Split::kTrain);
  const int total = static_cast<int>(class_set.size());
  if (val_class_count < 0) throw ConfigError("split_train_val: negative val_class_count");
  if (val_class_count >= total && !(val_class_count == 0 && total == 0))
    throw ConfigError("split_train_val: val_class_count " + std::to_string(val_class_count) +
                      " >= class count " + std::to_string(total));

  std::vector<int> classes(class_set.begin(), class_set.end());
  Rng rng = Rng::stream(seed, {rngtag::kSplitClasses, static_cast<std::uint64_t>(manifest.source_id)});
  for (std::size_t i = classes.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(classes[i - 1], classes[j]);
  }
  std::set<int> val_classes(classes.begin(), classes.begin() + val_class_count);

  SplitSpec spec;
  for (int c : classes)
    if (!val_classes.count(c)) spec.train_classes.insert(c);

  // Group the train-split rows of each validation class, then draw roughly a
  // quarter of each class (at least one image) as queries. The gallery is the
  // whole original train split.
  std::map<int, std::vector<std::size_t>> val_rows_by_class;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    const auto& r = manifest.samples[i];
    if (r.split != Split::kTrain) continue;
    spec.val_gallery_rows.push_back(i);
    if (val_classes.count(r.local_class))
      val_rows_by_class[r.local_class].push_back(i);
    else
      spec.train_rows.push_back(i);
  }
  for (auto& [cls, rows] : val_rows_by_class) {
    Rng qrng = Rng::stream(seed, {rngtag::kSplitQueries,
                                  static_cast<std::uint64_t>(manifest.source_id),
                                  static_cast<std::uint64_t>(cls)});
    for (std::size_t i = rows.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(qrng.next_below(i));
      std::swap(rows[i - 1], rows[j]);
    }
    std::size_t n_query = std::max<std::size_t>(1, rows.size() / 4);
    for (std::size_t i = 0; i < n_query; ++i) spec.val_query_rows.push_back(rows[i]);
  }
  std::sort(spec.val_query_rows.begin(), spec.val_query_rows.end());
  return spec;
}

std::vector<MetaRecord> load_meta_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metadata '" + path + "'");
  std::vector<MetaRecord> out;
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
    MetaRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.source_id = j.value("source_id", 0);
    r.global_class = j.value("global_class", -1);
    if (j.contains("camera_id") && !j["camera_id"].is_null()) r.camera_id = j["camera_id"].get<int>();
    if (j.contains("timestamp") && !j["timestamp"].is_null())
      r.timestamp = j["timestamp"].get<std::int64_t>();
    out.push_back(std::move(r));
  }
  return out;
}

void save_meta_jsonl(const std::vector<MetaRecord>& meta, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write metadata '" + path + "'");
  for (const auto& r : meta) {
    json j;
    j["image_id"] = r.image_id;
    j["source_id"] = r.source_id;
    j["global_class"] = r.global_class;
    j["camera_id"] = r.camera_id ? json(*r.camera_id) : json(nullptr);
    j["timestamp"] = r.timestamp ? json(*r.timestamp) : json(nullptr);
    out << j.dump() << "\n";
  }
}

}  // namespace vreid
