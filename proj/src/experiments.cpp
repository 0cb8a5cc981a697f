#include "vreid/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vreid/errors.hpp"
#include "vreid/rng.hpp"
#include "vreid/version.hpp"

namespace vreid {

using nlohmann::json;

double median(std::vector<double> values) {
  if (values.empty()) throw DataError("median of empty set");
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

BenchmarkConfig default_benchmark_config() {
  BenchmarkConfig cfg;
  cfg.synth.sources = 4;
  cfg.synth.identities_per_source = 18;
  cfg.synth.images_per_identity = 12;
  cfg.synth.long_tail_exponent = 0.6;
  cfg.synth.feature_dim = 64;
  cfg.synth.identity_dim = 20;
  cfg.synth.identity_scale = 1.0;
  cfg.synth.domain_scale = 0.8;
  cfg.synth.domain_gain_spread = 4.0;
  cfg.synth.camera_count = 4;
  cfg.synth.camera_scale = 0.3;
  cfg.synth.noise_sigma = 2.0;
  cfg.synth.views_per_sample = 1;
  cfg.synth.time_window = 200;
  // Eight held-out classes keep the target source data-poor next to the
  // auxiliary sources, which is the regime the two-stage approach targets.
  cfg.val_class_count = 8;

  cfg.stage1 = default_stage1_config();
  cfg.stage1.epochs = 40;
  cfg.stage1.schedule = LrSchedule{0.01, {25}, 0.1};
  cfg.stage1.weight_decay = 0.02;

  cfg.stage2 = default_stage2_config();
  cfg.stage2.schedule = LrSchedule{0.01, {8}, 0.1};
  cfg.stage2.weight_decay = 0.02;

  cfg.cross_camera_junk = true;
  return cfg;
}

namespace {

struct PreparedArm {
  SynthDataset data;
  SplitSpec split;                      // on the target source
  MergedLabelSpace target_space;        // target train classes, contiguous
  MergedLabelSpace merged_space;        // target train + auxiliary sources
  std::vector<SampleRecord> target_records;  // labels in target_space
  std::vector<SampleRecord> merged_records;  // labels in merged_space
};

SampleRecord record_from_row(const SynthSource& source, std::size_t row, int global_class,
                             int global_index) {
  const RawRecord& raw = source.manifest.samples[row];
  SampleRecord rec;
  rec.global_index = global_index;
  rec.source_id = source.manifest.source_id;
  rec.global_class = global_class;
  rec.image_id = raw.image_id;
  rec.camera_id = raw.camera_id;
  rec.timestamp = raw.timestamp;
  auto fr = source.features.row(row);
  rec.feature = std::vector<float>(fr.begin(), fr.end());
  return rec;
}

PreparedArm prepare_arm(const BenchmarkConfig& cfg, const std::vector<int>& aux_sources,
                        std::uint64_t seed) {
  PreparedArm arm;
  SynthConfig synth = cfg.synth;
  synth.seed = seed;
  arm.data = generate(synth);

  const SynthSource& target = arm.data.sources.front();
  arm.split = split_train_val(target.manifest, cfg.val_class_count, seed);

  SourceManifest target_sub;
  target_sub.source_id = target.manifest.source_id;
  for (std::size_t row : arm.split.train_rows)
    target_sub.samples.push_back(target.manifest.samples[row]);
  arm.target_space = merge_label_spaces({target_sub});

  std::vector<SourceManifest> merged_manifests = {target_sub};
  for (int s : aux_sources) {
    if (s < 2 || s > cfg.synth.sources)
      throw ConfigError("auxiliary source " + std::to_string(s) + " out of range");
    merged_manifests.push_back(arm.data.sources[static_cast<std::size_t>(s - 1)].manifest);
  }
  arm.merged_space = merge_label_spaces(merged_manifests);

  int index = 0;
  for (std::size_t row : arm.split.train_rows) {
    int local = target.manifest.samples[row].local_class;
    arm.target_records.push_back(
        record_from_row(target, row, arm.target_space.global_of(target.manifest.source_id, local),
                        index++));
  }
  index = 0;
  for (std::size_t row : arm.split.train_rows) {
    int local = target.manifest.samples[row].local_class;
    arm.merged_records.push_back(
        record_from_row(target, row, arm.merged_space.global_of(target.manifest.source_id, local),
                        index++));
  }
  for (int s : aux_sources) {
    const SynthSource& src = arm.data.sources[static_cast<std::size_t>(s - 1)];
    for (std::size_t row = 0; row < src.manifest.samples.size(); ++row) {
      int local = src.manifest.samples[row].local_class;
      arm.merged_records.push_back(record_from_row(
          src, row, arm.merged_space.global_of(src.manifest.source_id, local), index++));
    }
  }
  return arm;
}

Mat rows_to_mat(const SynthSource& source, const std::vector<std::size_t>& rows) {
  Mat out(rows.size(), source.features.dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto r = source.features.row(rows[i]);
    for (std::size_t d = 0; d < r.size(); ++d) out[i][d] = static_cast<double>(r[d]);
  }
  return out;
}

std::vector<MetaRecord> meta_for_rows(const SynthSource& source,
                                      const std::vector<std::size_t>& rows) {
  std::vector<MetaRecord> out;
  out.reserve(rows.size());
  for (std::size_t row : rows) {
    const RawRecord& raw = source.manifest.samples[row];
    MetaRecord m;
    m.image_id = raw.image_id;
    m.source_id = source.manifest.source_id;
    m.global_class = raw.local_class;  // class identity is all scoring needs
    m.camera_id = raw.camera_id;
    m.timestamp = raw.timestamp;
    out.push_back(std::move(m));
  }
  return out;
}

EmbeddingStore embed_rows(const HeadParameters& params, const SynthSource& source,
                          const std::vector<std::size_t>& rows) {
  Mat features = rows_to_mat(source, rows);
  ForwardResult fwd = forward_eval(params, features);
  EmbeddingStore store;
  store.count = rows.size();
  store.dim = kEmbedDim;
  store.data.resize(store.count * store.dim);
  for (std::size_t i = 0; i < store.count; ++i)
    for (std::size_t d = 0; d < kEmbedDim; ++d)
      store.data[i * kEmbedDim + d] = static_cast<float>(fwd.embeddings[i][d]);
  store.meta = meta_for_rows(source, rows);
  normalize_store(store);
  return store;
}

}  // namespace

ArmOutcome run_training_arm(const BenchmarkConfig& cfg, const std::vector<int>& aux_sources,
                            bool two_stage, std::uint64_t seed,
                            const std::vector<std::string>& post_steps,
                            const PipelineConfig& post_cfg) {
  PreparedArm arm = prepare_arm(cfg, aux_sources, seed);

  ArmOutcome outcome;
  outcome.target_class_count = arm.target_space.total_classes();

  // Stage-I always trains on the pooled target + auxiliary records; with no
  // auxiliary sources that is exactly target-only training.
  StageConfig stage1 = cfg.stage1;
  stage1.seed = seed;
  if (two_stage) {
    auto [params1, log1] = train_stage1(arm.merged_records, arm.merged_space, stage1);
    outcome.stage1_log = std::move(log1);
    outcome.stage1_params = params1;
    StageConfig stage2 = cfg.stage2;
    stage2.seed = seed;
    auto [params2, log2] = train_stage2(std::move(params1), arm.target_records, arm.target_space,
                                        stage2);
    outcome.params = std::move(params2);
    outcome.stage2_log = std::move(log2);
  } else {
    auto [params, log] = train_stage1(arm.merged_records, arm.merged_space, stage1);
    outcome.params = std::move(params);
    outcome.stage1_log = std::move(log);
  }

  const SynthSource& target = arm.data.sources.front();
  EmbeddingStore query_store = embed_rows(outcome.params, target, arm.split.val_query_rows);
  EmbeddingStore gallery_store = embed_rows(outcome.params, target, arm.split.val_gallery_rows);

  JudgmentOptions jopt;
  jopt.cross_camera_junk = cfg.cross_camera_junk;
  std::vector<RelevanceJudgment> judgments =
      judgments_from_meta(query_store.meta, gallery_store.meta, jopt);

  RankingResult ranking;
  if (post_steps.empty()) {
    ranking = rank_gallery(query_store, gallery_store);
  } else {
    PipelineInput input;
    input.query_models.push_back(MultiViewSet::single_view(query_store));
    input.gallery_models.push_back(MultiViewSet::single_view(gallery_store));
    for (const auto& m : query_store.meta) {
      input.query_cams.push_back(m.camera_id);
      input.query_ts.push_back(m.timestamp);
    }
    for (const auto& m : gallery_store.meta) {
      input.gallery_cams.push_back(m.camera_id);
      input.gallery_ts.push_back(m.timestamp);
    }
    input.judgments = &judgments;
    std::vector<PipelineStep> steps;
    for (const auto& name : post_steps) steps.push_back(pipeline_step_from_name(name));
    ranking = run_pipeline(input, steps, post_cfg).ranking;
  }

  EvalReport report = evaluate(ranking, judgments, cfg.k_values);
  outcome.map = report.map;
  outcome.rank1 = report.rank_at_k.empty() ? 0.0 : report.rank_at_k.front();
  return outcome;
}

HeadParameters restrict_classifier(const HeadParameters& params, int column_count) {
  if (column_count < 2 || static_cast<std::size_t>(column_count) > params.class_count)
    throw ConfigError("restrict_classifier: bad column count");
  HeadParameters out = params;
  out.class_count = static_cast<std::size_t>(column_count);
  out.classifier_weight = Mat(kEmbedDim, out.class_count);
  for (std::size_t d = 0; d < kEmbedDim; ++d)
    for (std::size_t c = 0; c < out.class_count; ++c)
      out.classifier_weight[d][c] = params.classifier_weight[d][c];
  out.classifier_bias.assign(params.classifier_bias.begin(),
                             params.classifier_bias.begin() + column_count);
  return out;
}

PostAblationConfig default_post_ablation_config() {
  PostAblationConfig cfg;
  cfg.synth.sources = 2;
  cfg.synth.identities_per_source = 12;
  cfg.synth.images_per_identity = 8;
  cfg.synth.long_tail_exponent = 0.0;
  cfg.synth.feature_dim = 48;
  cfg.synth.identity_scale = 1.0;
  cfg.synth.domain_scale = 0.7;
  cfg.synth.camera_count = 4;
  cfg.synth.camera_scale = 0.6;
  cfg.synth.noise_sigma = 1.6;
  cfg.synth.views_per_sample = 2;
  cfg.synth.time_window = 150;
  cfg.queries_per_identity = 2;
  cfg.pipeline.dbscan = DbscanConfig{0.40, 2};
  cfg.pipeline.rerank = RerankConfig{12, 4, 0.3};
  return cfg;
}

std::vector<StepReport> run_post_ablation(const PostAblationConfig& cfg, std::uint64_t seed) {
  SynthConfig synth0 = cfg.synth;
  synth0.seed = seed;
  synth0.model_salt = 0;
  SynthConfig synth1 = synth0;
  synth1.model_salt = 1;
  SynthDataset model0 = generate(synth0);
  SynthDataset model1 = generate(synth1);

  // Queries: the first N images of every target identity; everything else,
  // all sources included, forms the gallery.
  const SynthSource& target0 = model0.sources.front();
  std::set<std::size_t> query_rows;
  std::map<int, int> taken;
  for (std::size_t row = 0; row < target0.manifest.samples.size(); ++row) {
    int cls = target0.manifest.samples[row].local_class;
    if (taken[cls] < cfg.queries_per_identity) {
      query_rows.insert(row);
      ++taken[cls];
    }
  }

  struct Selection {
    std::vector<std::pair<std::size_t, std::size_t>> items;  // (source index, row)
  };
  Selection queries, gallery;
  for (std::size_t row = 0; row < target0.manifest.samples.size(); ++row) {
    if (query_rows.count(row))
      queries.items.emplace_back(0, row);
    else
      gallery.items.emplace_back(0, row);
  }
  for (std::size_t s = 1; s < model0.sources.size(); ++s)
    for (std::size_t row = 0; row < model0.sources[s].manifest.samples.size(); ++row)
      gallery.items.emplace_back(s, row);

  auto view_set = [&](const SynthDataset& model, const Selection& sel) {
    MultiViewSet set;
    set.sample_count = sel.items.size();
    EmbeddingStore rows;
    rows.dim = static_cast<std::size_t>(cfg.synth.feature_dim);
    for (std::size_t i = 0; i < sel.items.size(); ++i) {
      const auto& [s, row] = sel.items[i];
      for (const auto& view : model.sources[s].views[row]) {
        rows.data.insert(rows.data.end(), view.begin(), view.end());
        rows.count += 1;
        set.owner.push_back(i);
      }
    }
    set.rows = std::move(rows);
    return set;
  };

  auto meta_of = [&](const Selection& sel) {
    std::vector<MetaRecord> out;
    for (const auto& [s, row] : sel.items) out.push_back(model0.sources[s].meta[row]);
    return out;
  };

  PipelineInput input;
  input.query_models = {view_set(model0, queries), view_set(model1, queries)};
  input.gallery_models = {view_set(model0, gallery), view_set(model1, gallery)};
  std::vector<MetaRecord> qmeta = meta_of(queries);
  std::vector<MetaRecord> gmeta = meta_of(gallery);
  for (const auto& m : qmeta) {
    input.query_cams.push_back(m.camera_id);
    input.query_ts.push_back(m.timestamp);
  }
  for (const auto& m : gmeta) {
    input.gallery_cams.push_back(m.camera_id);
    input.gallery_ts.push_back(m.timestamp);
  }
  JudgmentOptions jopt;
  jopt.cross_camera_junk = cfg.cross_camera_junk;
  std::vector<RelevanceJudgment> judgments = judgments_from_meta(qmeta, gmeta, jopt);
  input.judgments = &judgments;

  std::vector<PipelineStep> steps;
  for (const auto& name : cfg.steps) steps.push_back(pipeline_step_from_name(name));
  return run_pipeline(input, steps, cfg.pipeline).reports;
}

SamplerComparisonOutcome run_sampler_comparison(const BenchmarkConfig& cfg, std::uint64_t seed) {
  SamplerComparisonOutcome out;

  // The policies are compared where they differ most: stage-1 training over
  // the pooled multi-source set, scored on the target validation split.
  std::vector<int> all_aux;
  for (int s = 2; s <= cfg.synth.sources; ++s) all_aux.push_back(s);

  BenchmarkConfig naive_cfg = cfg;
  naive_cfg.stage1.sampler = SamplerKind::kNaive;
  out.naive_map = run_training_arm(naive_cfg, all_aux, false, seed).map;

  BenchmarkConfig balanced_cfg = cfg;
  balanced_cfg.stage1.sampler = SamplerKind::kBalanced;
  out.balanced_map = run_training_arm(balanced_cfg, all_aux, false, seed).map;

  SynthConfig synth = cfg.synth;
  synth.seed = seed;
  std::vector<int> counts =
      long_tail_counts(synth.identities_per_source,
                       synth.identities_per_source * synth.images_per_identity,
                       synth.long_tail_exponent,
                       splitmix64(seed ^ 0x9e3779b97f4a7c15ULL));
  out.max_class_count = *std::max_element(counts.begin(), counts.end());
  out.mean_class_count = static_cast<double>(synth.images_per_identity);
  return out;
}

// ---------------------------------------------------------------------------
// Ablation grids

namespace {

LrSchedule schedule_from_json(const json& j, const LrSchedule& defaults) {
  LrSchedule s = defaults;
  if (j.contains("base")) s.base_lr = j["base"].get<double>();
  if (j.contains("milestones")) s.milestones = j["milestones"].get<std::vector<int>>();
  if (j.contains("factor")) s.factor = j["factor"].get<double>();
  return s;
}

json schedule_to_json(const LrSchedule& s) {
  return json{{"base", s.base_lr}, {"milestones", s.milestones}, {"factor", s.factor}};
}

StageConfig stage_from_json(const json& j, const StageConfig& defaults) {
  StageConfig cfg = defaults;
  if (j.contains("epochs")) cfg.epochs = j["epochs"].get<int>();
  if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
  if (j.contains("lr")) cfg.schedule = schedule_from_json(j["lr"], defaults.schedule);
  if (j.contains("momentum")) cfg.momentum = j["momentum"].get<double>();
  if (j.contains("weight_decay")) cfg.weight_decay = j["weight_decay"].get<double>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("sampler")) cfg.sampler = sampler_from_name(j["sampler"].get<std::string>());
  if (j.contains("balanced_draws")) cfg.balanced_draws = j["balanced_draws"].get<std::size_t>();
  cfg.validate();
  return cfg;
}

json stage_to_json(const StageConfig& cfg) {
  return json{{"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"lr", schedule_to_json(cfg.schedule)},
              {"momentum", cfg.momentum},
              {"weight_decay", cfg.weight_decay},
              {"seed", cfg.seed},
              {"sampler", sampler_name(cfg.sampler)},
              {"balanced_draws", cfg.balanced_draws}};
}

}  // namespace

AblationSpec ablation_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("ablation config parse: ") + e.what());
  }
  AblationSpec spec;
  spec.benchmark = default_benchmark_config();
  if (j.contains("benchmark")) {
    const json& b = j["benchmark"];
    if (b.contains("synth"))
      spec.benchmark.synth = synth_config_from_json(b["synth"].dump());
    if (b.contains("val_class_count"))
      spec.benchmark.val_class_count = b["val_class_count"].get<int>();
    if (b.contains("stage1")) spec.benchmark.stage1 = stage_from_json(b["stage1"], spec.benchmark.stage1);
    if (b.contains("stage2")) spec.benchmark.stage2 = stage_from_json(b["stage2"], spec.benchmark.stage2);
    if (b.contains("protocol")) {
      std::string p = b["protocol"].get<std::string>();
      if (p != "plain" && p != "cross-camera") throw ConfigError("unknown protocol '" + p + "'");
      spec.benchmark.cross_camera_junk = (p == "cross-camera");
    }
    if (b.contains("k")) spec.benchmark.k_values = b["k"].get<std::vector<int>>();
  }
  if (j.contains("pipeline")) {
    const json& p = j["pipeline"];
    if (p.contains("dbscan_eps")) spec.pipeline.dbscan.eps = p["dbscan_eps"].get<double>();
    if (p.contains("dbscan_min_pts")) spec.pipeline.dbscan.min_pts = p["dbscan_min_pts"].get<int>();
    if (p.contains("qe_include_self")) spec.pipeline.qe_include_self = p["qe_include_self"].get<bool>();
    if (p.contains("tau")) spec.pipeline.tau = p["tau"].get<double>();
    if (p.contains("k1")) spec.pipeline.rerank.k1 = p["k1"].get<int>();
    if (p.contains("k2")) spec.pipeline.rerank.k2 = p["k2"].get<int>();
    if (p.contains("lambda")) spec.pipeline.rerank.lambda = p["lambda"].get<double>();
  }
  if (j.contains("seeds")) spec.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("arms")) {
    for (const json& a : j["arms"]) {
      AblationArmSpec arm;
      arm.name = a.at("name").get<std::string>();
      if (a.contains("aux_sources")) arm.aux_sources = a["aux_sources"].get<std::vector<int>>();
      if (a.contains("two_stage")) arm.two_stage = a["two_stage"].get<bool>();
      if (a.contains("sampler")) arm.sampler = sampler_from_name(a["sampler"].get<std::string>());
      if (a.contains("post_steps"))
        arm.post_steps = a["post_steps"].get<std::vector<std::string>>();
      for (const auto& s : arm.post_steps) pipeline_step_from_name(s);  // validate early
      spec.arms.push_back(std::move(arm));
    }
  }
  return spec;
}

std::string ablation_spec_to_json(const AblationSpec& spec) {
  json j;
  j["benchmark"] = {
      {"synth", json::parse(synth_config_to_json(spec.benchmark.synth))},
      {"val_class_count", spec.benchmark.val_class_count},
      {"stage1", stage_to_json(spec.benchmark.stage1)},
      {"stage2", stage_to_json(spec.benchmark.stage2)},
      {"protocol", spec.benchmark.cross_camera_junk ? "cross-camera" : "plain"},
      {"k", spec.benchmark.k_values},
  };
  j["pipeline"] = {
      {"dbscan_eps", spec.pipeline.dbscan.eps},
      {"dbscan_min_pts", spec.pipeline.dbscan.min_pts},
      {"qe_include_self", spec.pipeline.qe_include_self},
      {"tau", std::isinf(spec.pipeline.tau) ? json("inf") : json(spec.pipeline.tau)},
      {"k1", spec.pipeline.rerank.k1},
      {"k2", spec.pipeline.rerank.k2},
      {"lambda", spec.pipeline.rerank.lambda},
  };
  j["seeds"] = spec.seeds;
  json arms = json::array();
  for (const auto& arm : spec.arms) {
    arms.push_back({{"name", arm.name},
                    {"aux_sources", arm.aux_sources},
                    {"two_stage", arm.two_stage},
                    {"sampler", sampler_name(arm.sampler)},
                    {"post_steps", arm.post_steps}});
  }
  j["arms"] = std::move(arms);
  return j.dump(2);
}

std::vector<AblationRow> run_ablation(const AblationSpec& spec) {
  std::vector<AblationRow> rows;
  for (const auto& arm : spec.arms) {
    for (std::uint64_t seed : spec.seeds) {
      BenchmarkConfig cfg = spec.benchmark;
      cfg.stage1.sampler = arm.sampler;
      ArmOutcome outcome =
          run_training_arm(cfg, arm.aux_sources, arm.two_stage, seed, arm.post_steps, spec.pipeline);
      rows.push_back(AblationRow{arm.name, seed, outcome.map, outcome.rank1});
    }
  }
  return rows;
}

void write_ablation_report(const AblationSpec& spec, const std::vector<AblationRow>& rows,
                           const std::string& md_path, const std::string& csv_path) {
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw DataError("cannot write report '" + csv_path + "'");
  csv << "arm,seed,map,rank1\n";
  csv.precision(6);
  csv << std::fixed;
  for (const auto& r : rows) csv << r.arm << "," << r.seed << "," << r.map << "," << r.rank1 << "\n";

  std::ofstream md(md_path, std::ios::trunc);
  if (!md) throw DataError("cannot write report '" + md_path + "'");
  md << "# Ablation report\n\n";
  md << "```\n" << version_info() << "```\n\n";
  md << "Resolved configuration:\n\n```json\n" << ablation_spec_to_json(spec) << "\n```\n\n";
  md << "## Median over seeds\n\n";
  md << "| arm | median mAP | median Rank@1 | seeds |\n";
  md << "|-----|-----------:|--------------:|------:|\n";
  md.precision(4);
  md << std::fixed;
  for (const auto& arm : spec.arms) {
    std::vector<double> maps, rank1s;
    for (const auto& r : rows)
      if (r.arm == arm.name) {
        maps.push_back(r.map);
        rank1s.push_back(r.rank1);
      }
    if (maps.empty()) continue;
    md << "| " << arm.name << " | " << median(maps) << " | " << median(rank1s) << " | "
       << maps.size() << " |\n";
  }
  md << "\n## Per-run rows\n\n";
  md << "| arm | seed | mAP | Rank@1 |\n|-----|-----:|----:|-------:|\n";
  for (const auto& r : rows)
    md << "| " << r.arm << " | " << r.seed << " | " << r.map << " | " << r.rank1 << " |\n";
}

}  // namespace vreid
