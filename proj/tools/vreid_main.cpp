// vreid: vehicle re-identification experimentation toolkit.
//
// Subcommands: merge, synth, train, embed, rank, post, eval, ablate, version.
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vreid/errors.hpp"
#include "vreid/eval.hpp"
#include "vreid/experiments.hpp"
#include "vreid/manifest.hpp"
#include "vreid/postprocess.hpp"
#include "vreid/retrieval.hpp"
#include "vreid/synthgen.hpp"
#include "vreid/trainer.hpp"
#include "vreid/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw vreid::DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw vreid::DataError("cannot write '" + path + "'");
  out << text;
}

std::pair<int, std::string> parse_source_arg(const std::string& arg, const char* what) {
  auto pos = arg.find(':');
  if (pos == std::string::npos || pos == 0)
    throw vreid::ConfigError(std::string(what) + " must look like <source_id>:<path>, got '" +
                             arg + "'");
  int source_id = 0;
  try {
    source_id = std::stoi(arg.substr(0, pos));
  } catch (const std::exception&) {
    throw vreid::ConfigError(std::string(what) + ": bad source id in '" + arg + "'");
  }
  return {source_id, arg.substr(pos + 1)};
}

vreid::StageConfig stage_config_from_file(const std::string& path, int stage) {
  vreid::StageConfig cfg =
      stage == 1 ? vreid::default_stage1_config() : vreid::default_stage2_config();
  if (path.empty()) return cfg;
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw vreid::ConfigError("train config '" + path + "': " + e.what());
  }
  if (j.contains("epochs")) cfg.epochs = j["epochs"].get<int>();
  if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
  if (j.contains("lr")) {
    const json& lr = j["lr"];
    if (lr.contains("base")) cfg.schedule.base_lr = lr["base"].get<double>();
    if (lr.contains("milestones")) cfg.schedule.milestones = lr["milestones"].get<std::vector<int>>();
    if (lr.contains("factor")) cfg.schedule.factor = lr["factor"].get<double>();
  }
  if (j.contains("momentum")) cfg.momentum = j["momentum"].get<double>();
  if (j.contains("weight_decay")) cfg.weight_decay = j["weight_decay"].get<double>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("sampler")) cfg.sampler = vreid::sampler_from_name(j["sampler"].get<std::string>());
  if (j.contains("balanced_draws")) cfg.balanced_draws = j["balanced_draws"].get<std::size_t>();
  cfg.validate();
  return cfg;
}

// Training records for one source: manifest train rows plus aligned features.
std::vector<vreid::SampleRecord> records_for_training(const vreid::SourceManifest& manifest,
                                                      const vreid::EmbeddingStore& features,
                                                      const vreid::MergedLabelSpace& space) {
  if (features.count != manifest.samples.size())
    throw vreid::DataError("features for source " + std::to_string(manifest.source_id) + " have " +
                           std::to_string(features.count) + " rows, manifest has " +
                           std::to_string(manifest.samples.size()));
  std::vector<vreid::SampleRecord> records;
  for (std::size_t row = 0; row < manifest.samples.size(); ++row) {
    const vreid::RawRecord& raw = manifest.samples[row];
    if (raw.split != vreid::Split::kTrain) continue;
    vreid::SampleRecord rec;
    rec.global_index = static_cast<int>(records.size());
    rec.source_id = manifest.source_id;
    rec.global_class = space.global_of(manifest.source_id, raw.local_class);
    rec.image_id = raw.image_id;
    rec.camera_id = raw.camera_id;
    rec.timestamp = raw.timestamp;
    auto fr = features.row(row);
    rec.feature = std::vector<float>(fr.begin(), fr.end());
    records.push_back(std::move(rec));
  }
  if (records.empty())
    throw vreid::DataError("source " + std::to_string(manifest.source_id) + " has no train rows");
  return records;
}

std::vector<std::optional<int>> cams_from_file(const std::string& path,
                                               const std::vector<vreid::MetaRecord>& meta) {
  std::unordered_map<std::string, int> clusters;
  std::ifstream in(path);
  if (!in) throw vreid::DataError("cannot open cam-cluster file '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw vreid::DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    clusters[j.at("image_id").get<std::string>()] = j.at("cluster").get<int>();
  }
  std::vector<std::optional<int>> out;
  out.reserve(meta.size());
  for (const auto& m : meta) {
    auto it = clusters.find(m.image_id);
    out.push_back(it == clusters.end() ? std::optional<int>{} : std::optional<int>{it->second});
  }
  return out;
}

json eval_report_to_json(const vreid::EvalReport& report) {
  json j;
  j["map"] = report.map;
  json ranks = json::object();
  for (std::size_t i = 0; i < report.k_values.size(); ++i)
    ranks[std::to_string(report.k_values[i])] = report.rank_at_k[i];
  j["rank_at_k"] = std::move(ranks);
  j["query_count"] = report.query_count;
  j["scored_queries"] = report.scored_queries;
  j["skipped_queries"] = report.skipped_queries;
  return j;
}

// ---------------------------------------------------------------------------

int cmd_merge(const std::vector<std::string>& manifest_args, const std::string& out_path) {
  std::vector<vreid::SourceManifest> manifests;
  for (const auto& arg : manifest_args) {
    auto [source_id, path] = parse_source_arg(arg, "--manifest");
    manifests.push_back(vreid::load_manifest_jsonl(path, source_id));
  }
  vreid::MergedLabelSpace space = vreid::merge_label_spaces(manifests);
  write_file(out_path, space.to_json());
  std::size_t images = 0;
  for (const auto& m : manifests) images += m.samples.size();
  std::cout << "merged " << manifests.size() << " sources: " << space.total_classes()
            << " classes, " << images << " images\n";
  return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
  vreid::SynthConfig cfg = vreid::synth_config_from_json(read_file(config_path));
  vreid::SynthDataset data = vreid::generate(cfg);
  fs::create_directories(out_dir);
  write_file((fs::path(out_dir) / "synth_config.json").string(), vreid::synth_config_to_json(cfg));
  write_file((fs::path(out_dir) / "space.json").string(), data.space.to_json());
  for (const auto& source : data.sources) {
    const std::string d = std::to_string(source.manifest.source_id);
    vreid::save_manifest_jsonl(source.manifest,
                               (fs::path(out_dir) / ("manifest_" + d + ".jsonl")).string());
    vreid::save_meta_jsonl(source.meta, (fs::path(out_dir) / ("meta_" + d + ".jsonl")).string());
    vreid::save_embeddings(source.features,
                           (fs::path(out_dir) / ("features_" + d + ".emb")).string());
    for (int v = 1; v < cfg.views_per_sample; ++v) {
      vreid::EmbeddingStore view_store;
      view_store.count = source.views.size();
      view_store.dim = source.features.dim;
      view_store.normalized = true;
      for (const auto& views : source.views)
        view_store.data.insert(view_store.data.end(), views[static_cast<std::size_t>(v)].begin(),
                               views[static_cast<std::size_t>(v)].end());
      vreid::save_embeddings(
          view_store,
          (fs::path(out_dir) / ("features_" + d + "_view" + std::to_string(v) + ".emb")).string());
    }
  }
  std::cout << "wrote " << data.sources.size() << " sources to " << out_dir << "\n";
  return 0;
}

int cmd_train(int stage, const std::vector<std::string>& manifest_args,
              const std::vector<std::string>& feature_args, const std::string& config_path,
              const std::string& out_path, const std::string& resume_path,
              const std::string& space_out, const std::string& log_path) {
  if (manifest_args.size() != feature_args.size())
    throw vreid::ConfigError("need one --features per --manifest");
  if (manifest_args.empty()) throw vreid::ConfigError("no --manifest given");
  if (stage == 2 && manifest_args.size() != 1)
    throw vreid::ConfigError("--stage 2 fine-tunes on a single target source");

  std::vector<vreid::SourceManifest> manifests;
  std::unordered_map<int, vreid::EmbeddingStore> features;
  for (const auto& arg : manifest_args) {
    auto [source_id, path] = parse_source_arg(arg, "--manifest");
    manifests.push_back(vreid::load_manifest_jsonl(path, source_id));
  }
  for (const auto& arg : feature_args) {
    auto [source_id, path] = parse_source_arg(arg, "--features");
    features[source_id] = vreid::load_embeddings(path);
  }
  for (const auto& m : manifests)
    if (!features.count(m.source_id))
      throw vreid::ConfigError("no --features for source " + std::to_string(m.source_id));

  vreid::StageConfig cfg = stage_config_from_file(config_path, stage);
  vreid::MergedLabelSpace space = vreid::merge_label_spaces(manifests);
  std::vector<vreid::SampleRecord> records;
  for (const auto& m : manifests) {
    std::vector<vreid::SampleRecord> part = records_for_training(m, features.at(m.source_id), space);
    records.insert(records.end(), part.begin(), part.end());
  }

  vreid::HeadParameters params;
  vreid::TrainLog log;
  if (stage == 1) {
    std::tie(params, log) = vreid::train_stage1(records, space, cfg);
  } else {
    if (resume_path.empty()) throw vreid::ConfigError("--stage 2 requires --resume");
    vreid::HeadParameters base = vreid::load_checkpoint(resume_path);
    std::tie(params, log) = vreid::train_stage2(std::move(base), records, space, cfg);
  }
  vreid::save_checkpoint(params, out_path);
  if (!space_out.empty()) write_file(space_out, space.to_json());
  if (!log_path.empty()) vreid::save_train_log_csv(log, log_path);
  double final_loss = log.epochs.empty() ? 0.0 : log.epochs.back().mean_loss;
  std::cout << "stage " << stage << ": " << records.size() << " records, "
            << space.total_classes() << " classes, " << log.epochs.size()
            << " epochs, final loss " << final_loss << "\n";
  return 0;
}

int cmd_embed(const std::string& ckpt_path, const std::string& features_path,
              const std::string& meta_path, const std::string& out_path,
              const std::string& out_meta_path) {
  vreid::HeadParameters params = vreid::load_checkpoint(ckpt_path);
  vreid::EmbeddingStore input = vreid::load_embeddings(features_path);
  if (input.dim != params.d_in)
    throw vreid::DataError("checkpoint expects d_in " + std::to_string(params.d_in) +
                           ", features have " + std::to_string(input.dim));

  vreid::Mat batch(input.count, input.dim);
  for (std::size_t i = 0; i < input.count; ++i) {
    auto r = input.row(i);
    for (std::size_t d = 0; d < input.dim; ++d) batch[i][d] = static_cast<double>(r[d]);
  }
  vreid::ForwardResult fwd = vreid::forward_eval(params, batch);

  vreid::EmbeddingStore out;
  out.count = input.count;
  out.dim = vreid::kEmbedDim;
  out.data.resize(out.count * out.dim);
  for (std::size_t i = 0; i < out.count; ++i)
    for (std::size_t d = 0; d < out.dim; ++d)
      out.data[i * out.dim + d] = static_cast<float>(fwd.embeddings[i][d]);
  vreid::save_embeddings(out, out_path);

  if (!meta_path.empty() && !out_meta_path.empty())
    vreid::save_meta_jsonl(vreid::load_meta_jsonl(meta_path), out_meta_path);
  std::cout << "embedded " << out.count << " rows (" << out.dim << "-d)\n";
  return 0;
}

int cmd_rank(const std::string& query_path, const std::string& gallery_path,
             const std::string& out_path) {
  vreid::EmbeddingStore queries = vreid::load_embeddings(query_path);
  vreid::EmbeddingStore gallery = vreid::load_embeddings(gallery_path);
  vreid::normalize_store(queries);
  vreid::normalize_store(gallery);
  vreid::RankingResult ranking = vreid::rank_gallery(queries, gallery);
  vreid::save_ranking_jsonl(ranking, out_path);
  std::cout << "ranked " << queries.count << " queries over " << gallery.count << " candidates\n";
  return 0;
}

int cmd_post(const std::string& query_path, const std::string& query_meta_path,
             const std::string& gallery_path, const std::string& gallery_meta_path,
             const std::string& steps_arg, const vreid::PipelineConfig& pcfg,
             const std::string& query_cams_path, const std::string& gallery_cams_path,
             const std::string& protocol, const std::string& out_path,
             const std::string& report_path) {
  vreid::EmbeddingStore queries = vreid::load_embeddings(query_path);
  vreid::EmbeddingStore gallery = vreid::load_embeddings(gallery_path);
  queries.meta = vreid::load_meta_jsonl(query_meta_path);
  gallery.meta = vreid::load_meta_jsonl(gallery_meta_path);
  if (queries.meta.size() != queries.count || gallery.meta.size() != gallery.count)
    throw vreid::DataError("metadata row count does not match embeddings");
  vreid::normalize_store(queries);
  vreid::normalize_store(gallery);

  std::vector<vreid::PipelineStep> steps;
  std::stringstream ss(steps_arg);
  std::string token;
  while (std::getline(ss, token, ','))
    if (!token.empty()) steps.push_back(vreid::pipeline_step_from_name(token));

  vreid::PipelineInput input;
  for (const auto& m : queries.meta) input.query_ts.push_back(m.timestamp);
  for (const auto& m : gallery.meta) input.gallery_ts.push_back(m.timestamp);
  if (!query_cams_path.empty())
    input.query_cams = cams_from_file(query_cams_path, queries.meta);
  else
    for (const auto& m : queries.meta) input.query_cams.push_back(m.camera_id);
  if (!gallery_cams_path.empty())
    input.gallery_cams = cams_from_file(gallery_cams_path, gallery.meta);
  else
    for (const auto& m : gallery.meta) input.gallery_cams.push_back(m.camera_id);

  std::vector<vreid::RelevanceJudgment> judgments;
  if (!protocol.empty()) {
    vreid::JudgmentOptions jopt;
    jopt.cross_camera_junk = (protocol == "cross-camera");
    if (protocol != "plain" && protocol != "cross-camera")
      throw vreid::ConfigError("unknown protocol '" + protocol + "'");
    judgments = vreid::judgments_from_meta(queries.meta, gallery.meta, jopt);
  }
  input.query_models.push_back(vreid::MultiViewSet::single_view(queries));
  input.gallery_models.push_back(vreid::MultiViewSet::single_view(gallery));
  if (!judgments.empty()) input.judgments = &judgments;

  vreid::PipelineResult result = vreid::run_pipeline(input, steps, pcfg);
  vreid::save_ranking_jsonl(result.ranking, out_path);

  if (!report_path.empty()) {
    json j;
    j["version"] = vreid::version_info();
    j["config"] = {{"dbscan_eps", pcfg.dbscan.eps},
                   {"dbscan_min_pts", pcfg.dbscan.min_pts},
                   {"qe_include_self", pcfg.qe_include_self},
                   {"tau", std::isinf(pcfg.tau) ? json("inf") : json(pcfg.tau)},
                   {"k1", pcfg.rerank.k1},
                   {"k2", pcfg.rerank.k2},
                   {"lambda", pcfg.rerank.lambda},
                   {"protocol", protocol.empty() ? "none" : protocol}};
    json steps_json = json::array();
    for (const auto& r : result.reports) {
      json sj = {{"name", r.name},
                 {"mean_candidates", r.mean_candidates},
                 {"empty_candidate_queries", r.empty_candidate_queries},
                 {"warnings", r.warnings}};
      if (r.map) sj["map"] = *r.map;
      steps_json.push_back(std::move(sj));
    }
    j["steps"] = std::move(steps_json);
    write_file(report_path, j.dump(2) + "\n");
  }
  std::cout << "applied " << steps.size() << " steps to " << queries.count << " queries\n";
  return 0;
}

int cmd_eval(const std::string& ranking_path, const std::string& query_meta_path,
             const std::string& gallery_meta_path, const std::string& k_arg,
             const std::string& protocol, std::size_t truncate, const std::string& out_path,
             const std::string& per_query_path) {
  vreid::RankingResult ranking = vreid::load_ranking_jsonl(ranking_path);
  std::vector<vreid::MetaRecord> query_meta = vreid::load_meta_jsonl(query_meta_path);
  std::vector<vreid::MetaRecord> gallery_meta = vreid::load_meta_jsonl(gallery_meta_path);

  std::vector<int> k_values;
  std::stringstream ss(k_arg);
  std::string token;
  while (std::getline(ss, token, ','))
    if (!token.empty()) k_values.push_back(std::stoi(token));
  if (k_values.empty()) throw vreid::ConfigError("--k must list at least one cutoff");

  vreid::JudgmentOptions jopt;
  if (protocol != "plain" && protocol != "cross-camera")
    throw vreid::ConfigError("unknown protocol '" + protocol + "'");
  jopt.cross_camera_junk = (protocol == "cross-camera");
  jopt.truncate_at = truncate;

  std::vector<vreid::RelevanceJudgment> judgments =
      vreid::judgments_from_meta(query_meta, gallery_meta, jopt);
  vreid::RankingResult scored = vreid::truncate_ranking(ranking, jopt.truncate_at);
  vreid::EvalReport report = vreid::evaluate(scored, judgments, k_values);

  json j = eval_report_to_json(report);
  j["protocol"] = protocol;
  j["truncate"] = truncate;
  if (!out_path.empty()) write_file(out_path, j.dump(2) + "\n");

  if (!per_query_path.empty()) {
    std::ofstream pq(per_query_path, std::ios::trunc);
    if (!pq) throw vreid::DataError("cannot write '" + per_query_path + "'");
    pq << "query,image_id,ap\n";
    pq.precision(8);
    for (std::size_t q = 0; q < report.per_query_ap.size(); ++q) {
      pq << q << "," << (q < query_meta.size() ? query_meta[q].image_id : "") << ","
         << report.per_query_ap[q] << "\n";
    }
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out_dir) {
  vreid::AblationSpec spec = vreid::ablation_spec_from_json(read_file(config_path));
  fs::create_directories(out_dir);
  std::vector<vreid::AblationRow> rows = vreid::run_ablation(spec);
  vreid::write_ablation_report(spec, rows, (fs::path(out_dir) / "report.md").string(),
                               (fs::path(out_dir) / "report.csv").string());
  write_file((fs::path(out_dir) / "resolved_config.json").string(),
             vreid::ablation_spec_to_json(spec) + "\n");
  std::cout << "ablation: " << spec.arms.size() << " arms x " << spec.seeds.size()
            << " seeds -> " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vehicle re-identification experimentation toolkit"};
  app.require_subcommand(1);

  // merge
  auto* merge = app.add_subcommand("merge", "merge per-source manifests into one label space");
  std::vector<std::string> merge_manifests;
  std::string merge_out = "space.json";
  merge->add_option("--manifest", merge_manifests, "<source_id>:<path> (repeatable)")->required();
  merge->add_option("--out", merge_out, "output label-space JSON");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic multi-source dataset");
  std::string synth_config, synth_out;
  synth->add_option("--config", synth_config, "synth config JSON")->required();
  synth->add_option("--out", synth_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train the embedding head");
  int train_stage = 1;
  std::vector<std::string> train_manifests, train_features;
  std::string train_config, train_out = "ckpt.bin", train_resume, train_space_out, train_log;
  train->add_option("--stage", train_stage, "1 or 2")->check(CLI::IsMember({1, 2}));
  train->add_option("--manifest", train_manifests, "<source_id>:<path> (repeatable)")->required();
  train->add_option("--features", train_features, "<source_id>:<path.emb> (repeatable)")->required();
  train->add_option("--config", train_config, "stage config JSON");
  train->add_option("--out", train_out, "output checkpoint");
  train->add_option("--resume", train_resume, "checkpoint to fine-tune (stage 2)");
  train->add_option("--space-out", train_space_out, "write the label space JSON");
  train->add_option("--log", train_log, "write per-epoch CSV log");

  // embed
  auto* embed = app.add_subcommand("embed", "extract embeddings with a trained head");
  std::string embed_ckpt, embed_features, embed_meta, embed_out, embed_out_meta;
  embed->add_option("--ckpt", embed_ckpt, "checkpoint")->required();
  embed->add_option("--features", embed_features, "input feature .emb")->required();
  embed->add_option("--meta", embed_meta, "input metadata JSONL");
  embed->add_option("--out", embed_out, "output .emb")->required();
  embed->add_option("--out-meta", embed_out_meta, "copied metadata JSONL");

  // rank
  auto* rank = app.add_subcommand("rank", "cosine ranking of a gallery");
  std::string rank_query, rank_gallery_path, rank_out = "ranking.jsonl";
  rank->add_option("--query", rank_query, "query .emb")->required();
  rank->add_option("--gallery", rank_gallery_path, "gallery .emb")->required();
  rank->add_option("--out", rank_out, "output ranking JSONL");

  // post
  auto* post = app.add_subcommand("post", "post-processing pipeline");
  std::string post_query, post_query_meta, post_gallery, post_gallery_meta;
  std::string post_steps = "";
  std::string post_query_cams, post_gallery_cams, post_protocol;
  std::string post_out = "ranking.jsonl", post_report;
  vreid::PipelineConfig pcfg;
  post->add_option("--query", post_query, "query .emb")->required();
  post->add_option("--query-meta", post_query_meta, "query metadata JSONL")->required();
  post->add_option("--gallery", post_gallery, "gallery .emb")->required();
  post->add_option("--gallery-meta", post_gallery_meta, "gallery metadata JSONL")->required();
  post->add_option("--steps", post_steps, "comma list: qe,camver,temporal,rerank,...");
  post->add_option("--dbscan-eps", pcfg.dbscan.eps, "clustering radius (cosine distance)");
  post->add_option("--dbscan-min-pts", pcfg.dbscan.min_pts, "clustering density threshold");
  post->add_flag("--qe-include-self", pcfg.qe_include_self,
                 "include the query itself in the expansion mean");
  post->add_option("--tau", pcfg.tau, "temporal window in seconds (inf = off)");
  post->add_option("--k1", pcfg.rerank.k1, "re-ranking neighborhood");
  post->add_option("--k2", pcfg.rerank.k2, "re-ranking expansion neighborhood");
  post->add_option("--lambda", pcfg.rerank.lambda, "original-distance mixing weight");
  post->add_option("--query-cams", post_query_cams, "cam-cluster JSONL (image_id, cluster)");
  post->add_option("--gallery-cams", post_gallery_cams, "cam-cluster JSONL (image_id, cluster)");
  post->add_option("--protocol", post_protocol, "plain|cross-camera (enables per-step mAP)");
  post->add_option("--out", post_out, "output ranking JSONL");
  post->add_option("--report", post_report, "per-step report JSON");

  // eval
  auto* eval = app.add_subcommand("eval", "score a ranking with mAP and Rank@K");
  std::string eval_ranking, eval_query_meta, eval_gallery_meta;
  std::string eval_k = "1,5,10", eval_protocol = "plain", eval_out, eval_per_query;
  std::size_t eval_truncate = 0;
  eval->add_option("--ranking", eval_ranking, "ranking JSONL")->required();
  eval->add_option("--query-meta", eval_query_meta, "query metadata JSONL")->required();
  eval->add_option("--gallery-meta", eval_gallery_meta, "gallery metadata JSONL")->required();
  eval->add_option("--k", eval_k, "comma list of K cutoffs");
  eval->add_option("--protocol", eval_protocol, "plain|cross-camera");
  eval->add_option("--truncate", eval_truncate, "score only the top N (0 = full list)");
  eval->add_option("--out", eval_out, "report JSON");
  eval->add_option("--per-query", eval_per_query, "per-query AP CSV");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "run an experiment grid from one config");
  std::string ablate_config, ablate_out;
  ablate->add_option("--config", ablate_config, "ablation config JSON")->required();
  ablate->add_option("--out", ablate_out, "output directory")->required();

  auto* version = app.add_subcommand("version", "print toolchain and format versions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (merge->parsed()) return cmd_merge(merge_manifests, merge_out);
    if (synth->parsed()) return cmd_synth(synth_config, synth_out);
    if (train->parsed())
      return cmd_train(train_stage, train_manifests, train_features, train_config, train_out,
                       train_resume, train_space_out, train_log);
    if (embed->parsed())
      return cmd_embed(embed_ckpt, embed_features, embed_meta, embed_out, embed_out_meta);
    if (rank->parsed()) return cmd_rank(rank_query, rank_gallery_path, rank_out);
    if (post->parsed())
      return cmd_post(post_query, post_query_meta, post_gallery, post_gallery_meta, post_steps,
                      pcfg, post_query_cams, post_gallery_cams, post_protocol, post_out,
                      post_report);
    if (eval->parsed())
      return cmd_eval(eval_ranking, eval_query_meta, eval_gallery_meta, eval_k, eval_protocol,
                      eval_truncate, eval_out, eval_per_query);
    if (ablate->parsed()) return cmd_ablate(ablate_config, ablate_out);
    if (version->parsed()) {
      std::cout << vreid::version_info();
      return 0;
    }
  } catch (const vreid::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const vreid::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const vreid::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
