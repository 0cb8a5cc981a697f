// End-to-end checks of the command-line tool: every subcommand run against a
// small synthetic dataset in a scratch directory, exit codes included.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = VREID_CLI_PATH;

int run(const std::string& args) {
  std::string cmd = kCli + " " + args + " >> cli_test_stdout.log 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::path("cli_ws");
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  std::string p(const std::string& name) const { return (dir / name).string(); }
};

void write_synth_config(const std::string& path) {
  json j = {{"sources", 2},
            {"identities_per_source", 6},
            {"images_per_identity", 4},
            {"feature_dim", 16},
            {"identity_dim", 8},
            {"noise_sigma", 0.6},
            {"domain_scale", 0.5},
            {"camera_count", 3},
            {"camera_scale", 0.2},
            {"views_per_sample", 1},
            {"seed", 17}};
  std::ofstream(path) << j.dump(2);
}

void write_train_config(const std::string& path, int epochs, int milestone) {
  json j = {{"epochs", epochs},
            {"batch_size", 12},
            {"lr", {{"base", 0.02}, {"milestones", {milestone}}, {"factor", 0.1}}},
            {"momentum", 0.9},
            {"weight_decay", 0.001},
            {"seed", 7},
            {"sampler", "naive"}};
  std::ofstream(path) << j.dump(2);
}

}  // namespace

TEST_CASE("full command-line workflow") {
  Workspace ws;
  write_synth_config(ws.p("synth.json"));

  SUBCASE("version prints the format identifiers") {
    std::remove("cli_test_stdout.log");
    REQUIRE(run("version") == 0);
    std::string out = slurp("cli_test_stdout.log");
    CHECK(out.find("RFEB") != std::string::npos);
    CHECK(out.find("RFHD") != std::string::npos);
  }

  SUBCASE("synth, merge, train, embed, rank, post, eval, ablate") {
    REQUIRE(run("synth --config " + ws.p("synth.json") + " --out " + ws.p("data")) == 0);
    REQUIRE(fs::exists(ws.p("data/manifest_1.jsonl")));
    REQUIRE(fs::exists(ws.p("data/features_2.emb")));
    REQUIRE(fs::exists(ws.p("data/meta_1.jsonl")));

    // Re-running synth is byte-stable.
    REQUIRE(run("synth --config " + ws.p("synth.json") + " --out " + ws.p("data2")) == 0);
    CHECK(slurp(ws.p("data/features_1.emb")) == slurp(ws.p("data2/features_1.emb")));
    CHECK(slurp(ws.p("data/manifest_1.jsonl")) == slurp(ws.p("data2/manifest_1.jsonl")));

    REQUIRE(run("merge --manifest 1:" + ws.p("data/manifest_1.jsonl") + " --manifest 2:" +
                ws.p("data/manifest_2.jsonl") + " --out " + ws.p("space.json")) == 0);
    json space = json::parse(slurp(ws.p("space.json")));
    CHECK(space["version"] == "v1");
    CHECK(space["total_classes"] == 12);

    write_train_config(ws.p("train1.json"), 6, 4);
    REQUIRE(run("train --stage 1 --manifest 1:" + ws.p("data/manifest_1.jsonl") +
                " --manifest 2:" + ws.p("data/manifest_2.jsonl") + " --features 1:" +
                ws.p("data/features_1.emb") + " --features 2:" + ws.p("data/features_2.emb") +
                " --config " + ws.p("train1.json") + " --out " + ws.p("stage1.ckpt") +
                " --space-out " + ws.p("stage1_space.json") + " --log " + ws.p("stage1.csv")) == 0);
    REQUIRE(fs::exists(ws.p("stage1.ckpt")));
    std::string stage1_bytes = slurp(ws.p("stage1.ckpt"));

    write_train_config(ws.p("train2.json"), 3, 2);
    REQUIRE(run("train --stage 2 --manifest 1:" + ws.p("data/manifest_1.jsonl") +
                " --features 1:" + ws.p("data/features_1.emb") + " --config " +
                ws.p("train2.json") + " --resume " + ws.p("stage1.ckpt") + " --out " +
                ws.p("stage2.ckpt") + " --log " + ws.p("stage2.csv")) == 0);
    // Stage 2 never mutates the stage-1 checkpoint on disk.
    CHECK(slurp(ws.p("stage1.ckpt")) == stage1_bytes);

    // Stage 2 without --resume is a config error.
    CHECK(run("train --stage 2 --manifest 1:" + ws.p("data/manifest_1.jsonl") + " --features 1:" +
              ws.p("data/features_1.emb") + " --out " + ws.p("nope.ckpt")) == 2);

    REQUIRE(run("embed --ckpt " + ws.p("stage2.ckpt") + " --features " +
                ws.p("data/features_1.emb") + " --meta " + ws.p("data/meta_1.jsonl") + " --out " +
                ws.p("embedded.emb") + " --out-meta " + ws.p("embedded.jsonl")) == 0);

    REQUIRE(run("rank --query " + ws.p("embedded.emb") + " --gallery " + ws.p("embedded.emb") +
                " --out " + ws.p("ranking.jsonl")) == 0);
    REQUIRE(run("rank --query " + ws.p("embedded.emb") + " --gallery " + ws.p("embedded.emb") +
                " --out " + ws.p("ranking_again.jsonl")) == 0);
    CHECK(slurp(ws.p("ranking.jsonl")) == slurp(ws.p("ranking_again.jsonl")));

    REQUIRE(run("post --query " + ws.p("embedded.emb") + " --query-meta " + ws.p("embedded.jsonl") +
                " --gallery " + ws.p("embedded.emb") + " --gallery-meta " + ws.p("embedded.jsonl") +
                " --steps qe,camver,temporal,rerank --dbscan-eps 0.3 --tau 2000 --k1 8 --k2 3" +
                " --lambda 0.3 --protocol cross-camera --out " + ws.p("post.jsonl") +
                " --report " + ws.p("post_report.json")) == 0);
    json post_report = json::parse(slurp(ws.p("post_report.json")));
    REQUIRE(post_report["steps"].is_array());
    CHECK(post_report["steps"].size() == 5);  // base + 4 steps
    CHECK(post_report["steps"][0]["name"] == "base");
    CHECK(post_report["config"]["k1"] == 8);

    REQUIRE(run("eval --ranking " + ws.p("ranking.jsonl") + " --query-meta " +
                ws.p("embedded.jsonl") + " --gallery-meta " + ws.p("embedded.jsonl") +
                " --k 1,5 --protocol plain --out " + ws.p("eval.json") + " --per-query " +
                ws.p("per_query.csv")) == 0);
    json eval_report = json::parse(slurp(ws.p("eval.json")));
    // Query set == gallery set with self-junk: every remaining match is easy.
    CHECK(eval_report["map"].get<double>() > 0.2);
    CHECK(eval_report["query_count"] == 24);
    std::ifstream pq(ws.p("per_query.csv"));
    std::string header;
    std::getline(pq, header);
    CHECK(header == "query,image_id,ap");

    json ablate_cfg = {
        {"benchmark",
         {{"synth",
           {{"sources", 2}, {"identities_per_source", 6}, {"images_per_identity", 4},
            {"feature_dim", 16}, {"identity_dim", 8}, {"noise_sigma", 0.8}}},
          {"val_class_count", 2},
          {"stage1", {{"epochs", 3}, {"batch_size", 12}}},
          {"stage2", {{"epochs", 2}, {"batch_size", 12}, {"lr", {{"milestones", {1}}}}}}}},
        {"seeds", {1, 2}},
        {"arms",
         {{{"name", "target_only"}, {"two_stage", false}},
          {{"name", "two_stage"}, {"aux_sources", {2}}, {"two_stage", true}},
          {{"name", "two_stage_again"}, {"aux_sources", {2}}, {"two_stage", true}}}}};
    std::ofstream(ws.p("ablate.json")) << ablate_cfg.dump(2);
    REQUIRE(run("ablate --config " + ws.p("ablate.json") + " --out " + ws.p("ablation")) == 0);
    REQUIRE(fs::exists(ws.p("ablation/report.md")));
    REQUIRE(fs::exists(ws.p("ablation/report.csv")));
    std::string report_md = slurp(ws.p("ablation/report.md"));
    CHECK(report_md.find("RFEB") != std::string::npos);  // version info embedded
    CHECK(report_md.find("two_stage") != std::string::npos);

    // Identical arms produce identical metric rows.
    std::string csv = slurp(ws.p("ablation/report.csv"));
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);  // header
    std::map<std::string, std::vector<std::string>> rows;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      auto first_comma = line.find(',');
      std::string arm = line.substr(0, first_comma);
      rows[arm].push_back(line.substr(first_comma + 1));
    }
    CHECK(rows["two_stage"] == rows["two_stage_again"]);
  }

  SUBCASE("ablate with no arms writes a header-only report") {
    json cfg = {{"benchmark",
                 {{"synth",
                   {{"sources", 2}, {"identities_per_source", 4}, {"images_per_identity", 3},
                    {"feature_dim", 8}}},
                  {"val_class_count", 1}}},
                {"seeds", {1}},
                {"arms", json::array()}};
    std::ofstream(ws.p("empty.json")) << cfg.dump(2);
    REQUIRE(run("ablate --config " + ws.p("empty.json") + " --out " + ws.p("empty_out")) == 0);
    std::string md = slurp(ws.p("empty_out/report.md"));
    CHECK(md.find("toolkit=") != std::string::npos);
    CHECK(md.find("Resolved configuration") != std::string::npos);
    std::string csv = slurp(ws.p("empty_out/report.csv"));
    CHECK(csv == "arm,seed,map,rank1\n");
  }

  SUBCASE("version output parses as key=value lines") {
    std::remove("cli_test_stdout.log");
    REQUIRE(run("version") == 0);
    std::istringstream lines(slurp("cli_test_stdout.log"));
    std::string line;
    int kv = 0;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      CHECK(line.find('=') != std::string::npos);
      ++kv;
    }
    CHECK(kv >= 3);
  }

  SUBCASE("error exit codes") {
    CHECK(run("synth --config no_such_file.json --out " + ws.p("x")) == 3);
    std::ofstream(ws.p("bad.json")) << "{\"identities_per_source\": 1}";
    CHECK(run("synth --config " + ws.p("bad.json") + " --out " + ws.p("x")) == 2);
    CHECK(run("rank --query missing.emb --gallery missing.emb --out " + ws.p("r.jsonl")) == 3);
    CHECK(run("definitely-not-a-subcommand") == 2);
  }
}
