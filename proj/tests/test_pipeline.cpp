// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "ctxprobe/error.hpp"
#include "ctxprobe/pipeline.hpp"
#include "ctxprobe/report.hpp"
#include "ctxprobe/synth.hpp"
#include "support.hpp"

using namespace ctxprobe;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string &args) {
    const std::string cmd = std::string(CTXPROBE_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path &p) { return report::read_text_file(p); }

synth::StudyConfig small_study() {
    synth::StudyConfig cfg;
    cfg.corpus.eval_images = 200;
    cfg.corpus.stats_images = 200;
    cfg.trace.layers = 8;
    cfg.trace.band_first = 3;
    cfg.trace.band_last = 4;
    cfg.permutations = 200;
    return cfg;
}

} // namespace

TEST(Report, Sha256KnownVector) {
    EXPECT_EQ(report::sha256_hex("abc"),
              "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Report, NumberFormatting) {
    EXPECT_EQ(report::format_number(0.0), "0");
    EXPECT_EQ(report::format_number(std::nan("")), "NA");
    EXPECT_EQ(report::format_number(std::optional<double>{}), "NA");
    EXPECT_EQ(report::format_number(0.123456789), "0.123457");
    EXPECT_EQ(report::significance_stars(0.0001), "***");
    EXPECT_EQ(report::significance_stars(0.2), "");
}

TEST(Report, TableRoundTrip) {
    testutil::TempDir dir;
    report::Table t{"demo", "Demo table", {{"a", "first"}, {"b", "second"}}, {}, {"a note"}};
    t.add_row({"1", "x"});
    t.add_row({"2", "y"});
    report::Provenance prov;
    prov.seed = 7;
    prov.config_sha256 = "cafe";
    report::write_table(dir / "demo.tsv", t, prov);
    const auto parsed = report::read_table(dir / "demo.tsv");
    EXPECT_EQ(parsed.header, (std::vector<std::string>{"a", "b"}));
    ASSERT_EQ(parsed.rows.size(), 2u);
    EXPECT_EQ(parsed.rows[1][parsed.column("b")], "y");
    EXPECT_THROW(t.add_row({"only one"}), Error);
}

TEST(Cli, MissingInputFileExitsNonzero) {
    testutil::TempDir dir;
    const std::string out = (dir / "out").string();
    EXPECT_NE(run_cli("curate --annotations /nonexistent/a.jsonl --stats-corpus /nonexistent/b.jsonl --out " + out), 0);
    EXPECT_NE(run_cli("score --plan /nonexistent/p.jsonl --responses /nonexistent/r.jsonl --out " + out + "/t.jsonl"), 0);
    EXPECT_NE(run_cli("mechanism --trace /nonexistent/t.ocpt --trials /nonexistent/t.jsonl --out " + out), 0);
    EXPECT_NE(run_cli("report --in /nonexistent/run.json --out " + out), 0);
    EXPECT_NE(run_cli("bogus"), 0);
    EXPECT_THROW(pipeline::require_inputs({"/nonexistent/x"}), Error);
}

TEST(Cli, StagesRunThroughFiles) {
    testutil::TempDir dir;
    const auto root = dir.path();
    synth::build_planted_study(root / "study", small_study());
    const std::string s = (root / "study").string(), o = (root / "cli").string();
    ASSERT_EQ(run_cli("curate --annotations " + s + "/annotations.jsonl --stats-corpus " + s +
                      "/stats_corpus.jsonl --out " + o),
              0);
    ASSERT_EQ(run_cli("plan --instances " + o + "/instances.jsonl --pool " + s +
                      "/pool.json --out " + o + "/plans.jsonl"),
              0);
    // The engine reproduces the staged plan byte for byte.
    EXPECT_EQ(slurp(root / "cli/plans.jsonl"), slurp(root / "study/stage/plans.jsonl"));
    ASSERT_EQ(run_cli("score --plan " + o + "/plans.jsonl --responses " + s +
                      "/responses.jsonl --out " + o + "/trials.jsonl"),
              0);
    ASSERT_EQ(run_cli("validate --trace " + s + "/trace.ocpt --plan " + o + "/plans.jsonl"), 0);
    ASSERT_EQ(run_cli("behavior --trials " + o + "/trials.jsonl --instances " + o +
                      "/instances.jsonl --out " + o + "/tables"),
              0);
    ASSERT_EQ(run_cli("mechanism --trace " + s + "/trace.ocpt --trials " + o +
                      "/trials.jsonl --instances " + o + "/instances.jsonl --grid 16x16-merged" +
                      " --permutations 100 --out " + o + "/tables"),
              0);
    for (const auto &name : pipeline::report_files()) {
        EXPECT_TRUE(fs::exists(root / "cli/tables" / name)) << name;
    }
    // Wrong grid for the trace is refused.
    EXPECT_NE(run_cli("mechanism --trace " + s + "/trace.ocpt --trials " + o +
                      "/trials.jsonl --grid 24x24 --out " + o + "/bad"),
              0);
    ASSERT_EQ(run_cli("report --in " + o + "/tables --out " + o + "/bundle"), 0);
    EXPECT_TRUE(fs::exists(root / "cli/bundle/MANIFEST.tsv"));
    EXPECT_TRUE(fs::exists(root / "cli/bundle/provenance.json"));
}

TEST(Cli, ValidateFlagsAForeignPlan) {
    testutil::TempDir dir;
    auto cfg = small_study();
    synth::build_planted_study(dir / "a", cfg);
    cfg.seed = 43;
    cfg.corpus.seed = 43;
    synth::build_planted_study(dir / "b", cfg);
    EXPECT_EQ(run_cli("validate --trace " + (dir / "a/trace.ocpt").string() + " --plan " +
                      (dir / "b/stage/plans.jsonl").string()),
              1);
}

TEST(Determinism, TwoRunsGiveByteIdenticalBundles) {
    testutil::TempDir dir;
    const auto config = synth::build_planted_study(dir / "study", small_study());
    pipeline::run_report(config, dir / "run1");
    pipeline::run_report(config, dir / "run2");
    auto files = pipeline::report_files();
    files.push_back(pipeline::kManifest);
    files.push_back(pipeline::kProvenance);
    for (const auto &name : files) {
        EXPECT_EQ(slurp(dir / "run1" / name), slurp(dir / "run2" / name)) << name;
    }
    // The manifest digests the tables it lists.
    const auto manifest = slurp(dir / "run1" / pipeline::kManifest);
    EXPECT_NE(manifest.find(report::sha256_file(dir / "run1" / pipeline::kLogitCurves)),
              std::string::npos);
}

TEST(Determinism, SeedChangesTheBundle) {
    testutil::TempDir dir;
    auto cfg = small_study();
    const auto config = synth::build_planted_study(dir / "study", cfg);
    pipeline::run_report(config, dir / "run1");
    auto text = slurp(config);
    const auto at = text.find("\"seed\": 42");
    ASSERT_NE(at, std::string::npos);
    text.replace(at, 10, "\"seed\": 41");
    report::write_text_file(dir / "study/run_config_41.json", text);
    pipeline::run_report(dir / "study/run_config_41.json", dir / "run2");
    EXPECT_NE(slurp(dir / "run1" / pipeline::kManifest), slurp(dir / "run2" / pipeline::kManifest));
}

TEST(RunConfig, RelativePathsAndHash) {
    testutil::TempDir dir;
    report::write_text_file(dir / "run.json",
                            R"({"annotations":"a.jsonl","stats_corpus":"s.jsonl","pool":"p.json",)"
                            R"("responses":"r.jsonl","trace":"t.ocpt","seed":7,"grid":"24x24",)"
                            R"("permutations":50,"curation":{"min_images":3}})");
    const auto cfg = pipeline::load_run_config(dir / "run.json");
    EXPECT_EQ(cfg.annotations, dir / "a.jsonl");
    EXPECT_EQ(cfg.seed, 7u);
    EXPECT_EQ(cfg.permutations, 50u);
    EXPECT_EQ(cfg.curation.min_images, 3u);
    EXPECT_FALSE(cfg.canonical_json.empty());
    report::write_text_file(dir / "bad.json", R"({"annotations":"a.jsonl"})");
    EXPECT_THROW(pipeline::load_run_config(dir / "bad.json"), Error);
}
