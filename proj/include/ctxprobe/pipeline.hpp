// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ctxprobe/corpus.hpp"
#include "ctxprobe/mechanism.hpp"
#include "ctxprobe/report.hpp"
#include "ctxprobe/tracefmt.hpp"

// One function per CLI verb. Stages talk only through files; every output
// goes to a new file under the requested output location.
namespace ctxprobe::pipeline {

namespace fs = std::filesystem;

// Throws Error("missing input: <path>") for the first path that does not exist.
void require_inputs(const std::vector<fs::path> &paths);

// Output file names.
inline constexpr const char *kInstancesFile = "instances.jsonl";
inline constexpr const char *kCurationReportFile = "curation_report.tsv";
inline constexpr const char *kCooccurrenceFile = "cooccurrence.tsv";
inline constexpr const char *kAccuracyByCondition = "accuracy_by_condition.tsv";
inline constexpr const char *kAccuracyByScene = "accuracy_by_scene.tsv";
inline constexpr const char *kConditionalAccuracy = "conditional_accuracy.tsv";
inline constexpr const char *kConsistency = "consistency.tsv";
inline constexpr const char *kPropertyRegression = "property_regression.tsv";
inline constexpr const char *kStabilityCurves = "stability_curves.tsv";
inline constexpr const char *kLogitCurves = "logit_curves.tsv";
inline constexpr const char *kSizeControlled = "size_controlled_regression.tsv";
inline constexpr const char *kManifest = "MANIFEST.tsv";
inline constexpr const char *kProvenance = "provenance.json";

std::vector<std::string> report_files(); // the eight analysis tables

struct CurateArgs {
    fs::path annotations;
    fs::path stats_corpus;
    fs::path out; // directory
    CurationConfig config;
};
struct CurateSummary {
    CurationReport report;
    std::size_t missing_properties = 0;
};
CurateSummary run_curate(const CurateArgs &args);

struct PlanArgs {
    fs::path instances;
    fs::path pool;
    fs::path out; // plan file
    std::uint64_t seed = 42;
};
std::size_t run_plan(const PlanArgs &args);

struct ScoreArgs {
    fs::path plan;
    fs::path responses;
    fs::path out; // trial log
};
struct ScoreSummary {
    std::size_t trials = 0;
    std::size_t unparsed = 0;
    std::size_t missing = 0;
};
ScoreSummary run_score(const ScoreArgs &args);

struct BehaviorArgs {
    fs::path trials;
    fs::path instances;
    fs::path out; // directory
    std::uint64_t seed = 42;
};
void run_behavior(const BehaviorArgs &args, const std::optional<report::Provenance> &prov = {});

struct MechanismArgs {
    fs::path trace;
    fs::path trials;
    std::optional<fs::path> instances; // object sizes and patch-set checks
    fs::path out;                      // directory
    mechanism::GridSpec grid;
    std::string grid_name = "24x24";
    std::size_t permutations = 1000;
    std::uint64_t seed = 42;
};
void run_mechanism(const MechanismArgs &args,
                   const std::optional<report::Provenance> &prov = {});

struct ValidateArgs {
    fs::path trace;
    fs::path plan;
};
trace::ValidationReport run_validate(const ValidateArgs &args);

// Full-pipeline configuration (JSON):
// {"annotations":..,"stats_corpus":..,"pool":..,"responses":..,"trace":..,
//  "seed":42,"grid":"16x16-merged","permutations":1000,
//  "curation":{"occlusion_threshold":..,"min_images":..,"min_area":..,"per_type_cap":..}}
// Relative paths resolve against the config file's directory.
struct RunConfig {
    fs::path annotations;
    fs::path stats_corpus;
    fs::path pool;
    fs::path responses;
    fs::path trace;
    std::uint64_t seed = 42;
    std::string grid = "24x24";
    std::size_t permutations = 1000;
    CurationConfig curation;
    std::string canonical_json; // what the config hash covers
};
RunConfig load_run_config(const fs::path &path);

// `in` is either a run-config file (runs the whole pipeline) or a directory
// that already holds the analysis tables. Writes the eight tables, a
// MANIFEST.tsv of digests and provenance.json into `out`.
void run_report(const fs::path &in, const fs::path &out);

} // namespace ctxprobe::pipeline
