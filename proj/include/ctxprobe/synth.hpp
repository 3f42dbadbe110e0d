// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctxprobe/corpus.hpp"
#include "ctxprobe/mechanism.hpp"
#include "ctxprobe/protocol.hpp"
#include "ctxprobe/scoring.hpp"
#include "ctxprobe/tracefmt.hpp"

// Synthetic fixtures: an annotated corpus with a separate statistics corpus,
// a mock responder driven by a planted logistic model, and activation traces
// with a planted layer-band effect.
namespace ctxprobe::synth {

// Eight scene-typical labels per category; also shipped as data/default_pool.json.
DistractorPool default_pool();

struct CorpusConfig {
    std::size_t eval_images = 1000;
    std::size_t stats_images = 800;
    std::uint64_t seed = 42;
};

struct Corpus {
    std::vector<Annotation> eval;
    std::vector<Annotation> stats;
};

Corpus make_corpus(const CorpusConfig &config = {});

struct BehaviorModel {
    // Object-only scene task; the superordinate task adds superordinate_offset.
    double intercept = 0.3;
    double frequency = 1.0;
    double specificity = 0.8;
    double size = 0.6;
    double type = 0.0;
    double superordinate_offset = 0.8;
    double object_accuracy = 0.8;
    double full_scene_accuracy = 0.95;
    double unparseable_rate = 0.01;
    std::uint64_t seed = 42;
};

// Probability that the object-only scene or superordinate prompt of an
// instance is answered correctly, with predictors z-scored over `instances`.
std::vector<std::pair<std::string, ResponseEntry>>
mock_responses(std::span<const PromptPlan> plans, std::span<const ObjectInstance> instances,
               const BehaviorModel &model = {});

struct TraceConfig {
    mechanism::GridSpec grid = mechanism::GridSpec::internvl_16x16_merged();
    std::uint16_t layers = 32;
    std::size_t band_first = 10; // planted effect on layers [band_first, band_last]
    std::size_t band_last = 20;
    double cosine_base = 0.6;
    double cosine_sd = 0.08;
    double cosine_shift = 0.1;
    double logit_sd = 1.0;
    double logit_shift = 1.5; // in units of logit_sd
    bool raw = false;
    std::uint32_t hidden_dim = 16;
    bool full_grid_logits = false;
    std::uint64_t seed = 42;
};

// One full-scene and one object-only record per instance in the plan. Values
// are built from stratified normal quantiles within the correct and incorrect
// groups (object-only scene correctness for cosines; each task's correctness
// for its truth-label logits), so outside the band the groups match; inside it
// the correct group is shifted.
trace::TraceFile synthetic_trace(std::span<const PromptPlan> plans,
                                 std::span<const ObjectInstance> instances,
                                 std::span<const TrialRecord> trials,
                                 const TraceConfig &config = {});

// Label table: the eight scene categories, then indoor and outdoor.
std::vector<trace::LabelEntry> default_label_table();

void write_annotations(const std::filesystem::path &path, std::span<const Annotation> annotations);
void write_pool(const std::filesystem::path &path, const DistractorPool &pool);
void write_responses(const std::filesystem::path &path,
                     std::span<const std::pair<std::string, ResponseEntry>> responses);

struct StudyConfig {
    CorpusConfig corpus;
    BehaviorModel behavior;
    TraceConfig trace;
    std::string grid_name = "16x16-merged";
    std::size_t permutations = 1000;
    std::uint64_t seed = 42;
};

// Writes annotations, statistics corpus, pool, mock responses, a planted trace
// and run_config.json into `dir` (the adapter's side of a run, simulated) and
// returns the run-config path. Intermediate curation/plan/score files go to
// dir/stage.
std::filesystem::path build_planted_study(const std::filesystem::path &dir,
                                          const StudyConfig &config = {});

} // namespace ctxprobe::synth
