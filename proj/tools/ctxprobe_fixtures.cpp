// SPDX-License-Identifier: Apache-2.0
// Synthetic inputs for exercising the pipeline without a model.
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "ctxprobe/error.hpp"
#include "ctxprobe/pipeline.hpp"
#include "ctxprobe/synth.hpp"

using namespace ctxprobe;
namespace fs = std::filesystem;

int main(int argc, char **argv) {
    CLI::App app{"ctxprobe-fixtures: synthetic corpora, mock responses and traces"};
    app.require_subcommand(1);

    synth::CorpusConfig corpus;
    std::string corpus_out;
    auto *c = app.add_subcommand("corpus", "annotations, statistics corpus and distractor pool");
    c->add_option("--eval-images", corpus.eval_images);
    c->add_option("--stats-images", corpus.stats_images);
    c->add_option("--seed", corpus.seed);
    c->add_option("--out", corpus_out, "output directory")->required();

    synth::BehaviorModel model;
    std::string resp_plan, resp_instances, resp_out;
    auto *r = app.add_subcommand("respond", "mock responder with a planted logistic model");
    r->add_option("--plan", resp_plan)->required();
    r->add_option("--instances", resp_instances)->required();
    r->add_option("--seed", model.seed);
    r->add_option("--out", resp_out, "responses JSONL")->required();

    synth::TraceConfig tc;
    std::string tr_plan, tr_instances, tr_trials, tr_out, tr_grid = "16x16-merged";
    auto *t = app.add_subcommand("trace", "trace with a planted effect on a layer band");
    t->add_option("--plan", tr_plan)->required();
    t->add_option("--instances", tr_instances)->required();
    t->add_option("--trials", tr_trials, "scored trial log (correctness)")->required();
    t->add_option("--grid", tr_grid);
    t->add_option("--layers", tc.layers);
    t->add_flag("--raw", tc.raw, "also store raw hidden vectors");
    t->add_option("--hidden-dim", tc.hidden_dim);
    t->add_flag("--full-grid-logits", tc.full_grid_logits);
    t->add_option("--seed", tc.seed);
    t->add_option("--out", tr_out, "trace file")->required();

    synth::StudyConfig study;
    std::string study_out;
    auto *s = app.add_subcommand("study", "all inputs of a planted end-to-end run plus run_config.json");
    s->add_option("--seed", study.seed);
    s->add_option("--permutations", study.permutations);
    s->add_option("--out", study_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (c->parsed()) {
            const fs::path out = corpus_out;
            const auto data = synth::make_corpus(corpus);
            synth::write_annotations(out / "annotations.jsonl", data.eval);
            synth::write_annotations(out / "stats_corpus.jsonl", data.stats);
            synth::write_pool(out / "pool.json", synth::default_pool());
        } else if (r->parsed()) {
            pipeline::require_inputs({resp_plan, resp_instances});
            const auto plans = read_plans(resp_plan);
            const auto instances = read_instances(resp_instances);
            synth::write_responses(resp_out, synth::mock_responses(plans, instances, model));
        } else if (t->parsed()) {
            pipeline::require_inputs({tr_plan, tr_instances, tr_trials});
            tc.grid = mechanism::parse_grid_spec(tr_grid);
            const auto file = synth::synthetic_trace(read_plans(tr_plan), read_instances(tr_instances),
                                                     read_trials(tr_trials), tc);
            trace::write_trace(file.header, file.trials, tr_out);
        } else if (s->parsed()) {
            study.behavior.seed = study.seed;
            study.corpus.seed = study.seed;
            study.trace.seed = study.seed;
            std::cout << synth::build_planted_study(study_out, study).string() << "\n";
        }
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return EXIT_FAILURE;
    }
    return EXIT_SUCCESS;
}
