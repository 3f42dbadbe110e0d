// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ctxprobe/error.hpp"
#include "ctxprobe/pipeline.hpp"

using namespace ctxprobe;
namespace fs = std::filesystem;

int main(int argc, char **argv) {
    CLI::App app{"ctxprobe: scene-context probing pipeline"};
    app.require_subcommand(1);

    // curate
    pipeline::CurateArgs curate;
    std::string ann, stats_corpus, curate_out;
    auto *c = app.add_subcommand("curate", "filter annotations into evaluation instances");
    c->add_option("--annotations", ann, "annotation JSONL")->required();
    c->add_option("--stats-corpus", stats_corpus, "annotation JSONL for object statistics")
        ->required();
    c->add_option("--seed", curate.config.seed, "sampling seed");
    c->add_option("--out", curate_out, "output directory")->required();
    c->add_option("--occlusion-threshold", curate.config.occlusion_threshold);
    c->add_option("--min-images", curate.config.min_images);
    c->add_option("--min-area", curate.config.min_area);
    c->add_option("--per-type-cap", curate.config.per_type_cap);

    // plan
    pipeline::PlanArgs plan;
    std::string plan_instances, plan_pool, plan_out;
    auto *p = app.add_subcommand("plan", "build forced-choice prompt plans");
    p->add_option("--instances", plan_instances)->required();
    p->add_option("--pool", plan_pool, "distractor pool JSON")->required();
    p->add_option("--seed", plan.seed);
    p->add_option("--out", plan_out, "plan JSONL")->required();

    // score
    std::string score_plan, score_responses, score_out;
    auto *s = app.add_subcommand("score", "parse and score responses");
    s->add_option("--plan", score_plan)->required();
    s->add_option("--responses", score_responses)->required();
    s->add_option("--out", score_out, "trial log JSONL")->required();

    // behavior
    pipeline::BehaviorArgs behavior;
    std::string beh_trials, beh_instances, beh_out;
    auto *b = app.add_subcommand("behavior", "accuracy, conditional, consistency and regression tables");
    b->add_option("--trials", beh_trials)->required();
    b->add_option("--instances", beh_instances)->required();
    b->add_option("--seed", behavior.seed);
    b->add_option("--out", beh_out, "output directory")->required();

    // mechanism
    pipeline::MechanismArgs mech;
    std::string mech_trace, mech_trials, mech_instances, mech_out, grid_spec;
    auto *m = app.add_subcommand("mechanism", "stability, logit-lens and size-controlled analyses");
    m->add_option("--trace", mech_trace)->required();
    m->add_option("--trials", mech_trials)->required();
    m->add_option("--instances", mech_instances, "curated instances (object sizes)");
    m->add_option("--grid", mech.grid_name, "24x24 | 16x16-merged | custom")
        ->default_val("24x24");
    m->add_option("--grid-spec", grid_spec,
                  "with --grid custom: <input>:<rows>x<cols>:<cell>:<pad|resize>:<merge>");
    m->add_option("--permutations", mech.permutations)->default_val(1000);
    m->add_option("--seed", mech.seed)->default_val(42);
    m->add_option("--out", mech_out, "output directory")->required();

    // report
    std::string report_in, report_out;
    auto *r = app.add_subcommand("report", "assemble a report bundle");
    r->add_option("--in", report_in, "run config JSON or a directory of tables")->required();
    r->add_option("--out", report_out, "bundle directory")->required();

    // validate
    std::string val_trace, val_plan;
    auto *v = app.add_subcommand("validate", "check a trace file against a plan");
    v->add_option("--trace", val_trace)->required();
    v->add_option("--plan", val_plan)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (c->parsed()) {
            curate.annotations = ann;
            curate.stats_corpus = stats_corpus;
            curate.out = curate_out;
            const auto sum = pipeline::run_curate(curate);
            std::cout << "curated " << sum.report.output_instances << " instances from "
                      << sum.report.input_images << " images";
            if (sum.missing_properties) {
                std::cout << " (" << sum.missing_properties << " without object statistics)";
            }
            std::cout << "\n";
        } else if (p->parsed()) {
            plan.instances = plan_instances;
            plan.pool = plan_pool;
            plan.out = plan_out;
            std::cout << "wrote " << pipeline::run_plan(plan) << " prompts\n";
        } else if (s->parsed()) {
            const auto sum = pipeline::run_score({score_plan, score_responses, score_out});
            std::cout << "scored " << sum.trials << " trials (" << sum.unparsed << " unparsed, "
                      << sum.missing << " without a response)\n";
        } else if (b->parsed()) {
            behavior.trials = beh_trials;
            behavior.instances = beh_instances;
            behavior.out = beh_out;
            pipeline::run_behavior(behavior);
        } else if (m->parsed()) {
            mech.trace = mech_trace;
            mech.trials = mech_trials;
            if (!mech_instances.empty()) mech.instances = fs::path(mech_instances);
            mech.out = mech_out;
            if (mech.grid_name == "custom") {
                if (grid_spec.empty()) throw Error("--grid custom needs --grid-spec");
                mech.grid = mechanism::parse_grid_spec("custom:" + grid_spec);
            } else {
                mech.grid = mechanism::parse_grid_spec(mech.grid_name);
            }
            pipeline::run_mechanism(mech);
        } else if (r->parsed()) {
            pipeline::run_report(report_in, report_out);
        } else if (v->parsed()) {
            const auto rep = pipeline::run_validate({val_trace, val_plan});
            for (const auto &w : rep.warnings) std::cout << "warning: " << w << "\n";
            for (const auto &i : rep.issues) std::cout << "issue: " << i << "\n";
            std::cout << (rep.clean() ? "trace is consistent with the plan\n"
                                      : std::to_string(rep.issues.size()) + " issue(s)\n");
            return rep.clean() ? EXIT_SUCCESS : EXIT_FAILURE;
        }
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return EXIT_FAILURE;
    }
    return EXIT_SUCCESS;
}
