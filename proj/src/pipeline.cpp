// SPDX-License-Identifier: Apache-2.0
#include "ctxprobe/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ctxprobe/error.hpp"
#include "ctxprobe/jsonl.hpp"
#include "ctxprobe/protocol.hpp"
#include "ctxprobe/scoring.hpp"
#include "ctxprobe/stats.hpp"

namespace ctxprobe::pipeline {

namespace {

using report::format_number;
using report::Provenance;
using report::Column;
using report::Table;

std::string yes_no(bool b) { return b ? "yes" : "no"; }

Provenance command_provenance(std::string_view command, std::uint64_t seed,
                              const std::vector<fs::path> &inputs, OrderedJson extra = {}) {
    Provenance p;
    p.seed = seed;
    OrderedJson cfg;
    cfg["command"] = command;
    cfg["seed"] = seed;
    cfg["inputs"] = OrderedJson::array();
    for (const auto &in : inputs) {
        p.add_input(in);
        cfg["inputs"].push_back(in.filename().string());
    }
    if (!extra.is_null()) cfg["parameters"] = std::move(extra);
    p.config_sha256 = report::sha256_hex(cfg.dump());
    return p;
}

CooccurrenceTable association_from_trials(std::span<const TrialRecord> trials) {
    std::map<std::string, std::pair<std::string, std::set<std::string>>> images;
    for (const auto &t : trials) {
        auto &e = images[t.image_id];
        e.first = t.scene;
        e.second.insert(t.target_object_label);
    }
    CooccurrenceTable table;
    for (const auto &[image, e] : images) {
        const std::vector<std::string> labels(e.second.begin(), e.second.end());
        table.add_image(e.first, labels);
    }
    return table;
}

const std::vector<Column> &regression_columns() {
    static const std::vector<Column> cols = {
        {"estimate", "log-odds coefficient"},
        {"std_error", "Wald standard error from the inverse Fisher information"},
        {"z", "estimate / std_error"},
        {"p", "two-sided normal p-value"},
        {"ci95_low", "estimate - 1.96 std_error"},
        {"ci95_high", "estimate + 1.96 std_error"},
        {"stars", "* p<.05, ** p<.01, *** p<.001"},
        {"converged", "IRLS converged"},
        {"separation", "separation suspected (singular or diverging fit)"},
        {"n", "observations"},
    };
    return cols;
}

void add_fit_rows(Table &t, const std::vector<std::string> &prefix,
                  const stats::RegressionFit &fit) {
    for (const auto &c : fit.coefficients) {
        std::vector<std::string> row = prefix;
        row.push_back(c.name);
        for (double v :
             {c.estimate, c.standard_error, c.z_statistic, c.p_value, c.ci95_low, c.ci95_high}) {
            row.push_back(format_number(v));
        }
        row.push_back(report::significance_stars(c.p_value));
        row.push_back(yes_no(fit.converged));
        row.push_back(yes_no(fit.separation));
        row.push_back(std::to_string(fit.observations));
        t.add_row(std::move(row));
    }
}

std::map<std::string, ObjectInstance> index_instances(std::vector<ObjectInstance> instances) {
    std::map<std::string, ObjectInstance> out;
    for (auto &inst : instances) {
        const std::string id = inst.instance_id;
        if (!out.emplace(id, std::move(inst)).second) {
            throw ValidationError("duplicate instance " + id);
        }
    }
    return out;
}

// --- behavior tables ----------------------------------------------------------

Table accuracy_by_condition_table(std::span<const TrialRecord> trials) {
    Table t;
    t.name = "accuracy_by_condition";
    t.title = "forced-choice accuracy per task and viewing condition";
    t.columns = {{"task", "scene | superordinate | object"},
                 {"condition", "full_scene | object_only"},
                 {"measure", "normal (exact match) | relaxed (scene co-occurs with object)"},
                 {"accuracy", "fraction correct"},
                 {"sem", "sqrt(p(1-p)/n)"},
                 {"n", "trials"}};
    std::vector<std::string> expected;
    for (Task task : kTasks) {
        for (Condition c : kConditions) {
            expected.push_back(std::string(to_string(task)) + "/" + std::string(to_string(c)));
        }
    }
    const auto summary = accuracy_summary(trials, Grouping::task_condition, expected);
    for (const auto &r : summary.rows) {
        const auto slash = r.group.find('/');
        t.add_row({r.group.substr(0, slash), r.group.substr(slash + 1), r.measure,
                   format_number(r.accuracy), format_number(r.sem), std::to_string(r.n)});
    }
    t.notes = summary.notes;
    return t;
}

Table accuracy_by_scene_table(std::span<const TrialRecord> trials,
                              const std::vector<std::string> &categories) {
    Table t;
    t.name = "accuracy_by_scene";
    t.title = "accuracy broken down by ground-truth scene and by its superordinate";
    t.columns = {{"condition", "full_scene | object_only"},
                 {"task", "scene | superordinate | object"},
                 {"grouping", "scene | superordinate"},
                 {"group", "ground-truth scene category or indoor/outdoor"},
                 {"measure", "normal | relaxed"},
                 {"accuracy", "fraction correct"},
                 {"sem", "sqrt(p(1-p)/n)"},
                 {"n", "trials"}};
    const std::vector<std::string> supers = {"indoor", "outdoor"};
    for (Condition c : kConditions) {
        for (Task task : kTasks) {
            std::vector<TrialRecord> subset;
            for (const auto &tr : trials) {
                if (tr.condition == c && tr.task == task) subset.push_back(tr);
            }
            for (const auto &[grouping, name, expected] :
                 {std::tuple{Grouping::scene, "scene", &categories},
                  std::tuple{Grouping::superordinate, "superordinate", &supers}}) {
                const auto summary = accuracy_summary(subset, grouping, *expected);
                for (const auto &r : summary.rows) {
                    t.add_row({std::string(to_string(c)), std::string(to_string(task)), name,
                               r.group, r.measure, format_number(r.accuracy),
                               format_number(r.sem), std::to_string(r.n)});
                }
                for (const auto &n : summary.notes) {
                    t.notes.push_back(std::string(to_string(c)) + "/" +
                                      std::string(to_string(task)) + ": " + n);
                }
            }
        }
    }
    return t;
}

Table conditional_table(std::span<const TrialRecord> trials) {
    Table t;
    t.name = "conditional_accuracy";
    t.title = "object-only accuracy conditioned on the same instance's object-task outcome";
    t.columns = {{"measure", "scene | scene_relaxed | superordinate"},
                 {"acc_object_correct", "accuracy where the object task was correct"},
                 {"n_object_correct", "instances"},
                 {"acc_object_incorrect", "accuracy where the object task was incorrect"},
                 {"n_object_incorrect", "instances"},
                 {"marginal", "accuracy over both groups"},
                 {"n", "instances"},
                 {"delta_correct", "acc_object_correct - marginal"},
                 {"delta_incorrect", "acc_object_incorrect - marginal"}};
    const auto table = conditional_accuracy_table(trials);
    auto delta = [](const std::optional<double> &a, const std::optional<double> &m) {
        return a && m ? format_number(*a - *m) : std::string("NA");
    };
    for (const auto &r : table.rows) {
        t.add_row({r.measure, format_number(r.object_correct), std::to_string(r.object_correct_n),
                   format_number(r.object_incorrect), std::to_string(r.object_incorrect_n),
                   format_number(r.marginal), std::to_string(r.n),
                   delta(r.object_correct, r.marginal), delta(r.object_incorrect, r.marginal)});
    }
    t.notes.push_back("complete instances: " + std::to_string(table.complete_instances));
    t.notes.push_back("instances missing a task record (excluded): " +
                      std::to_string(table.incomplete_instances));
    return t;
}

Table consistency_table(std::span<const TrialRecord> trials, const CooccurrenceTable &assoc) {
    Table t;
    t.name = "consistency";
    t.title = "object-only cross-task consistency of predictions";
    t.columns = {{"measure", "scene | superordinate"},
                 {"consistency", "fraction of instances whose predicted object occurs in a "
                                 "scene matching the prediction"},
                 {"n", "instances with both predictions parsed"},
                 {"excluded", "instances with an unparsed prediction"}};
    const auto rep = consistency_report(trials, assoc);
    t.add_row({"scene", format_number(rep.scene_consistency), std::to_string(rep.scene_n),
               std::to_string(rep.scene_excluded)});
    t.add_row({"superordinate", format_number(rep.superordinate_consistency),
               std::to_string(rep.superordinate_n), std::to_string(rep.superordinate_excluded)});
    return t;
}

Table property_regression_table(std::span<const TrialRecord> trials,
                                const std::map<std::string, ObjectInstance> &instances) {
    Table t;
    t.name = "property_regression";
    t.title = "object-only accuracy ~ z(frequency) + z(specificity) + z(size) + type (logistic)";
    t.columns = {{"task", "scene | superordinate"}, {"measure", "normal | relaxed"},
                 {"predictor", "intercept | frequency | specificity | size | type"}};
    for (const auto &c : regression_columns()) t.columns.push_back(c);

    struct Spec {
        Task task;
        const char *measure;
    };
    for (const Spec spec : {Spec{Task::scene, "normal"}, Spec{Task::scene, "relaxed"},
                            Spec{Task::superordinate, "normal"}}) {
        std::vector<double> freq, specificity, size, type;
        std::vector<int> y;
        std::size_t missing = 0;
        for (const auto &tr : trials) {
            if (tr.condition != Condition::object_only || tr.task != spec.task) continue;
            const auto it = instances.find(tr.instance_id);
            if (it == instances.end() || !it->second.properties) {
                ++missing;
                continue;
            }
            const auto &p = *it->second.properties;
            freq.push_back(p.frequency);
            specificity.push_back(p.specificity);
            size.push_back(p.size);
            type.push_back(p.type_indicator);
            const bool ok = std::string_view(spec.measure) == "relaxed"
                                ? tr.correct_relaxed.value_or(false)
                                : tr.correct_normal;
            y.push_back(ok ? 1 : 0);
        }
        const std::string label = std::string(to_string(spec.task)) + "/" + spec.measure;
        if (missing > 0) {
            t.notes.push_back(label + ": " + std::to_string(missing) +
                              " trials without object properties excluded");
        }
        try {
            std::vector<std::string> names = {"frequency", "specificity", "size"};
            std::vector<std::vector<double>> cols = {stats::zscore(freq),
                                                     stats::zscore(specificity),
                                                     stats::zscore(size)};
            const bool type_varies =
                std::adjacent_find(type.begin(), type.end(), std::not_equal_to<>()) != type.end();
            if (type_varies) {
                names.push_back("type");
                cols.push_back(type);
            } else {
                t.notes.push_back(label + ": object type is constant; type term dropped");
            }
            const auto fit =
                stats::fit_logistic(stats::DesignMatrix::from_columns(names, cols, y));
            add_fit_rows(t, {std::string(to_string(spec.task)), spec.measure}, fit);
        } catch (const StatsError &e) {
            t.notes.push_back(label + ": not fitted (" + e.what() + ")");
        }
    }
    return t;
}

} // namespace

void require_inputs(const std::vector<fs::path> &paths) {
    for (const auto &p : paths) {
        if (!fs::exists(p)) throw Error("missing input: " + p.string());
    }
}

std::vector<std::string> report_files() {
    return {kAccuracyByCondition, kAccuracyByScene, kConditionalAccuracy, kConsistency,
            kPropertyRegression,  kStabilityCurves, kLogitCurves,         kSizeControlled};
}

CurateSummary run_curate(const CurateArgs &args) {
    require_inputs({args.annotations, args.stats_corpus});
    const auto annotations = ingest_annotations(args.annotations);
    const auto stats_corpus = ingest_annotations(args.stats_corpus);
    auto result = apply_curation(annotations, args.config);
    const auto cooc = build_cooccurrence(stats_corpus);
    CurateSummary summary;
    summary.report = result.report;
    summary.missing_properties = attach_properties(result.instances, cooc);

    fs::create_directories(args.out);
    {
        auto out = open_output(args.out / kInstancesFile);
        write_instances(out, result.instances);
    }
    {
        auto out = open_output(args.out / kCurationReportFile);
        write_curation_report(out, result.report, args.config);
        out << "# instances without object statistics\t" << summary.missing_properties << "\n";
    }
    {
        auto out = open_output(args.out / kCooccurrenceFile);
        write_cooccurrence(out, cooc);
    }
    return summary;
}

std::size_t run_plan(const PlanArgs &args) {
    require_inputs({args.instances, args.pool});
    const auto instances = read_instances(args.instances);
    const auto pool = read_distractor_pool(args.pool);
    PlanConfig cfg;
    cfg.seed = args.seed;
    const auto plans = build_prompt_plan(instances, pool, cfg);
    auto out = open_output(args.out);
    write_plans(out, plans);
    return plans.size();
}

ScoreSummary run_score(const ScoreArgs &args) {
    require_inputs({args.plan, args.responses});
    const auto plans = read_plans(args.plan);
    const auto responses = read_responses(args.responses);
    const auto assoc = association_from_plans(plans);
    const auto trials = score_plans(plans, responses, assoc);
    ScoreSummary s;
    s.trials = trials.size();
    for (const auto &t : trials) {
        if (!t.predicted_label) ++s.unparsed;
        if (!responses.contains(t.trial_id)) ++s.missing;
    }
    auto out = open_output(args.out);
    write_trials(out, trials);
    return s;
}

void run_behavior(const BehaviorArgs &args, const std::optional<Provenance> &prov) {
    require_inputs({args.trials, args.instances});
    const auto trials = read_trials(args.trials);
    const auto instances = index_instances(read_instances(args.instances));
    const Provenance p =
        prov ? *prov : command_provenance("behavior", args.seed, {args.trials, args.instances});
    const auto assoc = association_from_trials(trials);

    fs::create_directories(args.out);
    report::write_table(args.out / kAccuracyByCondition, accuracy_by_condition_table(trials), p);
    report::write_table(args.out / kAccuracyByScene,
                        accuracy_by_scene_table(trials, default_categories()), p);
    report::write_table(args.out / kConditionalAccuracy, conditional_table(trials), p);
    report::write_table(args.out / kConsistency, consistency_table(trials, assoc), p);
    report::write_table(args.out / kPropertyRegression,
                        property_regression_table(trials, instances), p);
}

void run_mechanism(const MechanismArgs &args, const std::optional<Provenance> &prov) {
    std::vector<fs::path> inputs = {args.trace, args.trials};
    if (args.instances) inputs.push_back(*args.instances);
    require_inputs(inputs);
    args.grid.validate();

    const auto file = trace::read_trace(args.trace);
    const auto &h = file.header;
    if (h.grid_rows != args.grid.grid_rows || h.grid_cols != args.grid.grid_cols) {
        throw ValidationError("trace grid " + std::to_string(h.grid_rows) + "x" +
                              std::to_string(h.grid_cols) + " does not match --grid " +
                              args.grid_name);
    }
    const auto trials = read_trials(args.trials);
    std::map<std::string, ObjectInstance> instances;
    if (args.instances) instances = index_instances(read_instances(*args.instances));

    OrderedJson params;
    params["grid"] = args.grid.describe();
    params["permutations"] = args.permutations;
    const Provenance p = prov ? *prov
                              : command_provenance("mechanism", args.seed, inputs, params);

    mechanism::Correctness correctness;
    std::map<Task, std::map<std::string, std::pair<std::string, bool>>> truth;
    for (const auto &t : trials) {
        if (t.condition != Condition::object_only) continue;
        correctness[t.instance_id][t.task] = t.correct_normal;
        truth[t.task][t.instance_id] = {t.truth_label, t.correct_normal};
    }

    std::size_t nan_records = 0;
    for (const auto &t : file.trials) nan_records += t.nan_warning ? 1 : 0;
    std::size_t patch_mismatches = 0;
    std::size_t checked_patch_sets = 0;
    if (!instances.empty()) {
        for (const auto &t : file.trials) {
            const auto it = instances.find(t.instance_id());
            if (it == instances.end()) continue;
            ++checked_patch_sets;
            if (mechanism::project_mask_to_patch_set(it->second.mask, args.grid) !=
                t.patch_indices) {
                ++patch_mismatches;
            }
        }
    }

    // Stability.
    const auto cos = mechanism::stability_cosines(h, file.trials);
    const std::vector<Task> stability_tasks = {Task::scene, Task::superordinate, Task::object};
    const auto curve = mechanism::stability_delta_curve(cos, correctness, stability_tasks,
                                                        args.permutations, args.seed);
    Table st;
    st.name = "stability_curves";
    st.title = "full-scene vs object-only cosine of object-patch hidden states per layer";
    st.columns = {{"task", "task whose object-only correctness splits the trials"},
                  {"layer", "0-based transformer layer"},
                  {"mean_cosine", "mean over instances of the mean patch cosine"},
                  {"delta", "mean cosine of correct minus incorrect trials"},
                  {"p", "two-sided permutation p, (1 + exceedances) / (N + 1)"},
                  {"significant", "p < 0.05"},
                  {"n_correct", "trials"},
                  {"n_incorrect", "trials"},
                  {"small_n", "a group has fewer than 3 trials"}};
    for (const auto &ts : curve.tasks) {
        for (std::size_t l = 0; l < ts.layers.size(); ++l) {
            const auto &d = ts.layers[l];
            st.add_row({std::string(to_string(ts.task)), std::to_string(l),
                        format_number(curve.mean_cosine[l]), format_number(d.delta),
                        format_number(d.p), yes_no(d.p && *d.p < mechanism::kAlpha),
                        std::to_string(d.n_correct), std::to_string(d.n_incorrect),
                        yes_no(d.small_n)});
        }
    }
    st.notes = {
        "overall_mean_cosine (mean over layers of per-layer means): " +
            format_number(curve.overall_mean_cosine),
        "instances with cosines: " + std::to_string(cos.instance_ids.size()),
        "empty patch sets excluded: " + std::to_string(cos.empty_patch_sets),
        "object-only records without usable cosines: " + std::to_string(cos.unpaired),
        "zero-norm patches skipped: " + std::to_string(cos.zero_norm_patches),
        "raw vs reduced cross-checked instances: " + std::to_string(cos.cross_checked) +
            ", max |diff| " + format_number(cos.cross_check_max_abs_diff) + ", over 1e-4: " +
            std::to_string(cos.cross_check_failures),
        "permutations: " + std::to_string(args.permutations),
        "records with NaN payload: " + std::to_string(nan_records),
    };
    if (!instances.empty()) {
        st.notes.push_back("patch sets differing from the projected mask: " +
                           std::to_string(patch_mismatches) + " of " +
                           std::to_string(checked_patch_sets));
    }
    report::write_table(args.out / kStabilityCurves, st, p);

    // Logit lens.
    Table lt;
    lt.name = "logit_curves";
    lt.title = "ROC-AUC of the top-3 patch logit of the correct label vs object-only accuracy";
    lt.columns = {{"task", "scene | superordinate"},
                  {"layer", "0-based transformer layer"},
                  {"auc", "P(correct > incorrect) + 0.5 P(tie)"},
                  {"p", "one-sided Mann-Whitney U p (correct > incorrect)"},
                  {"significant", "p < 0.05"},
                  {"n_correct", "trials"},
                  {"n_incorrect", "trials"}};
    lt.notes.push_back(std::string("top-3 search over ") +
                       (h.full_grid_logits() ? "all image patches" : "object patches"));
    for (Task task : {Task::scene, Task::superordinate}) {
        auto in = mechanism::collect_top3(h, file.trials, truth[task]);
        const std::size_t n_pos = static_cast<std::size_t>(
            std::count(in.correct.begin(), in.correct.end(), 1));
        const std::size_t n_neg = in.correct.size() - n_pos;
        const auto lc = mechanism::layer_auc_curve(task, in.instance_ids, h.layer_count,
                                                   std::move(in.top3), std::move(in.correct));
        const std::string name(to_string(task));
        if (!lc.defined) lt.notes.push_back(name + ": single correctness class, curve undefined");
        if (in.missing_label > 0) {
            lt.notes.push_back(name + ": " + std::to_string(in.missing_label) +
                               " records whose truth label is not in the label table");
        }
        if (in.no_patches > 0) {
            lt.notes.push_back(name + ": " + std::to_string(in.no_patches) +
                               " records with no patches excluded");
        }
        for (std::size_t l = 0; l < lc.per_layer.size(); ++l) {
            const auto &d = lc.per_layer[l];
            lt.add_row({name, std::to_string(l), format_number(d.auc), format_number(d.p),
                        yes_no(d.significant), std::to_string(n_pos), std::to_string(n_neg)});
        }
    }
    report::write_table(args.out / kLogitCurves, lt, p);

    // Size-controlled regression.
    Table rt;
    rt.name = "size_controlled_regression";
    rt.title = "object-only accuracy ~ z(mean-over-layers cosine) + z(size) (logistic)";
    rt.columns = {{"task", "scene | superordinate | object"},
                  {"predictor", "intercept | cosine | size"}};
    for (const auto &c : regression_columns()) rt.columns.push_back(c);
    rt.notes.push_back(instances.empty()
                           ? "size = fraction of grid cells in the object's patch set"
                           : "size = object mask area / image area");
    std::map<std::string, std::size_t> patch_count;
    for (const auto &t : file.trials) {
        if (t.condition == Condition::object_only) {
            patch_count[t.instance_id()] = t.patch_indices.size();
        }
    }
    for (Task task : stability_tasks) {
        std::vector<double> cosine, size;
        std::vector<int> y;
        for (std::size_t i = 0; i < cos.instance_ids.size(); ++i) {
            const auto &id = cos.instance_ids[i];
            const auto ct = correctness.find(id);
            if (ct == correctness.end() || !ct->second.contains(task)) continue;
            double s = 0.0;
            if (!instances.empty()) {
                const auto it = instances.find(id);
                if (it == instances.end()) continue;
                s = it->second.mask.area_fraction();
            } else {
                s = static_cast<double>(patch_count[id]) / static_cast<double>(h.grid_cells());
            }
            cosine.push_back(stats::mean(cos.row(i)));
            size.push_back(s);
            y.push_back(ct->second.at(task) ? 1 : 0);
        }
        try {
            const auto fit = mechanism::size_controlled_fit(cosine, size, y);
            add_fit_rows(rt, {std::string(to_string(task))}, fit);
        } catch (const StatsError &e) {
            rt.notes.push_back(std::string(to_string(task)) + ": not fitted (" + e.what() + ")");
        }
    }
    report::write_table(args.out / kSizeControlled, rt, p);
}

trace::ValidationReport run_validate(const ValidateArgs &args) {
    require_inputs({args.trace, args.plan});
    const auto file = trace::read_trace(args.trace);
    const auto plans = read_plans(args.plan);
    return trace::validate_trace(file.header, file.trials, plans);
}

RunConfig load_run_config(const fs::path &path) {
    require_inputs({path});
    Json j;
    try {
        j = Json::parse(report::read_text_file(path));
    } catch (const Json::exception &e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    const fs::path base = path.parent_path();
    auto resolve = [&](const char *key) {
        if (!j.contains(key)) throw ParseError(path.string() + ": missing \"" + key + "\"");
        fs::path p = j.at(key).get<std::string>();
        return p.is_absolute() ? p : base / p;
    };
    RunConfig c;
    c.annotations = resolve("annotations");
    c.stats_corpus = resolve("stats_corpus");
    c.pool = resolve("pool");
    c.responses = resolve("responses");
    c.trace = resolve("trace");
    c.seed = j.value("seed", std::uint64_t{42});
    c.grid = j.value("grid", std::string("24x24"));
    c.permutations = j.value("permutations", std::size_t{1000});
    c.curation.seed = c.seed;
    if (j.contains("curation")) {
        const auto &cur = j["curation"];
        c.curation.occlusion_threshold =
            cur.value("occlusion_threshold", c.curation.occlusion_threshold);
        c.curation.min_images = cur.value("min_images", c.curation.min_images);
        c.curation.min_area = cur.value("min_area", c.curation.min_area);
        c.curation.per_type_cap = cur.value("per_type_cap", c.curation.per_type_cap);
    }
    OrderedJson canon;
    canon["annotations"] = c.annotations.filename().string();
    canon["stats_corpus"] = c.stats_corpus.filename().string();
    canon["pool"] = c.pool.filename().string();
    canon["responses"] = c.responses.filename().string();
    canon["trace"] = c.trace.filename().string();
    canon["seed"] = c.seed;
    canon["grid"] = c.grid;
    canon["permutations"] = c.permutations;
    canon["curation"] = {{"occlusion_threshold", c.curation.occlusion_threshold},
                         {"min_images", c.curation.min_images},
                         {"min_area", c.curation.min_area},
                         {"per_type_cap", c.curation.per_type_cap}};
    c.canonical_json = canon.dump();
    return c;
}

namespace {

void write_bundle_index(const fs::path &out, const Provenance &p) {
    std::ostringstream manifest;
    manifest << "# ctxprobe report bundle\n";
    manifest << "# seed: " << p.seed << "\n";
    manifest << "# config_sha256: " << p.config_sha256 << "\n";
    manifest << "file\tsha256\n";
    for (const auto &name : report_files()) {
        manifest << name << '\t' << report::sha256_file(out / name) << '\n';
    }
    report::write_text_file(out / kManifest, manifest.str());

    OrderedJson prov;
    prov["seed"] = p.seed;
    prov["config_sha256"] = p.config_sha256;
    prov["inputs"] = OrderedJson::array();
    for (const auto &[name, digest] : p.inputs) {
        prov["inputs"].push_back({{"file", name}, {"sha256", digest}});
    }
    prov["files"] = report_files();
    report::write_text_file(out / kProvenance, prov.dump(2) + "\n");
}

Provenance provenance_from_tables(const fs::path &dir) {
    // Reuse the provenance header of the first table.
    const auto t = report::read_table(dir / report_files().front());
    Provenance p;
    for (const auto &line : t.comments) {
        if (line.starts_with("# seed: ")) p.seed = std::stoull(line.substr(8));
        if (line.starts_with("# config_sha256: ")) p.config_sha256 = line.substr(17);
        if (line.starts_with("# input: ")) {
            const auto rest = line.substr(9);
            const auto sp = rest.find(" sha256=");
            p.inputs.emplace_back(rest.substr(0, sp), rest.substr(sp + 8));
        }
    }
    return p;
}

} // namespace

void run_report(const fs::path &in, const fs::path &out) {
    if (!fs::exists(in)) throw Error("missing input: " + in.string());
    if (fs::is_directory(in)) {
        std::vector<fs::path> tables;
        for (const auto &name : report_files()) tables.push_back(in / name);
        require_inputs(tables);
        fs::create_directories(out);
        if (fs::weakly_canonical(in) != fs::weakly_canonical(out)) {
            for (const auto &name : report_files()) {
                fs::copy_file(in / name, out / name, fs::copy_options::overwrite_existing);
            }
        }
        write_bundle_index(out, provenance_from_tables(out));
        return;
    }

    const RunConfig cfg = load_run_config(in);
    require_inputs({cfg.annotations, cfg.stats_corpus, cfg.pool, cfg.responses, cfg.trace});
    const auto grid = mechanism::parse_grid_spec(cfg.grid);

    Provenance p;
    p.seed = cfg.seed;
    p.config_sha256 = report::sha256_hex(cfg.canonical_json);
    for (const auto &path : {cfg.annotations, cfg.stats_corpus, cfg.pool, cfg.responses,
                             cfg.trace}) {
        p.add_input(path);
    }

    const fs::path work = out / "intermediate";
    run_curate({cfg.annotations, cfg.stats_corpus, work, cfg.curation});
    run_plan({work / kInstancesFile, cfg.pool, work / "plans.jsonl", cfg.seed});
    run_score({work / "plans.jsonl", cfg.responses, work / "trials.jsonl"});
    run_behavior({work / "trials.jsonl", work / kInstancesFile, out, cfg.seed}, p);
    MechanismArgs m;
    m.trace = cfg.trace;
    m.trials = work / "trials.jsonl";
    m.instances = work / kInstancesFile;
    m.out = out;
    m.grid = grid;
    m.grid_name = cfg.grid;
    m.permutations = cfg.permutations;
    m.seed = cfg.seed;
    run_mechanism(m, p);
    write_bundle_index(out, p);
}

} // namespace ctxprobe::pipeline
