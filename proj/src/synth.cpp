// SPDX-License-Identifier: Apache-2.0
#include "ctxprobe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <boost/math/distributions/normal.hpp>

#include "ctxprobe/jsonl.hpp"
#include "ctxprobe/pipeline.hpp"
#include "ctxprobe/report.hpp"
#include "ctxprobe/rng.hpp"
#include "ctxprobe/stats.hpp"

namespace ctxprobe::synth {

namespace {

const std::map<std::string, std::vector<std::string>> &pool_entries() {
    static const std::map<std::string, std::vector<std::string>> entries = {
        {"bathroom",
         {"bathtub", "toilet", "shower", "sink", "towel", "toothbrush", "soap", "mirror"}},
        {"bedroom",
         {"bed", "wardrobe", "dresser", "nightstand", "pillow", "blanket", "curtain", "alarm clock"}},
        {"kitchen",
         {"refrigerator", "stove", "dishwasher", "oven", "microwave", "kettle", "toaster",
          "cutting board"}},
        {"living room",
         {"sofa", "fireplace", "bookshelf", "armchair", "television", "coffee table", "rug",
          "cushion"}},
        {"coast", {"pier", "lighthouse", "boat", "sand", "surfboard", "seagull", "umbrella", "shell"}},
        {"forest", {"tree trunk", "log", "stump", "fern", "mushroom", "moss", "deer", "trail"}},
        {"mountain", {"cliff", "glacier", "boulder", "peak", "snow", "pine", "goat", "cable car"}},
        {"skyline",
         {"skyscraper", "tower", "bridge", "crane", "billboard", "antenna", "helicopter",
          "streetlight"}},
    };
    return entries;
}

// Labels shared across scenes, so specificity varies.
const std::map<std::string, std::vector<std::string>> &shared_labels() {
    static const std::map<std::string, std::vector<std::string>> extra = {
        {"bathroom", {"window"}},
        {"bedroom", {"chair", "window", "lamp"}},
        {"kitchen", {"chair", "window"}},
        {"living room", {"chair", "lamp", "window"}},
        {"coast", {"rock", "tree"}},
        {"forest", {"rock"}},
        {"mountain", {"tree", "rock"}},
        {"skyline", {"tree"}},
    };
    return extra;
}

constexpr std::size_t kAnchorsPerScene = 3;

std::vector<std::string> vocabulary(const std::string &scene) {
    auto v = pool_entries().at(scene);
    const auto &extra = shared_labels().at(scene);
    v.insert(v.end(), extra.begin(), extra.end());
    return v;
}

std::size_t weighted_index(CounterRng &rng, const std::vector<double> &w) {
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (u < w[i]) return i;
        u -= w[i];
    }
    return w.size() - 1;
}

struct Rect {
    std::size_t r0, c0, r1, c1;
};

Rect random_rect(CounterRng &rng, std::size_t h, std::size_t w, double area) {
    const double aspect = 0.6 + rng.uniform();
    auto rh = static_cast<std::size_t>(std::lround(std::sqrt(area * h * w * aspect)));
    auto rw = static_cast<std::size_t>(std::lround(area * h * w / std::max<double>(rh, 1)));
    rh = std::clamp<std::size_t>(rh, 1, h);
    rw = std::clamp<std::size_t>(rw, 1, w);
    const std::size_t r0 = rng.below(h - rh + 1);
    const std::size_t c0 = rng.below(w - rw + 1);
    return {r0, c0, r0 + rh, c0 + rw};
}

BinaryMask rect_mask(std::size_t h, std::size_t w, const Rect &r) {
    BinaryMask m(h, w);
    m.fill_rect(r.r0, r.c0, r.r1, r.c1);
    return m;
}

double normal_quantile(double p) {
    static const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, p);
}

// Stratified standard-normal scores for a group of n, in random order.
std::vector<double> stratified_scores(std::size_t n, CounterRng &rng) {
    std::vector<double> z(n);
    for (std::size_t k = 0; k < n; ++k) {
        z[k] = normal_quantile((static_cast<double>(k) + 0.5) / static_cast<double>(n));
    }
    rng.shuffle(std::span<double>(z));
    return z;
}

// value[i] for every member of the two groups defined by `correct`.
std::vector<double> planted_values(const std::vector<int> &correct, double base, double sd,
                                   double shift, CounterRng &rng) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < correct.size(); ++i) (correct[i] ? pos : neg).push_back(i);
    std::vector<double> out(correct.size());
    const auto zp = stratified_scores(pos.size(), rng);
    const auto zn = stratified_scores(neg.size(), rng);
    for (std::size_t k = 0; k < pos.size(); ++k) out[pos[k]] = base + sd * zp[k] + shift;
    for (std::size_t k = 0; k < neg.size(); ++k) out[neg[k]] = base + sd * zn[k];
    return out;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string format_response(CounterRng &rng, const PromptOption &o) {
    switch (rng.below(4)) {
    case 0:
        return std::to_string(o.index) + ". " + o.label;
    case 1:
        return "The answer is " + o.label + ".";
    case 2:
        return std::to_string(o.index);
    default:
        return o.label;
    }
}

} // namespace

DistractorPool default_pool() { return DistractorPool(pool_entries()); }

std::vector<trace::LabelEntry> default_label_table() {
    std::vector<trace::LabelEntry> out;
    std::uint32_t token = 1000;
    for (const auto &s : default_categories()) out.push_back({s, token++});
    out.push_back({"indoor", token++});
    out.push_back({"outdoor", token++});
    return out;
}

Corpus make_corpus(const CorpusConfig &config) {
    Corpus corpus;
    const auto categories = default_categories();
    static const std::size_t dims[][2] = {{120, 160}, {160, 120}, {128, 128}, {96, 144}};

    CounterRng rng(config.seed);
    for (std::size_t i = 0; i < config.eval_images; ++i) {
        Annotation a;
        a.image_id = "img" + std::to_string(100000 + i);
        const auto &d = dims[rng.below(4)];
        a.height = d[0];
        a.width = d[1];
        a.scene = rng.bernoulli(0.03) ? "office" : categories[rng.below(categories.size())];
        const auto vocab = vocabulary(a.scene == "office" ? "living room" : a.scene);

        std::vector<double> anchor_w, local_w;
        for (std::size_t k = 0; k < vocab.size(); ++k) {
            (k < kAnchorsPerScene ? anchor_w : local_w).push_back(1.0 / (1.0 + k % 6));
        }
        const std::size_t anchor = weighted_index(rng, anchor_w);
        const Rect anchor_rect = random_rect(rng, a.height, a.width, 0.05 + 0.35 * rng.uniform());
        a.objects.push_back({vocab[anchor], ObjectType::anchor,
                             rect_mask(a.height, a.width, anchor_rect), ""});

        std::set<std::size_t> used;
        const std::size_t locals = 1 + rng.below(3);
        for (std::size_t j = 0; j < locals; ++j) {
            const std::size_t k = kAnchorsPerScene + weighted_index(rng, local_w);
            if (!used.insert(k).second) continue;
            AnnotatedObject o{vocab[k], ObjectType::local, std::nullopt, ""};
            if (!rng.bernoulli(0.03)) {
                o.mask = rect_mask(a.height, a.width,
                                   random_rect(rng, a.height, a.width, 0.03 + 0.22 * rng.uniform()));
            }
            a.objects.push_back(std::move(o));
        }
        if (rng.bernoulli(0.04)) {
            // An occluder covering the whole anchor.
            const std::size_t k = kAnchorsPerScene + rng.below(vocab.size() - kAnchorsPerScene);
            if (used.insert(k).second) {
                a.objects.push_back({vocab[k], ObjectType::local,
                                     rect_mask(a.height, a.width, anchor_rect), ""});
            }
        }
        corpus.eval.push_back(std::move(a));
    }

    std::vector<std::string> all_labels;
    for (const auto &s : categories) {
        for (const auto &l : vocabulary(s)) all_labels.push_back(l);
    }
    std::sort(all_labels.begin(), all_labels.end());
    all_labels.erase(std::unique(all_labels.begin(), all_labels.end()), all_labels.end());

    for (std::size_t i = 0; i < config.stats_images; ++i) {
        Annotation a;
        a.image_id = "stat" + std::to_string(100000 + i);
        a.height = 64;
        a.width = 64;
        a.scene = categories[rng.below(categories.size())];
        const auto vocab = vocabulary(a.scene);
        std::set<std::string> present;
        for (std::size_t k = 0; k < vocab.size(); ++k) {
            if (rng.bernoulli(0.9 * std::pow(0.8, static_cast<double>(k % 8)))) {
                present.insert(vocab[k]);
            }
        }
        for (const auto &l : all_labels) {
            if (!present.contains(l) && rng.bernoulli(0.04)) present.insert(l);
        }
        for (const auto &l : present) a.objects.push_back({l, ObjectType::local, std::nullopt, ""});
        corpus.stats.push_back(std::move(a));
    }
    return corpus;
}

std::vector<std::pair<std::string, ResponseEntry>>
mock_responses(std::span<const PromptPlan> plans, std::span<const ObjectInstance> instances,
               const BehaviorModel &model) {
    std::vector<const ObjectInstance *> with_props;
    for (const auto &inst : instances) {
        if (inst.properties) with_props.push_back(&inst);
    }
    std::map<std::string, double> linear;
    if (with_props.size() >= 2) {
        std::vector<double> f, s, z;
        for (const auto *inst : with_props) {
            f.push_back(inst->properties->frequency);
            s.push_back(inst->properties->specificity);
            z.push_back(inst->properties->size);
        }
        const auto zf = stats::zscore(f), zs = stats::zscore(s), zz = stats::zscore(z);
        for (std::size_t i = 0; i < with_props.size(); ++i) {
            linear[with_props[i]->instance_id] =
                model.frequency * zf[i] + model.specificity * zs[i] + model.size * zz[i] +
                model.type * with_props[i]->properties->type_indicator;
        }
    }

    std::vector<std::pair<std::string, ResponseEntry>> out;
    for (std::size_t i = 0; i < plans.size(); ++i) {
        const auto &p = plans[i];
        CounterRng rng = CounterRng::substream(model.seed, i);
        double pc = model.full_scene_accuracy;
        if (p.condition == Condition::object_only) {
            if (p.task == Task::object) {
                pc = model.object_accuracy;
            } else {
                const auto it = linear.find(p.instance_id);
                const double eta = model.intercept + (it == linear.end() ? 0.0 : it->second) +
                                   (p.task == Task::superordinate ? model.superordinate_offset : 0);
                pc = logistic(eta);
            }
        }
        const bool correct = rng.bernoulli(pc);
        std::string text;
        if (rng.bernoulli(model.unparseable_rate)) {
            text = "I cannot tell from this image.";
        } else if (correct || p.options.size() < 2) {
            text = format_response(rng, p.options[static_cast<std::size_t>(p.correct_index - 1)]);
        } else {
            std::size_t k = rng.below(p.options.size() - 1);
            if (k >= static_cast<std::size_t>(p.correct_index - 1)) ++k;
            text = format_response(rng, p.options[k]);
        }
        out.emplace_back(p.trial_id, ResponseEntry{text, std::nullopt});
    }
    return out;
}

trace::TraceFile synthetic_trace(std::span<const PromptPlan> plans,
                                 std::span<const ObjectInstance> instances,
                                 std::span<const TrialRecord> trials, const TraceConfig &cfg) {
    cfg.grid.validate();
    trace::TraceFile file;
    auto &h = file.header;
    h.flags = trace::kFlagReduced | (cfg.raw ? trace::kFlagRaw : 0) |
              (cfg.full_grid_logits ? trace::kFlagFullGridLogits : 0);
    h.grid_rows = static_cast<std::uint16_t>(cfg.grid.grid_rows);
    h.grid_cols = static_cast<std::uint16_t>(cfg.grid.grid_cols);
    h.layer_count = cfg.layers;
    h.hidden_dim = cfg.raw ? cfg.hidden_dim : 0;
    h.labels = default_label_table();
    const std::size_t nlabels = h.labels.size();

    std::map<std::string, const ObjectInstance *> by_id;
    for (const auto &inst : instances) by_id[inst.instance_id] = &inst;
    std::map<std::string, std::map<Task, bool>> correct;
    for (const auto &t : trials) {
        if (t.condition == Condition::object_only) correct[t.instance_id][t.task] = t.correct_normal;
    }

    // Instances in plan order.
    std::vector<const ObjectInstance *> order;
    std::vector<std::vector<std::uint32_t>> patches;
    std::set<std::string> seen;
    for (const auto &p : plans) {
        if (!seen.insert(p.instance_id).second) continue;
        const auto it = by_id.find(p.instance_id);
        if (it == by_id.end()) continue;
        order.push_back(it->second);
        patches.push_back(mechanism::project_mask_to_patch_set(it->second->mask, cfg.grid));
    }
    const std::size_t n = order.size();
    // Only instances with a non-empty patch set enter the analyses, so the
    // groups are stratified over those.
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < n; ++i) {
        if (!patches[i].empty()) active.push_back(i);
    }
    auto group = [&](Task task) {
        std::vector<int> g;
        for (const auto i : active) {
            const auto it = correct.find(order[i]->instance_id);
            g.push_back(it != correct.end() && it->second.contains(task) && it->second.at(task));
        }
        return g;
    };
    const auto g_scene = group(Task::scene);
    const auto g_super = group(Task::superordinate);

    // values[layer][instance]; inactive instances keep the base value.
    const std::size_t layers = cfg.layers;
    std::vector<std::vector<double>> cosv(layers, std::vector<double>(n, cfg.cosine_base));
    auto scene_logit = std::vector<std::vector<double>>(layers, std::vector<double>(n, 0.0));
    auto super_logit = scene_logit;
    auto scatter = [&](std::vector<double> &dst, const std::vector<double> &src) {
        for (std::size_t k = 0; k < active.size(); ++k) dst[active[k]] = src[k];
    };
    for (std::size_t l = 0; l < layers; ++l) {
        const bool band = l >= cfg.band_first && l <= cfg.band_last;
        CounterRng rng = CounterRng::substream(cfg.seed, l);
        auto c = planted_values(g_scene, cfg.cosine_base, cfg.cosine_sd,
                                band ? cfg.cosine_shift : 0.0, rng);
        for (auto &v : c) v = std::clamp(v, -1.0, 1.0);
        scatter(cosv[l], c);
        scatter(scene_logit[l], planted_values(g_scene, 0.0, cfg.logit_sd,
                                               band ? cfg.logit_shift * cfg.logit_sd : 0.0, rng));
        scatter(super_logit[l], planted_values(g_super, 0.0, cfg.logit_sd,
                                               band ? cfg.logit_shift * cfg.logit_sd : 0.0, rng));
    }

    CounterRng noise(CounterRng::mix(cfg.seed + 0x5eed));
    for (std::size_t i = 0; i < n; ++i) {
        const auto *inst = order[i];
        const auto &pset = patches[i];
        const std::size_t p = pset.size();
        const std::size_t rows = cfg.full_grid_logits ? h.grid_cells() : p;
        const std::size_t scene_col = *h.label_column(inst->scene);
        const std::size_t super_col = *h.label_column(to_string(inst->superordinate));

        // Logit rows that carry the planted value: the first three object patches.
        std::vector<std::size_t> strong;
        for (std::size_t k = 0; k < std::min<std::size_t>(3, p); ++k) {
            strong.push_back(cfg.full_grid_logits ? pset[k] : k);
        }

        trace::TrialTrace full, object;
        full.trial_id = image_trial_key(inst->instance_id, Condition::full_scene);
        full.condition = Condition::full_scene;
        object.trial_id = image_trial_key(inst->instance_id, Condition::object_only);
        object.condition = Condition::object_only;
        full.patch_indices = object.patch_indices = pset;

        for (std::size_t l = 0; l < layers; ++l) {
            for (auto *rec : {&full, &object}) {
                const std::size_t base = rec->logits.size();
                rec->logits.resize(base + rows * nlabels);
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < nlabels; ++c) {
                        rec->logits[base + r * nlabels + c] =
                            static_cast<float>(-3.0 + noise.normal() * 0.5);
                    }
                }
                const bool is_strong_default = strong.empty();
                for (std::size_t r = 0; r < rows; ++r) {
                    const bool s = std::find(strong.begin(), strong.end(), r) != strong.end();
                    const double off = s || is_strong_default ? 0.0 : -5.0;
                    rec->logits[base + r * nlabels + scene_col] =
                        static_cast<float>(scene_logit[l][i] + off);
                    rec->logits[base + r * nlabels + super_col] =
                        static_cast<float>(super_logit[l][i] + off);
                }
            }
            for (std::size_t k = 0; k < p; ++k) object.cosines.push_back(static_cast<float>(cosv[l][i]));
            if (cfg.raw) {
                const double c = cosv[l][i];
                const std::size_t dim = cfg.hidden_dim;
                for (std::size_t k = 0; k < p; ++k) {
                    std::vector<double> f(dim), g(dim);
                    for (auto &x : f) x = noise.normal();
                    for (auto &x : g) x = noise.normal();
                    const double ff = std::inner_product(f.begin(), f.end(), f.begin(), 0.0);
                    const double fg = std::inner_product(f.begin(), f.end(), g.begin(), 0.0);
                    for (std::size_t d = 0; d < dim; ++d) g[d] -= fg / ff * f[d];
                    const double gg = std::inner_product(g.begin(), g.end(), g.begin(), 0.0);
                    const double nf = std::sqrt(ff), ng = std::sqrt(gg);
                    const double scale_full = 0.5 + noise.uniform() * 2.0;
                    const double scale_obj = 0.5 + noise.uniform() * 2.0;
                    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
                    for (std::size_t d = 0; d < dim; ++d) {
                        full.raw.push_back(static_cast<float>(scale_full * f[d] / nf));
                        object.raw.push_back(
                            static_cast<float>(scale_obj * (c * f[d] / nf + s * g[d] / ng)));
                    }
                }
            }
        }
        file.trials.push_back(std::move(full));
        file.trials.push_back(std::move(object));
    }
    return file;
}

void write_annotations(const std::filesystem::path &path, std::span<const Annotation> annotations) {
    auto out = open_output(path);
    for (const auto &a : annotations) write_jsonl_line(out, annotation_to_json(a));
}

void write_pool(const std::filesystem::path &path, const DistractorPool &pool) {
    OrderedJson j = OrderedJson::object();
    for (const auto &[scene, labels] : pool.entries()) j[scene] = labels;
    report::write_text_file(path, j.dump(2) + "\n");
}

void write_responses(const std::filesystem::path &path,
                     std::span<const std::pair<std::string, ResponseEntry>> responses) {
    auto out = open_output(path);
    for (const auto &[id, entry] : responses) write_response_line(out, id, entry);
}

std::filesystem::path build_planted_study(const std::filesystem::path &dir,
                                          const StudyConfig &config) {
    namespace fs = std::filesystem;
    const auto corpus = make_corpus(config.corpus);
    write_annotations(dir / "annotations.jsonl", corpus.eval);
    write_annotations(dir / "stats_corpus.jsonl", corpus.stats);
    write_pool(dir / "pool.json", default_pool());

    // The engine stages the adapter would consume.
    const fs::path stage = dir / "stage";
    CurationConfig cur;
    cur.seed = config.seed;
    pipeline::run_curate({dir / "annotations.jsonl", dir / "stats_corpus.jsonl", stage, cur});
    pipeline::run_plan({stage / pipeline::kInstancesFile, dir / "pool.json",
                        stage / "plans.jsonl", config.seed});
    const auto instances = read_instances(stage / pipeline::kInstancesFile);
    const auto plans = read_plans(stage / "plans.jsonl");

    write_responses(dir / "responses.jsonl", mock_responses(plans, instances, config.behavior));
    pipeline::run_score({stage / "plans.jsonl", dir / "responses.jsonl", stage / "trials.jsonl"});
    const auto trials = read_trials(stage / "trials.jsonl");

    TraceConfig tc = config.trace;
    tc.grid = mechanism::parse_grid_spec(config.grid_name);
    const auto file = synthetic_trace(plans, instances, trials, tc);
    trace::write_trace(file.header, file.trials, dir / "trace.ocpt");

    OrderedJson run;
    run["annotations"] = "annotations.jsonl";
    run["stats_corpus"] = "stats_corpus.jsonl";
    run["pool"] = "pool.json";
    run["responses"] = "responses.jsonl";
    run["trace"] = "trace.ocpt";
    run["seed"] = config.seed;
    run["grid"] = config.grid_name;
    run["permutations"] = config.permutations;
    report::write_text_file(dir / "run_config.json", run.dump(2) + "\n");
    return dir / "run_config.json";
}

} // namespace ctxprobe::synth
