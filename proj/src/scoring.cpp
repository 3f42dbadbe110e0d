// SPDX-License-Identifier: Apache-2.0
#include "ctxprobe/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <ostream>
#include <set>

#include "ctxprobe/error.hpp"
#include "ctxprobe/jsonl.hpp"
#include "ctxprobe/stats.hpp"

namespace ctxprobe {

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::optional<int> find_index(std::string_view raw, std::size_t option_count) {
    std::size_t i = 0;
    while (i < raw.size()) {
        if (!std::isdigit(static_cast<unsigned char>(raw[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < raw.size() && std::isdigit(static_cast<unsigned char>(raw[j]))) ++j;
        const bool standalone = (i == 0 || !is_alnum(raw[i - 1])) &&
                                (j == raw.size() || !is_alnum(raw[j]));
        if (standalone && j - i <= 6) {
            const int value = std::stoi(std::string(raw.substr(i, j - i)));
            if (value >= 1 && static_cast<std::size_t>(value) <= option_count) return value;
        }
        i = j;
    }
    return std::nullopt;
}

std::optional<std::string> find_label(std::string_view raw, std::span<const PromptOption> options) {
    std::vector<const PromptOption *> order;
    for (const auto &o : options) order.push_back(&o);
    std::stable_sort(order.begin(), order.end(), [](const PromptOption *a, const PromptOption *b) {
        return a->label.size() > b->label.size();
    });
    const std::string haystack = lower(raw);
    for (const auto *o : order) {
        if (!o->label.empty() && haystack.find(lower(o->label)) != std::string::npos) {
            return o->label;
        }
    }
    return std::nullopt;
}

std::optional<std::string> opt_string(const Json &j, const char *key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<std::string>();
}

} // namespace

ParsedResponse parse_response(std::string_view raw, std::span<const PromptOption> options) {
    ParsedResponse r;
    r.index = find_index(raw, options.size());
    r.label = find_label(raw, options);
    if (r.index) {
        r.predicted = options[static_cast<std::size_t>(*r.index - 1)].label;
    } else if (r.label) {
        r.predicted = r.label;
    }
    return r;
}

TrialRecord score_trial(const PromptPlan &plan, const std::optional<std::string> &raw_response,
                        const CooccurrenceTable &assoc, std::optional<std::string> response_error) {
    TrialRecord t;
    t.trial_id = plan.trial_id;
    t.instance_id = plan.instance_id;
    t.image_id = plan.image_id;
    t.condition = plan.condition;
    t.task = plan.task;
    t.options = plan.options;
    t.truth_label = plan.truth_label();
    t.target_object_label = plan.target_object_label;
    t.scene = plan.scene;
    t.superordinate = plan.superordinate;
    t.response_error = std::move(response_error);

    if (raw_response) {
        t.raw_response = *raw_response;
        const ParsedResponse parsed = parse_response(*raw_response, plan.options);
        t.parsed_index = parsed.index;
        t.parsed_label = parsed.label;
        t.predicted_label = parsed.predicted;
    }
    t.correct_normal = t.predicted_label && *t.predicted_label == t.truth_label;
    if (plan.task == Task::scene) {
        t.correct_relaxed =
            t.predicted_label && assoc.count(plan.target_object_label, *t.predicted_label) > 0;
    }
    return t;
}

CooccurrenceTable association_from_plans(std::span<const PromptPlan> plans) {
    // One entry per instance (the object-task plan of any condition carries it).
    std::map<std::string, std::pair<std::string, std::set<std::string>>> images;
    for (const auto &p : plans) {
        auto &entry = images[p.image_id];
        entry.first = p.scene;
        entry.second.insert(p.target_object_label);
    }
    CooccurrenceTable table;
    for (const auto &[image, entry] : images) {
        const std::vector<std::string> labels(entry.second.begin(), entry.second.end());
        table.add_image(entry.first, labels);
    }
    return table;
}

std::map<std::string, ResponseEntry> read_responses(const std::filesystem::path &path) {
    std::map<std::string, ResponseEntry> out;
    for_each_jsonl(path, [&](const Json &j, std::size_t line) {
        const auto id = j.at("trial_id").get<std::string>();
        ResponseEntry e{opt_string(j, "response"), opt_string(j, "error")};
        if (!out.emplace(id, std::move(e)).second) {
            throw ParseError("duplicate response for trial " + id, line);
        }
    });
    return out;
}

void write_response_line(std::ostream &out, const std::string &trial_id,
                         const ResponseEntry &entry) {
    OrderedJson j;
    j["trial_id"] = trial_id;
    j["response"] = entry.response ? OrderedJson(*entry.response) : OrderedJson(nullptr);
    if (entry.error) j["error"] = *entry.error;
    write_jsonl_line(out, j);
}

std::vector<TrialRecord> score_plans(std::span<const PromptPlan> plans,
                                     const std::map<std::string, ResponseEntry> &responses,
                                     const CooccurrenceTable &assoc) {
    std::vector<TrialRecord> out;
    out.reserve(plans.size());
    for (const auto &p : plans) {
        auto it = responses.find(p.trial_id);
        if (it == responses.end()) {
            out.push_back(score_trial(p, std::nullopt, assoc, std::string("missing response")));
        } else {
            out.push_back(score_trial(p, it->second.response, assoc, it->second.error));
        }
    }
    return out;
}

// --- serialization ----------------------------------------------------------

OrderedJson trial_to_json(const TrialRecord &t) {
    OrderedJson j;
    j["trial_id"] = t.trial_id;
    j["instance_id"] = t.instance_id;
    j["image_id"] = t.image_id;
    j["condition"] = to_string(t.condition);
    j["task"] = to_string(t.task);
    j["options"] = OrderedJson::array();
    for (const auto &o : t.options) j["options"].push_back({{"index", o.index}, {"label", o.label}});
    j["truth_label"] = t.truth_label;
    j["target_object_label"] = t.target_object_label;
    j["scene"] = t.scene;
    j["superordinate"] = to_string(t.superordinate);
    j["raw_response"] = t.raw_response;
    j["response_error"] = t.response_error ? OrderedJson(*t.response_error) : OrderedJson(nullptr);
    j["parsed_index"] = t.parsed_index ? OrderedJson(*t.parsed_index) : OrderedJson(nullptr);
    j["parsed_label"] = t.parsed_label ? OrderedJson(*t.parsed_label) : OrderedJson(nullptr);
    j["predicted_label"] =
        t.predicted_label ? OrderedJson(*t.predicted_label) : OrderedJson(nullptr);
    j["correct_normal"] = t.correct_normal;
    j["correct_relaxed"] =
        t.correct_relaxed ? OrderedJson(*t.correct_relaxed) : OrderedJson(nullptr);
    return j;
}

TrialRecord trial_from_json(const Json &j) {
    TrialRecord t;
    t.trial_id = j.at("trial_id").get<std::string>();
    t.instance_id = j.at("instance_id").get<std::string>();
    t.image_id = j.at("image_id").get<std::string>();
    t.condition = parse_condition(j.at("condition").get<std::string>());
    t.task = parse_task(j.at("task").get<std::string>());
    for (const auto &o : j.at("options")) {
        t.options.push_back({o.at("index").get<int>(), o.at("label").get<std::string>()});
    }
    t.truth_label = j.at("truth_label").get<std::string>();
    t.target_object_label = j.at("target_object_label").get<std::string>();
    t.scene = j.at("scene").get<std::string>();
    t.superordinate = parse_superordinate(j.at("superordinate").get<std::string>());
    t.raw_response = j.value("raw_response", "");
    t.response_error = opt_string(j, "response_error");
    if (j.contains("parsed_index") && !j["parsed_index"].is_null()) {
        t.parsed_index = j["parsed_index"].get<int>();
    }
    t.parsed_label = opt_string(j, "parsed_label");
    t.predicted_label = opt_string(j, "predicted_label");
    t.correct_normal = j.at("correct_normal").get<bool>();
    if (j.contains("correct_relaxed") && !j["correct_relaxed"].is_null()) {
        t.correct_relaxed = j["correct_relaxed"].get<bool>();
    }
    if (t.predicted_label &&
        std::none_of(t.options.begin(), t.options.end(),
                     [&](const PromptOption &o) { return o.label == *t.predicted_label; })) {
        throw ValidationError("trial " + t.trial_id + ": predicted label is not an option");
    }
    if (t.correct_relaxed.has_value() != (t.task == Task::scene)) {
        throw ValidationError("trial " + t.trial_id +
                              ": correct_relaxed must be present exactly for scene trials");
    }
    return t;
}

void write_trials(std::ostream &out, std::span<const TrialRecord> trials) {
    for (const auto &t : trials) write_jsonl_line(out, trial_to_json(t));
}

std::vector<TrialRecord> read_trials(const std::filesystem::path &path) {
    std::vector<TrialRecord> out;
    for_each_jsonl(path, [&](const Json &j, std::size_t) { out.push_back(trial_from_json(j)); });
    return out;
}

// --- aggregate analyses -----------------------------------------------------

namespace {

struct InstanceTasks {
    const TrialRecord *scene = nullptr;
    const TrialRecord *superordinate = nullptr;
    const TrialRecord *object = nullptr;

    bool complete() const { return scene && superordinate && object; }
};

std::map<std::string, InstanceTasks> object_only_by_instance(std::span<const TrialRecord> trials) {
    std::map<std::string, InstanceTasks> by;
    for (const auto &t : trials) {
        if (t.condition != Condition::object_only) continue;
        auto &slot = by[t.instance_id];
        switch (t.task) {
        case Task::scene:
            slot.scene = &t;
            break;
        case Task::superordinate:
            slot.superordinate = &t;
            break;
        case Task::object:
            slot.object = &t;
            break;
        }
    }
    return by;
}

std::optional<double> ratio(std::size_t hits, std::size_t n) {
    if (n == 0) return std::nullopt;
    return static_cast<double>(hits) / static_cast<double>(n);
}

} // namespace

ConditionalAccuracy conditional_accuracy_table(std::span<const TrialRecord> trials) {
    ConditionalAccuracy out;
    const auto by = object_only_by_instance(trials);

    struct Tally {
        std::size_t hit_c = 0, n_c = 0, hit_i = 0, n_i = 0;
    };
    Tally scene, relaxed, super;
    for (const auto &[id, slot] : by) {
        if (!slot.complete()) {
            ++out.incomplete_instances;
            continue;
        }
        ++out.complete_instances;
        const bool obj = slot.object->correct_normal;
        auto add = [obj](Tally &t, bool hit) {
            if (obj) {
                ++t.n_c;
                t.hit_c += hit ? 1 : 0;
            } else {
                ++t.n_i;
                t.hit_i += hit ? 1 : 0;
            }
        };
        add(scene, slot.scene->correct_normal);
        add(relaxed, slot.scene->correct_relaxed.value_or(false));
        add(super, slot.superordinate->correct_normal);
    }
    auto row = [](const char *name, const Tally &t) {
        ConditionalRow r;
        r.measure = name;
        r.object_correct = ratio(t.hit_c, t.n_c);
        r.object_correct_n = t.n_c;
        r.object_incorrect = ratio(t.hit_i, t.n_i);
        r.object_incorrect_n = t.n_i;
        r.marginal = ratio(t.hit_c + t.hit_i, t.n_c + t.n_i);
        r.n = t.n_c + t.n_i;
        return r;
    };
    out.rows = {row("scene", scene), row("scene_relaxed", relaxed),
                row("superordinate", super)};
    return out;
}

ConsistencyReport consistency_report(std::span<const TrialRecord> trials,
                                     const CooccurrenceTable &assoc) {
    ConsistencyReport rep;
    const auto by = object_only_by_instance(trials);
    std::size_t scene_hits = 0, super_hits = 0;
    for (const auto &[id, slot] : by) {
        ConsistencyFlags f;
        f.instance_id = id;
        if (slot.object) f.predicted_object = slot.object->predicted_label;
        if (slot.scene) f.predicted_scene = slot.scene->predicted_label;
        if (slot.superordinate) f.predicted_superordinate = slot.superordinate->predicted_label;

        if (f.predicted_object && f.predicted_scene) {
            f.scene_consistent = assoc.count(*f.predicted_object, *f.predicted_scene) > 0;
            ++rep.scene_n;
            scene_hits += *f.scene_consistent ? 1 : 0;
        } else {
            ++rep.scene_excluded;
        }
        if (f.predicted_object && f.predicted_superordinate) {
            bool ok = false;
            for (const auto &scene : kSceneCategories) {
                const auto sup = superordinate_of(scene);
                if (to_string(*sup) == *f.predicted_superordinate &&
                    assoc.count(*f.predicted_object, std::string(scene)) > 0) {
                    ok = true;
                    break;
                }
            }
            f.superordinate_consistent = ok;
            ++rep.superordinate_n;
            super_hits += ok ? 1 : 0;
        } else {
            ++rep.superordinate_excluded;
        }
        rep.flags.push_back(std::move(f));
    }
    rep.scene_consistency = ratio(scene_hits, rep.scene_n);
    rep.superordinate_consistency = ratio(super_hits, rep.superordinate_n);
    return rep;
}

AccuracySummary accuracy_summary(std::span<const TrialRecord> trials, Grouping grouping,
                                 std::span<const std::string> expected_groups) {
    // group -> measure -> (hits, n); std::map keeps output order stable.
    std::map<std::string, std::map<std::string, std::pair<std::size_t, std::size_t>>> tally;
    for (const auto &t : trials) {
        std::string group;
        switch (grouping) {
        case Grouping::task_condition:
            group = std::string(to_string(t.task)) + "/" + std::string(to_string(t.condition));
            break;
        case Grouping::scene:
            group = t.scene;
            break;
        case Grouping::superordinate:
            group = std::string(to_string(t.superordinate));
            break;
        }
        auto &normal = tally[group]["normal"];
        normal.first += t.correct_normal ? 1 : 0;
        ++normal.second;
        if (t.correct_relaxed) {
            auto &relaxed = tally[group]["relaxed"];
            relaxed.first += *t.correct_relaxed ? 1 : 0;
            ++relaxed.second;
        }
    }

    AccuracySummary out;
    std::vector<std::string> order;
    for (const auto &g : expected_groups) {
        if (tally.contains(g)) {
            order.push_back(g);
        } else {
            out.notes.push_back("group '" + g + "' has no trials; omitted");
        }
    }
    for (const auto &[g, _] : tally) {
        if (std::find(order.begin(), order.end(), g) == order.end()) order.push_back(g);
    }
    for (const auto &g : order) {
        for (const auto &[measure, counts] : tally[g]) {
            AccuracyRow r;
            r.group = g;
            r.measure = measure;
            r.n = counts.second;
            r.accuracy = static_cast<double>(counts.first) / static_cast<double>(counts.second);
            r.sem = stats::binomial_sem(r.accuracy, r.n);
            out.rows.push_back(r);
        }
    }
    return out;
}

} // namespace ctxprobe
