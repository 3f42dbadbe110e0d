// SPDX-License-Identifier: Apache-2.0
#include "ctxprobe/protocol.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <set>

#include "ctxprobe/error.hpp"
#include "ctxprobe/jsonl.hpp"

namespace ctxprobe {

namespace {

constexpr std::string_view kMaskedPreamble =
    "The image shows a segmented object with the background masked in gray. ";
constexpr std::string_view kResponseLine = "Respond in this exact format: [number]. [category name]";

std::string instruction(Task task, Condition condition) {
    const bool masked = condition == Condition::object_only;
    std::string s;
    if (masked) s += kMaskedPreamble;
    if (task == Task::object) {
        s += "Identify the object category present in the image.";
    } else if (masked) {
        s += "Infer the scene category from the presented object.";
    } else {
        s += "Infer the scene category from the image.";
    }
    return s;
}

std::vector<PromptOption> enumerate(std::span<const std::string> labels) {
    std::vector<PromptOption> out;
    out.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out.push_back({static_cast<int>(i + 1), labels[i]});
    }
    return out;
}

int index_of(std::span<const PromptOption> options, const std::string &label) {
    int found = 0;
    for (const auto &o : options) {
        if (o.label == label) {
            if (found != 0) return -1;
            found = o.index;
        }
    }
    return found;
}

} // namespace

// --- DistractorPool ---------------------------------------------------------

DistractorPool::DistractorPool(std::map<std::string, std::vector<std::string>> entries)
    : entries_(std::move(entries)) {
    for (const auto &[scene, labels] : entries_) {
        std::set<std::string> seen;
        for (const auto &l : labels) {
            if (l.empty()) throw ValidationError("distractor pool '" + scene + "': empty label");
            if (!seen.insert(l).second) {
                throw ValidationError("distractor pool '" + scene + "': duplicate label '" + l +
                                      "'");
            }
        }
    }
}

const std::vector<std::string> &DistractorPool::labels(const std::string &scene) const {
    auto it = entries_.find(scene);
    if (it == entries_.end() || it->second.empty()) {
        throw ValidationError("distractor pool has no entries for scene '" + scene + "'");
    }
    return it->second;
}

DistractorPool parse_distractor_pool(const Json &j) {
    if (!j.is_object()) throw ParseError("distractor pool must be a JSON object");
    std::map<std::string, std::vector<std::string>> entries;
    for (const auto &[scene, labels] : j.items()) {
        entries[scene] = labels.get<std::vector<std::string>>();
    }
    return DistractorPool(std::move(entries));
}

DistractorPool read_distractor_pool(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open distractor pool " + path.string());
    try {
        return parse_distractor_pool(Json::parse(in));
    } catch (const Json::exception &e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

// --- plans ------------------------------------------------------------------

std::string trial_id_for(const std::string &instance_id, Condition c, Task t) {
    return image_trial_key(instance_id, c) + "|" + std::string(to_string(t));
}

std::string image_trial_key(const std::string &instance_id, Condition c) {
    return instance_id + "|" + std::string(to_string(c));
}

std::vector<std::string> sample_distractors(const ObjectInstance &target,
                                            const DistractorPool &pool,
                                            std::span<const std::string> categories,
                                            CounterRng &rng) {
    std::vector<std::string> chosen;
    for (const auto &scene : categories) {
        if (scene == target.scene) continue;
        std::vector<std::string> eligible;
        for (const auto &label : pool.labels(scene)) {
            if (label == target.object_label) continue;
            if (std::find(chosen.begin(), chosen.end(), label) != chosen.end()) continue;
            eligible.push_back(label);
        }
        if (eligible.empty()) {
            throw ValidationError("distractor pool for scene '" + scene +
                                  "' has no label other than the target '" +
                                  target.object_label + "'");
        }
        chosen.push_back(eligible[static_cast<std::size_t>(rng.below(eligible.size()))]);
    }
    return chosen;
}

std::vector<PromptPlan> build_prompt_plan(std::span<const ObjectInstance> instances,
                                          const DistractorPool &pool, const PlanConfig &config) {
    for (const auto &scene : config.categories) (void)pool.labels(scene);

    const std::vector<std::string> superordinates = {"indoor", "outdoor"};
    CounterRng rng(config.seed);
    std::vector<PromptPlan> plans;
    plans.reserve(instances.size() * kConditions.size() * kTasks.size());

    for (const auto &inst : instances) {
        for (const Condition condition : kConditions) {
            for (const Task task : kTasks) {
                std::vector<std::string> labels;
                std::string truth;
                switch (task) {
                case Task::scene:
                    labels = config.categories;
                    truth = inst.scene;
                    break;
                case Task::superordinate:
                    labels = superordinates;
                    truth = std::string(to_string(inst.superordinate));
                    break;
                case Task::object:
                    labels.push_back(inst.object_label);
                    for (auto &d : sample_distractors(inst, pool, config.categories, rng)) {
                        labels.push_back(std::move(d));
                    }
                    truth = inst.object_label;
                    break;
                }
                rng.shuffle(std::span<std::string>(labels));

                PromptPlan plan;
                plan.trial_id = trial_id_for(inst.instance_id, condition, task);
                plan.instance_id = inst.instance_id;
                plan.image_id = inst.image_id;
                plan.condition = condition;
                plan.task = task;
                plan.options = enumerate(labels);
                plan.correct_index = index_of(plan.options, truth);
                if (plan.correct_index <= 0) {
                    throw ValidationError("trial " + plan.trial_id + ": ground truth '" + truth +
                                          "' is not exactly once among the options");
                }
                plan.prompt_text = render_prompt(plan);
                plan.target_object_label = inst.object_label;
                plan.scene = inst.scene;
                plan.superordinate = inst.superordinate;
                plans.push_back(std::move(plan));
            }
        }
    }
    return plans;
}

std::string render_prompt(Task task, Condition condition, std::span<const PromptOption> options) {
    std::string s = instruction(task, condition);
    s += " Available categories:\n";
    for (const auto &o : options) {
        s += std::to_string(o.index);
        s += ". ";
        s += o.label;
        s += '\n';
    }
    s += '\n';
    s += kResponseLine;
    return s;
}

// --- serialization ----------------------------------------------------------

OrderedJson plan_to_json(const PromptPlan &p) {
    OrderedJson j;
    j["trial_id"] = p.trial_id;
    j["instance_id"] = p.instance_id;
    j["image_id"] = p.image_id;
    j["condition"] = to_string(p.condition);
    j["task"] = to_string(p.task);
    j["options"] = OrderedJson::array();
    for (const auto &o : p.options) j["options"].push_back({{"index", o.index}, {"label", o.label}});
    j["correct_index"] = p.correct_index;
    j["target_object_label"] = p.target_object_label;
    j["scene"] = p.scene;
    j["superordinate"] = to_string(p.superordinate);
    j["prompt_text"] = p.prompt_text;
    return j;
}

PromptPlan plan_from_json(const Json &j) {
    PromptPlan p;
    p.trial_id = j.at("trial_id").get<std::string>();
    p.instance_id = j.at("instance_id").get<std::string>();
    p.image_id = j.at("image_id").get<std::string>();
    p.condition = parse_condition(j.at("condition").get<std::string>());
    p.task = parse_task(j.at("task").get<std::string>());
    for (const auto &o : j.at("options")) {
        p.options.push_back({o.at("index").get<int>(), o.at("label").get<std::string>()});
    }
    p.correct_index = j.at("correct_index").get<int>();
    p.target_object_label = j.at("target_object_label").get<std::string>();
    p.scene = j.at("scene").get<std::string>();
    p.superordinate = parse_superordinate(j.at("superordinate").get<std::string>());
    p.prompt_text = j.at("prompt_text").get<std::string>();

    for (std::size_t i = 0; i < p.options.size(); ++i) {
        if (p.options[i].index != static_cast<int>(i + 1)) {
            throw ValidationError("trial " + p.trial_id + ": option indices are not 1..N");
        }
    }
    if (p.correct_index < 1 || p.correct_index > static_cast<int>(p.options.size())) {
        throw ValidationError("trial " + p.trial_id + ": correct_index out of range");
    }
    if (render_prompt(p) != p.prompt_text) {
        throw ValidationError("trial " + p.trial_id +
                              ": prompt_text does not match the rendered template");
    }
    return p;
}

void write_plans(std::ostream &out, std::span<const PromptPlan> plans) {
    for (const auto &p : plans) write_jsonl_line(out, plan_to_json(p));
}

std::vector<PromptPlan> read_plans(const std::filesystem::path &path) {
    std::vector<PromptPlan> out;
    for_each_jsonl(path, [&](const Json &j, std::size_t) { out.push_back(plan_from_json(j)); });
    return out;
}

} // namespace ctxprobe
