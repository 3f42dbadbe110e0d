// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxprobe/corpus.hpp"
#include "ctxprobe/labels.hpp"
#include "ctxprobe/rng.hpp"

namespace ctxprobe {

struct PromptOption {
    int index = 0; // 1-based
    std::string label;

    bool operator==(const PromptOption &) const = default;
};

struct PromptPlan {
    std::string trial_id; // "<instance_id>|<condition>|<task>"
    std::string instance_id;
    std::string image_id;
    Condition condition = Condition::full_scene;
    Task task = Task::scene;
    std::vector<PromptOption> options;
    int correct_index = 0;
    std::string prompt_text;
    std::string target_object_label;
    // Ground truth carried so that scoring needs only the plan file.
    std::string scene;
    Superordinate superordinate = Superordinate::indoor;

    const std::string &truth_label() const { return options.at(correct_index - 1).label; }
    bool operator==(const PromptPlan &) const = default;
};

// Scene -> scene-typical object labels used as object-task distractors.
class DistractorPool {
public:
    DistractorPool() = default;
    // Throws ValidationError on duplicate labels within a scene.
    explicit DistractorPool(std::map<std::string, std::vector<std::string>> entries);

    const std::vector<std::string> &labels(const std::string &scene) const;
    bool contains(const std::string &scene) const { return entries_.contains(scene); }
    const std::map<std::string, std::vector<std::string>> &entries() const { return entries_; }

private:
    std::map<std::string, std::vector<std::string>> entries_;
};

// JSON object {"<scene>": ["label", ...], ...}.
DistractorPool read_distractor_pool(const std::filesystem::path &path);
DistractorPool parse_distractor_pool(const nlohmann::json &j);

struct PlanConfig {
    std::vector<std::string> categories = default_categories();
    std::uint64_t seed = 42;
};

std::string trial_id_for(const std::string &instance_id, Condition c, Task t);
// Key shared by the three task trials of one (instance, condition): "<instance_id>|<condition>".
std::string image_trial_key(const std::string &instance_id, Condition c);

// One distractor per non-target scene, in category order. Throws ValidationError
// when a scene has no pool entry or no eligible label.
std::vector<std::string> sample_distractors(const ObjectInstance &target,
                                            const DistractorPool &pool,
                                            std::span<const std::string> categories,
                                            CounterRng &rng);

// The generator is seeded once and consumed in instance order, then condition
// (full_scene, object_only), then task (scene, superordinate, object).
std::vector<PromptPlan> build_prompt_plan(std::span<const ObjectInstance> instances,
                                          const DistractorPool &pool,
                                          const PlanConfig &config = {});

// Regenerates the prompt text from task, condition and option order.
std::string render_prompt(Task task, Condition condition, std::span<const PromptOption> options);
inline std::string render_prompt(const PromptPlan &plan) {
    return render_prompt(plan.task, plan.condition, plan.options);
}

nlohmann::ordered_json plan_to_json(const PromptPlan &plan);
// Validates option contiguity, the correct index and the stored prompt text.
PromptPlan plan_from_json(const nlohmann::json &j);
void write_plans(std::ostream &out, std::span<const PromptPlan> plans);
std::vector<PromptPlan> read_plans(const std::filesystem::path &path);

} // namespace ctxprobe
