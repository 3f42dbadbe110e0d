// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxprobe/corpus.hpp"
#include "ctxprobe/protocol.hpp"

namespace ctxprobe {

struct ParsedResponse {
    std::optional<int> index;         // rule 1: a valid option index in the text
    std::optional<std::string> label; // rule 2: longest option label found in the text
    std::optional<std::string> predicted;
};

// Rule 1 fires on the first standalone number (optionally followed by '.')
// that is a valid option index; otherwise rule 2 does a case-insensitive
// substring search, longest label first. Never throws.
ParsedResponse parse_response(std::string_view raw, std::span<const PromptOption> options);

struct TrialRecord {
    std::string trial_id;
    std::string instance_id;
    std::string image_id;
    Condition condition = Condition::full_scene;
    Task task = Task::scene;
    std::vector<PromptOption> options;
    std::string truth_label;
    std::string target_object_label;
    std::string scene;
    Superordinate superordinate = Superordinate::indoor;

    std::string raw_response;
    std::optional<std::string> response_error; // adapter-side failure marker
    std::optional<int> parsed_index;
    std::optional<std::string> parsed_label;
    std::optional<std::string> predicted_label;
    bool correct_normal = false;
    std::optional<bool> correct_relaxed; // scene task only
};

// Relaxed accuracy uses `assoc`, built from the curated evaluation set.
TrialRecord score_trial(const PromptPlan &plan, const std::optional<std::string> &raw_response,
                        const CooccurrenceTable &assoc,
                        std::optional<std::string> response_error = std::nullopt);

// Association table over the instances encoded in a plan file.
CooccurrenceTable association_from_plans(std::span<const PromptPlan> plans);

struct ResponseEntry {
    std::optional<std::string> response; // absent when the adapter reported an error
    std::optional<std::string> error;
};

// Line format: {"trial_id": .., "response": "<text>"|null, "error": ".."?}
std::map<std::string, ResponseEntry> read_responses(const std::filesystem::path &path);
void write_response_line(std::ostream &out, const std::string &trial_id,
                         const ResponseEntry &entry);

// Plans without a response are scored as unparsed with error "missing response".
std::vector<TrialRecord> score_plans(std::span<const PromptPlan> plans,
                                     const std::map<std::string, ResponseEntry> &responses,
                                     const CooccurrenceTable &assoc);

nlohmann::ordered_json trial_to_json(const TrialRecord &t);
TrialRecord trial_from_json(const nlohmann::json &j);
void write_trials(std::ostream &out, std::span<const TrialRecord> trials);
std::vector<TrialRecord> read_trials(const std::filesystem::path &path);

// --- aggregate analyses ------------------------------------------------------

struct ConditionalRow {
    std::string measure; // scene, scene_relaxed, superordinate
    std::optional<double> object_correct;
    std::size_t object_correct_n = 0;
    std::optional<double> object_incorrect;
    std::size_t object_incorrect_n = 0;
    std::optional<double> marginal;
    std::size_t n = 0;
};

struct ConditionalAccuracy {
    std::vector<ConditionalRow> rows;
    std::size_t complete_instances = 0;
    std::size_t incomplete_instances = 0; // missing one of the three task records
};

// Object-only trials, joined per instance across the three tasks.
ConditionalAccuracy conditional_accuracy_table(std::span<const TrialRecord> trials);

struct ConsistencyFlags {
    std::string instance_id;
    std::optional<std::string> predicted_object;
    std::optional<std::string> predicted_scene;
    std::optional<std::string> predicted_superordinate;
    std::optional<bool> scene_consistent;
    std::optional<bool> superordinate_consistent;
};

struct ConsistencyReport {
    std::optional<double> scene_consistency;
    std::size_t scene_n = 0;
    std::size_t scene_excluded = 0; // unparsed object or scene prediction
    std::optional<double> superordinate_consistency;
    std::size_t superordinate_n = 0;
    std::size_t superordinate_excluded = 0;
    std::vector<ConsistencyFlags> flags;
};

ConsistencyReport consistency_report(std::span<const TrialRecord> trials,
                                     const CooccurrenceTable &assoc);

enum class Grouping { task_condition, scene, superordinate };

struct AccuracyRow {
    std::string group;
    std::string measure; // normal | relaxed
    double accuracy = 0.0;
    double sem = 0.0;
    std::size_t n = 0;
};

struct AccuracySummary {
    std::vector<AccuracyRow> rows;
    std::vector<std::string> notes; // empty groups
};

// task_condition groups are "<task>/<condition>"; scene and superordinate
// groups use the trial's ground-truth scene. Relaxed rows appear for scene
// trials only. Expected groups with no trials are noted and omitted.
AccuracySummary accuracy_summary(std::span<const TrialRecord> trials, Grouping grouping,
                                 std::span<const std::string> expected_groups = {});

} // namespace ctxprobe
