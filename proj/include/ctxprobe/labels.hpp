// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctxprobe {

enum class ObjectType { local = 0, anchor = 1 };
enum class Superordinate { indoor, outdoor };
enum class Condition { full_scene, object_only };
enum class Task { scene, superordinate, object };

inline constexpr std::array<std::string_view, 8> kSceneCategories = {
    "bathroom", "bedroom", "kitchen", "living room",
    "coast",    "forest",  "mountain", "skyline"};

inline constexpr std::array<Condition, 2> kConditions = {Condition::full_scene,
                                                         Condition::object_only};
inline constexpr std::array<Task, 3> kTasks = {Task::scene, Task::superordinate,
                                               Task::object};

std::vector<std::string> default_categories();

// Fixed scene -> superordinate map. Unknown scenes yield nullopt.
std::optional<Superordinate> superordinate_of(std::string_view scene);
bool is_known_scene(std::string_view scene);

std::string_view to_string(ObjectType t);
std::string_view to_string(Superordinate s);
std::string_view to_string(Condition c);
std::string_view to_string(Task t);

// These throw ParseError on unknown spellings.
ObjectType parse_object_type(std::string_view s);
Superordinate parse_superordinate(std::string_view s);
Condition parse_condition(std::string_view s);
Task parse_task(std::string_view s);

} // namespace ctxprobe
