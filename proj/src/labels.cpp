// SPDX-License-Identifier: Apache-2.0
#include "ctxprobe/labels.hpp"

#include "ctxprobe/error.hpp"

namespace ctxprobe {

std::vector<std::string> default_categories() {
    return {kSceneCategories.begin(), kSceneCategories.end()};
}

std::optional<Superordinate> superordinate_of(std::string_view scene) {
    for (std::size_t i = 0; i < kSceneCategories.size(); ++i) {
        if (kSceneCategories[i] == scene) {
            return i < 4 ? Superordinate::indoor : Superordinate::outdoor;
        }
    }
    return std::nullopt;
}

bool is_known_scene(std::string_view scene) { return superordinate_of(scene).has_value(); }

std::string_view to_string(ObjectType t) { return t == ObjectType::anchor ? "anchor" : "local"; }

std::string_view to_string(Superordinate s) {
    return s == Superordinate::indoor ? "indoor" : "outdoor";
}

std::string_view to_string(Condition c) {
    return c == Condition::full_scene ? "full_scene" : "object_only";
}

std::string_view to_string(Task t) {
    switch (t) {
    case Task::scene:
        return "scene";
    case Task::superordinate:
        return "superordinate";
    case Task::object:
        return "object";
    }
    return "?";
}

ObjectType parse_object_type(std::string_view s) {
    if (s == "anchor") return ObjectType::anchor;
    if (s == "local") return ObjectType::local;
    throw ParseError("unknown object type '" + std::string(s) + "'");
}

Superordinate parse_superordinate(std::string_view s) {
    if (s == "indoor") return Superordinate::indoor;
    if (s == "outdoor") return Superordinate::outdoor;
    throw ParseError("unknown superordinate '" + std::string(s) + "'");
}

Condition parse_condition(std::string_view s) {
    if (s == "full_scene") return Condition::full_scene;
    if (s == "object_only") return Condition::object_only;
    throw ParseError("unknown condition '" + std::string(s) + "'");
}

Task parse_task(std::string_view s) {
    if (s == "scene") return Task::scene;
    if (s == "superordinate") return Task::superordinate;
    if (s == "object") return Task::object;
    throw ParseError("unknown task '" + std::string(s) + "'");
}

} // namespace ctxprobe
