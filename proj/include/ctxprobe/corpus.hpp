// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ctxprobe/labels.hpp"
#include "ctxprobe/mask.hpp"

namespace ctxprobe {

struct AnnotatedObject {
    std::string label;
    ObjectType type = ObjectType::local;
    // Absent when the source corpus carries no segmentation for the object.
    std::optional<BinaryMask> mask;
    // Optional explicit id; defaults to "<image_id>#<index>".
    std::string instance_id;
};

struct Annotation {
    std::string image_id;
    std::size_t width = 0;
    std::size_t height = 0;
    std::string scene;
    std::vector<AnnotatedObject> objects;
};

struct ObjectProperties {
    double frequency = 0.0;   // P(object | scene)
    double specificity = 0.0; // P(scene | object)
    double size = 0.0;        // mask pixels / image pixels
    int type_indicator = 0;   // 1 = anchor, 0 = local

    bool operator==(const ObjectProperties &) const = default;
};

struct ObjectInstance {
    // "<image_id>#<object index within the source annotation>"; stable under curation.
    std::string instance_id;
    std::string image_id;
    std::string object_label;
    ObjectType object_type = ObjectType::local;
    std::string scene;
    Superordinate superordinate = Superordinate::indoor;
    BinaryMask mask;
    std::optional<ObjectProperties> properties;
};

// Distinct-image co-occurrence counts between object labels and scenes.
class CooccurrenceTable {
public:
    void add_image(const std::string &scene, std::span<const std::string> labels);

    std::size_t count(const std::string &label, const std::string &scene) const;
    std::size_t scene_total(const std::string &scene) const;
    std::optional<std::size_t> object_total(const std::string &label) const;
    bool has_object(const std::string &label) const { return object_totals_.contains(label); }

    const std::map<std::pair<std::string, std::string>, std::size_t> &counts() const {
        return counts_;
    }
    const std::map<std::string, std::size_t> &scene_totals() const { return scene_totals_; }
    const std::map<std::string, std::size_t> &object_totals() const { return object_totals_; }

    bool operator==(const CooccurrenceTable &) const = default;

private:
    std::map<std::pair<std::string, std::string>, std::size_t> counts_;
    std::map<std::string, std::size_t> scene_totals_;
    std::map<std::string, std::size_t> object_totals_;
};

struct CurationConfig {
    std::vector<std::string> categories = default_categories();
    double occlusion_threshold = 0.5;
    std::size_t min_images = 10;
    double min_area = 0.03;
    std::size_t per_type_cap = 150;
    std::uint64_t seed = 42;
};

struct CurationReport {
    std::size_t input_images = 0;
    std::size_t input_objects = 0;
    std::size_t step1_dropped_images = 0;   // scene outside the category list
    std::size_t step1_dropped_objects = 0;  // objects in those images, plus maskless objects
    std::size_t step2_dropped_images = 0;   // occluded anchors
    std::size_t step2_dropped_objects = 0;
    std::size_t step3_dropped_labels = 0;   // labels seen in too few images
    std::size_t step3_dropped_objects = 0;
    std::size_t step4_dropped_objects = 0;  // too small
    std::size_t step5_dropped_objects = 0;  // over the per-type cap
    std::size_t output_instances = 0;
    std::size_t output_images = 0;
};

struct CurationResult {
    std::vector<ObjectInstance> instances;
    CurationReport report;
};

// Annotation line format:
//   {"image_id":..,"width":..,"height":..,"scene":..,
//    "objects":[{"label":..,"type":"anchor"|"local",
//                "mask_rle":{"size":[h,w],"counts":[..]}}]}
// mask_rle may be omitted (or null) for objects without segmentation.
Annotation parse_annotation(const nlohmann::json &record);
std::vector<Annotation> ingest_annotations(std::istream &in);
std::vector<Annotation> ingest_annotations(const std::filesystem::path &path);
nlohmann::ordered_json annotation_to_json(const Annotation &a);

CurationResult apply_curation(std::span<const Annotation> annotations,
                              const CurationConfig &config = {});

CooccurrenceTable build_cooccurrence(std::span<const Annotation> annotations);
// Association table over a curated set (one image may hold several instances).
CooccurrenceTable build_cooccurrence(std::span<const ObjectInstance> instances);

// Throws ValidationError naming the label when it is absent from the table.
ObjectProperties compute_properties(const ObjectInstance &instance,
                                    const CooccurrenceTable &cooc);
// Instances whose label or scene is absent from the table keep empty
// properties; returns how many.
std::size_t attach_properties(std::span<ObjectInstance> instances,
                              const CooccurrenceTable &cooc);

// Regroups instances into per-image annotations (used to re-run curation).
std::vector<Annotation> instances_to_annotations(std::span<const ObjectInstance> instances);

nlohmann::ordered_json instance_to_json(const ObjectInstance &instance);
ObjectInstance instance_from_json(const nlohmann::json &record);
void write_instances(std::ostream &out, std::span<const ObjectInstance> instances);
std::vector<ObjectInstance> read_instances(const std::filesystem::path &path);

// Columns object_label, scene, image_count, then a scene-totals section.
void write_cooccurrence(std::ostream &out, const CooccurrenceTable &cooc);
void write_curation_report(std::ostream &out, const CurationReport &report,
                           const CurationConfig &config);

} // namespace ctxprobe
