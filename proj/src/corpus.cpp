// SPDX-License-Identifier: Apache-2.0
#include "ctxprobe/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>

#include "ctxprobe/error.hpp"
#include "ctxprobe/jsonl.hpp"
#include "ctxprobe/rng.hpp"

namespace ctxprobe {

// --- CooccurrenceTable ------------------------------------------------------

void CooccurrenceTable::add_image(const std::string &scene, std::span<const std::string> labels) {
    ++scene_totals_[scene];
    std::set<std::string> distinct(labels.begin(), labels.end());
    for (const auto &label : distinct) {
        ++counts_[{label, scene}];
        ++object_totals_[label];
    }
}

std::size_t CooccurrenceTable::count(const std::string &label, const std::string &scene) const {
    auto it = counts_.find({label, scene});
    return it == counts_.end() ? 0 : it->second;
}

std::size_t CooccurrenceTable::scene_total(const std::string &scene) const {
    auto it = scene_totals_.find(scene);
    return it == scene_totals_.end() ? 0 : it->second;
}

std::optional<std::size_t> CooccurrenceTable::object_total(const std::string &label) const {
    auto it = object_totals_.find(label);
    if (it == object_totals_.end()) return std::nullopt;
    return it->second;
}

// --- ingest -----------------------------------------------------------------

namespace {

MaskRle rle_from_json(const Json &j) {
    MaskRle rle;
    const auto &size = j.at("size");
    if (!size.is_array() || size.size() != 2) throw ParseError("mask_rle.size must be [h, w]");
    rle.height = size[0].get<std::size_t>();
    rle.width = size[1].get<std::size_t>();
    rle.counts = j.at("counts").get<std::vector<std::uint64_t>>();
    return rle;
}

OrderedJson rle_to_json(const MaskRle &rle) {
    OrderedJson j;
    j["size"] = {rle.height, rle.width};
    j["counts"] = rle.counts;
    return j;
}

std::string require_nonempty(const Json &j, const char *key) {
    auto s = j.at(key).get<std::string>();
    if (s.empty()) throw ValidationError(std::string("empty ") + key);
    return s;
}

} // namespace

Annotation parse_annotation(const Json &record) {
    Annotation a;
    a.image_id = require_nonempty(record, "image_id");
    a.width = record.at("width").get<std::size_t>();
    a.height = record.at("height").get<std::size_t>();
    a.scene = record.at("scene").get<std::string>();
    for (const auto &obj : record.at("objects")) {
        AnnotatedObject o;
        o.label = require_nonempty(obj, "label");
        o.type = parse_object_type(obj.at("type").get<std::string>());
        if (obj.contains("instance_id")) o.instance_id = obj["instance_id"].get<std::string>();
        if (obj.contains("mask_rle") && !obj["mask_rle"].is_null()) {
            const MaskRle rle = rle_from_json(obj["mask_rle"]);
            if (rle.height != a.height || rle.width != a.width) {
                throw ValidationError("image " + a.image_id + ": mask for '" + o.label +
                                      "' is " + std::to_string(rle.height) + "x" +
                                      std::to_string(rle.width) + ", image is " +
                                      std::to_string(a.height) + "x" + std::to_string(a.width));
            }
            o.mask = decode_rle(rle);
        }
        a.objects.push_back(std::move(o));
    }
    return a;
}

std::vector<Annotation> ingest_annotations(std::istream &in) {
    std::vector<Annotation> out;
    for_each_jsonl(in, [&](const Json &j, std::size_t) { out.push_back(parse_annotation(j)); });
    return out;
}

std::vector<Annotation> ingest_annotations(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open annotations " + path.string());
    return ingest_annotations(in);
}

OrderedJson annotation_to_json(const Annotation &a) {
    OrderedJson j;
    j["image_id"] = a.image_id;
    j["width"] = a.width;
    j["height"] = a.height;
    j["scene"] = a.scene;
    j["objects"] = OrderedJson::array();
    for (const auto &o : a.objects) {
        OrderedJson oj;
        oj["label"] = o.label;
        oj["type"] = to_string(o.type);
        if (!o.instance_id.empty()) oj["instance_id"] = o.instance_id;
        if (o.mask) oj["mask_rle"] = rle_to_json(encode_rle(*o.mask));
        j["objects"].push_back(std::move(oj));
    }
    return j;
}

// --- curation ---------------------------------------------------------------

namespace {

struct Candidate {
    std::size_t image;  // index into the annotation span
    std::size_t object; // index into that annotation's objects
};

bool anchor_occluded(const Annotation &a, double threshold) {
    BinaryMask locals(a.height, a.width);
    for (const auto &o : a.objects) {
        if (o.type == ObjectType::local && o.mask) locals.union_with(*o.mask);
    }
    for (const auto &o : a.objects) {
        if (o.type != ObjectType::anchor || !o.mask) continue;
        const std::size_t area = o.mask->count();
        if (area == 0) continue;
        const double covered =
            static_cast<double>(o.mask->overlap_count(locals)) / static_cast<double>(area);
        if (covered >= threshold) return true;
    }
    return false;
}

} // namespace

CurationResult apply_curation(std::span<const Annotation> annotations,
                              const CurationConfig &config) {
    CurationResult result;
    CurationReport &rep = result.report;
    rep.input_images = annotations.size();
    for (const auto &a : annotations) rep.input_objects += a.objects.size();

    const std::set<std::string> categories(config.categories.begin(), config.categories.end());

    // Step 1: scene categories; maskless objects cannot become instances.
    std::vector<std::size_t> images;
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        const auto &a = annotations[i];
        if (!categories.contains(a.scene) || !is_known_scene(a.scene)) {
            ++rep.step1_dropped_images;
            rep.step1_dropped_objects += a.objects.size();
            continue;
        }
        images.push_back(i);
    }

    // Step 2: whole-image removal when an anchor is covered by the local union.
    std::vector<std::size_t> kept_images;
    for (const std::size_t i : images) {
        const auto &a = annotations[i];
        if (anchor_occluded(a, config.occlusion_threshold)) {
            ++rep.step2_dropped_images;
            rep.step2_dropped_objects += a.objects.size();
            continue;
        }
        kept_images.push_back(i);
    }

    std::vector<Candidate> candidates;
    for (const std::size_t i : kept_images) {
        const auto &a = annotations[i];
        for (std::size_t k = 0; k < a.objects.size(); ++k) {
            if (a.objects[k].mask) {
                candidates.push_back({i, k});
            } else {
                ++rep.step1_dropped_objects;
            }
        }
    }

    // Step 3: labels present in fewer than min_images distinct images.
    std::map<std::string, std::set<std::size_t>> label_images;
    for (const auto &c : candidates) {
        label_images[annotations[c.image].objects[c.object].label].insert(c.image);
    }
    std::set<std::string> rare;
    for (const auto &[label, imgs] : label_images) {
        if (imgs.size() < config.min_images) rare.insert(label);
    }
    rep.step3_dropped_labels = rare.size();
    std::erase_if(candidates, [&](const Candidate &c) {
        const bool drop = rare.contains(annotations[c.image].objects[c.object].label);
        rep.step3_dropped_objects += drop ? 1 : 0;
        return drop;
    });

    // Step 4: minimum area (strictly greater than min_area survives).
    std::erase_if(candidates, [&](const Candidate &c) {
        const bool drop = annotations[c.image].objects[c.object].mask->area_fraction() <=
                          config.min_area;
        rep.step4_dropped_objects += drop ? 1 : 0;
        return drop;
    });

    // Step 5: per scene and type, sample without replacement down to the cap.
    // One generator, consumed in category order, anchor before local.
    CounterRng rng(config.seed);
    std::vector<bool> keep(candidates.size(), true);
    for (const auto &scene : config.categories) {
        for (const ObjectType type : {ObjectType::anchor, ObjectType::local}) {
            std::vector<std::size_t> pool;
            for (std::size_t j = 0; j < candidates.size(); ++j) {
                const auto &a = annotations[candidates[j].image];
                if (a.scene == scene && a.objects[candidates[j].object].type == type) {
                    pool.push_back(j);
                }
            }
            if (pool.size() <= config.per_type_cap) continue;
            // Partial Fisher-Yates: the first `cap` slots become the sample.
            for (std::size_t s = 0; s < config.per_type_cap; ++s) {
                const std::size_t r = s + static_cast<std::size_t>(rng.below(pool.size() - s));
                std::swap(pool[s], pool[r]);
            }
            for (std::size_t s = config.per_type_cap; s < pool.size(); ++s) {
                keep[pool[s]] = false;
                ++rep.step5_dropped_objects;
            }
        }
    }

    std::set<std::string> out_images;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
        if (!keep[j]) continue;
        const auto &a = annotations[candidates[j].image];
        const auto &o = a.objects[candidates[j].object];
        ObjectInstance inst;
        inst.instance_id = o.instance_id.empty()
                               ? a.image_id + "#" + std::to_string(candidates[j].object)
                               : o.instance_id;
        inst.image_id = a.image_id;
        inst.object_label = o.label;
        inst.object_type = o.type;
        inst.scene = a.scene;
        inst.superordinate = *superordinate_of(a.scene);
        inst.mask = *o.mask;
        out_images.insert(a.image_id);
        result.instances.push_back(std::move(inst));
    }
    rep.output_instances = result.instances.size();
    rep.output_images = out_images.size();
    return result;
}

// --- co-occurrence and properties -------------------------------------------

CooccurrenceTable build_cooccurrence(std::span<const Annotation> annotations) {
    CooccurrenceTable table;
    std::vector<std::string> labels;
    for (const auto &a : annotations) {
        labels.clear();
        for (const auto &o : a.objects) labels.push_back(o.label);
        table.add_image(a.scene, labels);
    }
    return table;
}

CooccurrenceTable build_cooccurrence(std::span<const ObjectInstance> instances) {
    std::map<std::string, std::pair<std::string, std::vector<std::string>>> by_image;
    for (const auto &inst : instances) {
        auto &entry = by_image[inst.image_id];
        entry.first = inst.scene;
        entry.second.push_back(inst.object_label);
    }
    CooccurrenceTable table;
    for (const auto &[image, entry] : by_image) table.add_image(entry.first, entry.second);
    return table;
}

ObjectProperties compute_properties(const ObjectInstance &instance,
                                    const CooccurrenceTable &cooc) {
    const auto object_total = cooc.object_total(instance.object_label);
    if (!object_total || *object_total == 0) {
        throw ValidationError("object label '" + instance.object_label +
                              "' is absent from the statistics corpus");
    }
    const std::size_t scene_total = cooc.scene_total(instance.scene);
    if (scene_total == 0) {
        throw ValidationError("scene '" + instance.scene +
                              "' is absent from the statistics corpus");
    }
    const auto joint = static_cast<double>(cooc.count(instance.object_label, instance.scene));
    ObjectProperties p;
    p.frequency = joint / static_cast<double>(scene_total);
    p.specificity = joint / static_cast<double>(*object_total);
    p.size = instance.mask.area_fraction();
    p.type_indicator = instance.object_type == ObjectType::anchor ? 1 : 0;
    return p;
}

std::size_t attach_properties(std::span<ObjectInstance> instances,
                              const CooccurrenceTable &cooc) {
    std::size_t missing = 0;
    for (auto &inst : instances) {
        if (cooc.object_total(inst.object_label).value_or(0) == 0 ||
            cooc.scene_total(inst.scene) == 0) {
            inst.properties.reset();
            ++missing;
            continue;
        }
        inst.properties = compute_properties(inst, cooc);
    }
    return missing;
}

std::vector<Annotation> instances_to_annotations(std::span<const ObjectInstance> instances) {
    std::vector<Annotation> out;
    std::map<std::string, std::size_t> index;
    for (const auto &inst : instances) {
        auto [it, inserted] = index.try_emplace(inst.image_id, out.size());
        if (inserted) {
            Annotation a;
            a.image_id = inst.image_id;
            a.height = inst.mask.height();
            a.width = inst.mask.width();
            a.scene = inst.scene;
            out.push_back(std::move(a));
        }
        out[it->second].objects.push_back(
            AnnotatedObject{inst.object_label, inst.object_type, inst.mask, inst.instance_id});
    }
    return out;
}

// --- serialization ----------------------------------------------------------

OrderedJson instance_to_json(const ObjectInstance &inst) {
    OrderedJson j;
    j["instance_id"] = inst.instance_id;
    j["image_id"] = inst.image_id;
    j["object_label"] = inst.object_label;
    j["object_type"] = to_string(inst.object_type);
    j["scene"] = inst.scene;
    j["superordinate"] = to_string(inst.superordinate);
    j["mask_rle"] = rle_to_json(encode_rle(inst.mask));
    if (inst.properties) {
        const auto &p = *inst.properties;
        j["properties"] = {{"frequency", p.frequency},
                           {"specificity", p.specificity},
                           {"size", p.size},
                           {"type_indicator", p.type_indicator}};
    }
    return j;
}

ObjectInstance instance_from_json(const Json &j) {
    ObjectInstance inst;
    inst.instance_id = require_nonempty(j, "instance_id");
    inst.image_id = require_nonempty(j, "image_id");
    inst.object_label = require_nonempty(j, "object_label");
    inst.object_type = parse_object_type(j.at("object_type").get<std::string>());
    inst.scene = j.at("scene").get<std::string>();
    const auto sup = superordinate_of(inst.scene);
    if (!sup) throw ValidationError("instance " + inst.instance_id + ": unmapped scene '" +
                                    inst.scene + "'");
    inst.superordinate = parse_superordinate(j.at("superordinate").get<std::string>());
    if (inst.superordinate != *sup) {
        throw ValidationError("instance " + inst.instance_id +
                              ": superordinate disagrees with scene");
    }
    inst.mask = decode_rle(rle_from_json(j.at("mask_rle")));
    if (j.contains("properties")) {
        const auto &p = j["properties"];
        inst.properties = ObjectProperties{p.at("frequency").get<double>(),
                                           p.at("specificity").get<double>(),
                                           p.at("size").get<double>(),
                                           p.at("type_indicator").get<int>()};
    }
    return inst;
}

void write_instances(std::ostream &out, std::span<const ObjectInstance> instances) {
    for (const auto &inst : instances) write_jsonl_line(out, instance_to_json(inst));
}

std::vector<ObjectInstance> read_instances(const std::filesystem::path &path) {
    std::vector<ObjectInstance> out;
    for_each_jsonl(path, [&](const Json &j, std::size_t) { out.push_back(instance_from_json(j)); });
    return out;
}

void write_cooccurrence(std::ostream &out, const CooccurrenceTable &cooc) {
    out << "object_label\tscene\timage_count\n";
    for (const auto &[key, n] : cooc.counts()) {
        out << key.first << '\t' << key.second << '\t' << n << '\n';
    }
    out << "\n# scene_totals\nscene\timage_count\n";
    for (const auto &[scene, n] : cooc.scene_totals()) out << scene << '\t' << n << '\n';
}

void write_curation_report(std::ostream &out, const CurationReport &r,
                           const CurationConfig &c) {
    out << "# curation report\n";
    out << "# seed\t" << c.seed << "\n";
    out << "# occlusion_threshold\t" << c.occlusion_threshold << "\n";
    out << "# min_images\t" << c.min_images << "\n";
    out << "# min_area\t" << c.min_area << "\n";
    out << "# per_type_cap\t" << c.per_type_cap << "\n";
    // Rows drop images, except step 3 which drops labels.
    out << "stage\timages_or_labels\tobjects\n";
    out << "input\t" << r.input_images << '\t' << r.input_objects << '\n';
    out << "step1_scene_category\t" << r.step1_dropped_images << '\t' << r.step1_dropped_objects
        << '\n';
    out << "step2_occlusion\t" << r.step2_dropped_images << '\t' << r.step2_dropped_objects
        << '\n';
    out << "step3_rare_labels\t" << r.step3_dropped_labels << '\t' << r.step3_dropped_objects
        << '\n';
    out << "step4_min_area\t-\t" << r.step4_dropped_objects << '\n';
    out << "step5_per_type_cap\t-\t" << r.step5_dropped_objects << '\n';
    out << "output\t" << r.output_images << '\t' << r.output_instances << '\n';
}

} // namespace ctxprobe
