// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxprobe/labels.hpp"
#include "ctxprobe/protocol.hpp"

// Binary activation-trace container ("OCPT", little-endian, f32 payloads).
//
//   header  magic[4] "OCPT" | u16 version=1 | u16 flags | u16 grid_rows |
//           u16 grid_cols | u16 layer_count | u32 hidden_dim |
//           u32 label_count | label_count x (u16 byte_len, bytes, u32 token_id)
//   record  u16 id_len, id bytes | u8 condition (0 full_scene, 1 object_only) |
//           u32 patch_count | patch_count x u32 index |
//           per layer: [reduced] logits (logit_rows x label_count f32)
//                      [reduced, object_only] cosines (patch_count f32)
//                      [raw] hidden (patch_count x hidden_dim f32)
//   footer  u64 record_count
//
// logit_rows is patch_count, or grid_rows*grid_cols when kFlagFullGridLogits
// is set (logits over every image patch, row-major).
namespace ctxprobe::trace {

inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::uint16_t kFlagRaw = 1u << 0;
inline constexpr std::uint16_t kFlagReduced = 1u << 1;
inline constexpr std::uint16_t kFlagFullGridLogits = 1u << 2;

struct LabelEntry {
    std::string label;
    std::uint32_t token_id = 0;
    bool operator==(const LabelEntry &) const = default;
};

struct TraceHeader {
    std::uint16_t version = kVersion;
    std::uint16_t flags = kFlagReduced;
    std::uint16_t grid_rows = 0;
    std::uint16_t grid_cols = 0;
    std::uint16_t layer_count = 0;
    std::uint32_t hidden_dim = 0;
    std::vector<LabelEntry> labels;

    bool has_raw() const { return (flags & kFlagRaw) != 0; }
    bool has_reduced() const { return (flags & kFlagReduced) != 0; }
    bool full_grid_logits() const { return (flags & kFlagFullGridLogits) != 0; }
    std::size_t grid_cells() const { return std::size_t{grid_rows} * grid_cols; }
    std::optional<std::size_t> label_column(std::string_view label) const;

    // Throws ValidationError when an invariant fails.
    void validate() const;
    std::size_t encoded_size() const;

    bool operator==(const TraceHeader &) const = default;
};

// One image-condition record. trial_id is the image-trial key
// "<instance_id>|<condition>" shared by the three task prompts.
struct TrialTrace {
    std::string trial_id;
    Condition condition = Condition::full_scene;
    std::vector<std::uint32_t> patch_indices; // strictly increasing
    std::vector<float> logits;                // layers x logit_rows x labels
    std::vector<float> cosines;               // layers x patches (object_only, reduced)
    std::vector<float> raw;                   // layers x patches x hidden_dim

    // Set by read_trace when a payload float is NaN; not serialized.
    bool nan_warning = false;

    std::string instance_id() const;
    std::size_t logit_rows(const TraceHeader &h) const;
    float logit(const TraceHeader &h, std::size_t layer, std::size_t row,
                std::size_t label) const;

    // Throws ValidationError naming trial_id on any layout violation.
    void validate(const TraceHeader &h) const;
    std::size_t encoded_size(const TraceHeader &h) const;

    bool operator==(const TrialTrace &o) const; // bitwise on floats, ignores nan_warning
};

struct TraceFile {
    TraceHeader header;
    std::vector<TrialTrace> trials;
};

std::vector<std::uint8_t> encode_trace(const TraceHeader &header,
                                       std::span<const TrialTrace> trials);
TraceFile decode_trace(std::span<const std::uint8_t> bytes);

void write_trace(const TraceHeader &header, std::span<const TrialTrace> trials,
                 const std::filesystem::path &path);
TraceFile read_trace(const std::filesystem::path &path);

struct ValidationReport {
    std::vector<std::string> issues;
    std::vector<std::string> warnings;
    bool clean() const { return issues.empty(); }
};

// Cross-checks a trace against the prompt plan it was captured for.
ValidationReport validate_trace(const TraceHeader &header, std::span<const TrialTrace> trials,
                                std::span<const PromptPlan> plans);

} // namespace ctxprobe::trace
