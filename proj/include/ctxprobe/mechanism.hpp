// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxprobe/labels.hpp"
#include "ctxprobe/mask.hpp"
#include "ctxprobe/stats.hpp"
#include "ctxprobe/tracefmt.hpp"

namespace ctxprobe::mechanism {

enum class Preprocessing { pad_to_square_then_resize, resize_only };

struct GridSpec {
    std::size_t input_side = 336;
    std::size_t grid_rows = 24;
    std::size_t grid_cols = 24;
    std::size_t cell_side = 14; // pixels per token after any block merge
    Preprocessing preprocessing = Preprocessing::pad_to_square_then_resize;
    std::size_t block_merge = 1; // 1 = none, 2 = 2x2 pixel-shuffle

    static GridSpec llava_24x24();
    static GridSpec internvl_16x16_merged();

    // Throws ValidationError on inconsistent geometry.
    void validate() const;
    std::size_t cells() const { return grid_rows * grid_cols; }
    std::string describe() const;

    bool operator==(const GridSpec &) const = default;
};

// "24x24", "16x16-merged", or
// "custom:<input_side>:<rows>x<cols>:<cell_side>:<pad|resize>:<merge>".
GridSpec parse_grid_spec(std::string_view text);

// Applies the image preprocessing to a mask: pad to a centered square with
// background, then nearest-neighbour resize to input_side (resize_only skips
// the padding). Source pixel for output d of D from S is floor((d + 0.5) S / D).
BinaryMask preprocess_mask(const BinaryMask &mask, const GridSpec &grid);

// Row-major indices of grid cells whose every pixel is foreground after
// preprocessing. May be empty.
std::vector<std::uint32_t> project_mask_to_patch_set(const BinaryMask &mask,
                                                     const GridSpec &grid);

// --- representational stability ----------------------------------------------

struct CosineTable {
    std::vector<std::string> instance_ids;
    std::size_t layers = 0;
    std::vector<double> values; // instance x layer, row-major

    std::size_t zero_norm_patches = 0; // skipped inside the mean
    std::size_t empty_patch_sets = 0;  // instances excluded
    std::size_t unpaired = 0;          // object-only records without usable cosines

    // Raw-vs-reduced agreement, filled when the trace has both payloads.
    std::size_t cross_checked = 0;
    double cross_check_max_abs_diff = 0.0;
    std::size_t cross_check_failures = 0; // |diff| > 1e-4

    std::span<const double> row(std::size_t i) const {
        return std::span(values).subspan(i * layers, layers);
    }
    std::optional<std::size_t> find(const std::string &instance_id) const;
};

inline constexpr double kCrossCheckTolerance = 1e-4;

// Per-instance, per-layer mean patch cosine between the full-scene and
// object-only records. Raw payloads are used when present (and cross-checked
// against reduced scalars when both exist); otherwise the reduced per-patch
// cosines are averaged, ignoring NaN entries.
CosineTable stability_cosines(const trace::TraceHeader &header,
                              std::span<const trace::TrialTrace> trials, bool parallel = true);

// Correctness of the object-only trials of one instance, by task.
using Correctness = std::map<std::string, std::map<Task, bool>>;

struct LayerDelta {
    std::optional<double> delta; // mean(correct) - mean(incorrect)
    std::optional<double> p;
    std::size_t n_correct = 0;
    std::size_t n_incorrect = 0;
    bool small_n = false; // a group has fewer than 3 trials
};

struct TaskStability {
    Task task = Task::scene;
    std::vector<LayerDelta> layers;
};

struct StabilityCurve {
    std::vector<double> mean_cosine; // per layer, over instances
    double overall_mean_cosine = 0.0;
    std::vector<TaskStability> tasks;
};

StabilityCurve stability_delta_curve(const CosineTable &cosines, const Correctness &correctness,
                                     std::span<const Task> tasks,
                                     std::size_t n_permutations = 1000, std::uint64_t seed = 42);

// --- logit lens ----------------------------------------------------------------

// Mean of the largest min(3, n) values.
double top3_logit_mean(std::span<const double> patch_logits);

struct LogitLayer {
    std::optional<double> auc;
    std::optional<double> p; // one-sided Mann-Whitney, correct > incorrect
    bool significant = false;
};

struct LogitCurve {
    Task task = Task::scene;
    std::vector<std::string> instance_ids;
    std::size_t layers = 0;
    std::vector<double> top3; // instance x layer
    std::vector<int> correct; // per instance
    std::vector<LogitLayer> per_layer;
    bool defined = false; // false when only one correctness class is present
};

inline constexpr double kAlpha = 0.05;

// top3: instance x layer matrix; correct: 0/1 per instance.
LogitCurve layer_auc_curve(Task task, std::vector<std::string> instance_ids, std::size_t layers,
                           std::vector<double> top3, std::vector<int> correct);

struct LogitInputs {
    std::vector<std::string> instance_ids;
    std::vector<double> top3; // instance x layer
    std::vector<int> correct;
    std::size_t missing_label = 0; // truth label absent from the trace label table
    std::size_t no_patches = 0;    // no logit rows to rank
};

// Collects the top-3 mean of the truth label for one task from the
// object-only records. truth maps instance_id -> (truth label, correct).
LogitInputs collect_top3(const trace::TraceHeader &header,
                         std::span<const trace::TrialTrace> trials,
                         const std::map<std::string, std::pair<std::string, bool>> &truth,
                         bool parallel = true);

// Logistic fit of correctness on z(mean-over-layers cosine) and z(size).
stats::RegressionFit size_controlled_fit(std::span<const double> cosine,
                                         std::span<const double> size,
                                         std::span<const int> correct);

} // namespace ctxprobe::mechanism
