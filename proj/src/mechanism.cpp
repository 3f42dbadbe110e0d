// SPDX-License-Identifier: Apache-2.0
#include "ctxprobe/mechanism.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>

#include "ctxprobe/error.hpp"
#include "ctxprobe/kernels.hpp"
#include "ctxprobe/protocol.hpp"
#include "ctxprobe/rng.hpp"

namespace ctxprobe::mechanism {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::size_t to_size(std::string_view s, std::string_view whole) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ParseError("bad grid spec '" + std::string(whole) + "'");
    }
    return v;
}

std::uint64_t stream_seed(std::uint64_t seed, Task task, std::size_t layer) {
    return CounterRng::mix(CounterRng::mix(seed + static_cast<std::uint64_t>(task) + 1) + layer);
}

} // namespace

GridSpec GridSpec::llava_24x24() { return {}; }

GridSpec GridSpec::internvl_16x16_merged() {
    return {448, 16, 16, 28, Preprocessing::resize_only, 2};
}

void GridSpec::validate() const {
    if (grid_rows == 0 || grid_cols == 0 || cell_side == 0) {
        throw ValidationError("grid dimensions must be positive");
    }
    if (block_merge != 1 && block_merge != 2) throw ValidationError("block_merge must be 1 or 2");
    if (cell_side % block_merge != 0) {
        throw ValidationError("cell_side must be a multiple of block_merge");
    }
    if (grid_rows * cell_side != input_side || grid_cols * cell_side != input_side) {
        throw ValidationError("grid x cell_side must equal input_side");
    }
}

std::string GridSpec::describe() const {
    return "custom:" + std::to_string(input_side) + ":" + std::to_string(grid_rows) + "x" +
           std::to_string(grid_cols) + ":" + std::to_string(cell_side) + ":" +
           (preprocessing == Preprocessing::pad_to_square_then_resize ? "pad" : "resize") + ":" +
           std::to_string(block_merge);
}

GridSpec parse_grid_spec(std::string_view text) {
    GridSpec g;
    if (text == "24x24") {
        g = GridSpec::llava_24x24();
    } else if (text == "16x16-merged") {
        g = GridSpec::internvl_16x16_merged();
    } else if (text.starts_with("custom:")) {
        const auto parts = split(text.substr(7), ':');
        if (parts.size() != 5) throw ParseError("bad grid spec '" + std::string(text) + "'");
        const auto dims = split(parts[1], 'x');
        if (dims.size() != 2) throw ParseError("bad grid spec '" + std::string(text) + "'");
        g.input_side = to_size(parts[0], text);
        g.grid_rows = to_size(dims[0], text);
        g.grid_cols = to_size(dims[1], text);
        g.cell_side = to_size(parts[2], text);
        if (parts[3] == "pad") {
            g.preprocessing = Preprocessing::pad_to_square_then_resize;
        } else if (parts[3] == "resize") {
            g.preprocessing = Preprocessing::resize_only;
        } else {
            throw ParseError("bad grid preprocessing '" + std::string(parts[3]) + "'");
        }
        g.block_merge = to_size(parts[4], text);
    } else {
        throw ParseError("unknown grid '" + std::string(text) +
                         "' (expected 24x24, 16x16-merged or custom:...)");
    }
    g.validate();
    return g;
}

BinaryMask preprocess_mask(const BinaryMask &mask, const GridSpec &grid) {
    const std::size_t h = mask.height(), w = mask.width(), d = grid.input_side;
    BinaryMask out(d, d);
    if (h == 0 || w == 0) return out;
    if (grid.preprocessing == Preprocessing::pad_to_square_then_resize) {
        const std::size_t s = std::max(h, w);
        const std::size_t oy = (s - h) / 2, ox = (s - w) / 2;
        for (std::size_t y = 0; y < d; ++y) {
            const std::size_t sy = (2 * y + 1) * s / (2 * d);
            if (sy < oy || sy >= oy + h) continue;
            for (std::size_t x = 0; x < d; ++x) {
                const std::size_t sx = (2 * x + 1) * s / (2 * d);
                if (sx < ox || sx >= ox + w) continue;
                if (mask.at(sy - oy, sx - ox)) out.set(y, x);
            }
        }
    } else {
        for (std::size_t y = 0; y < d; ++y) {
            const std::size_t sy = (2 * y + 1) * h / (2 * d);
            for (std::size_t x = 0; x < d; ++x) {
                const std::size_t sx = (2 * x + 1) * w / (2 * d);
                if (mask.at(sy, sx)) out.set(y, x);
            }
        }
    }
    return out;
}

std::vector<std::uint32_t> project_mask_to_patch_set(const BinaryMask &mask,
                                                     const GridSpec &grid) {
    grid.validate();
    // A merged token is fully covered iff its whole block of pre-merge cells
    // is, which is the same as checking the post-merge cell directly.
    const BinaryMask square = preprocess_mask(mask, grid);
    return kernels::omp::fully_covered_cells(square, grid.grid_rows, grid.grid_cols,
                                             grid.cell_side);
}

std::optional<std::size_t> CosineTable::find(const std::string &instance_id) const {
    const auto it = std::find(instance_ids.begin(), instance_ids.end(), instance_id);
    if (it == instance_ids.end()) return std::nullopt;
    return static_cast<std::size_t>(it - instance_ids.begin());
}

CosineTable stability_cosines(const trace::TraceHeader &header,
                              std::span<const trace::TrialTrace> trials, bool parallel) {
    CosineTable table;
    table.layers = header.layer_count;
    const std::size_t layers = header.layer_count;

    std::map<std::string, const trace::TrialTrace *> by_key;
    for (const auto &t : trials) by_key.emplace(t.trial_id, &t);

    struct Candidate {
        const trace::TrialTrace *object;
        const trace::TrialTrace *full;
    };
    std::vector<Candidate> candidates;
    for (const auto &t : trials) {
        if (t.condition != Condition::object_only) continue;
        if (t.patch_indices.empty()) {
            ++table.empty_patch_sets;
            continue;
        }
        const auto mate = by_key.find(image_trial_key(t.instance_id(), Condition::full_scene));
        const trace::TrialTrace *full = nullptr;
        if (mate != by_key.end() && mate->second->patch_indices == t.patch_indices) {
            full = mate->second;
        }
        candidates.push_back({&t, full});
    }

    // Raw recomputation for every candidate with a usable mate.
    std::vector<double> raw_values(candidates.size() * layers, kNaN);
    if (header.has_raw()) {
        std::vector<kernels::CosinePair> pairs;
        std::vector<std::size_t> where;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            if (!candidates[i].full) continue;
            pairs.push_back({candidates[i].full->raw, candidates[i].object->raw,
                             candidates[i].object->patch_indices.size()});
            where.push_back(i);
        }
        std::vector<double> out(pairs.size() * layers);
        std::vector<std::size_t> skipped(pairs.size());
        if (parallel) {
            kernels::omp::mean_patch_cosines(pairs, layers, header.hidden_dim, out, skipped);
        } else {
            kernels::serial::mean_patch_cosines(pairs, layers, header.hidden_dim, out, skipped);
        }
        for (std::size_t k = 0; k < where.size(); ++k) {
            std::copy_n(out.begin() + static_cast<std::ptrdiff_t>(k * layers), layers,
                        raw_values.begin() + static_cast<std::ptrdiff_t>(where[k] * layers));
            table.zero_norm_patches += skipped[k];
        }
    }

    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto &obj = *candidates[i].object;
        const std::size_t p = obj.patch_indices.size();
        std::vector<double> reduced(layers, kNaN);
        if (header.has_reduced()) {
            for (std::size_t l = 0; l < layers; ++l) {
                double sum = 0.0;
                std::size_t used = 0;
                for (std::size_t k = 0; k < p; ++k) {
                    const float c = obj.cosines[l * p + k];
                    if (std::isnan(c)) continue;
                    sum += c;
                    ++used;
                }
                if (used > 0) reduced[l] = sum / static_cast<double>(used);
            }
        }
        const auto raw_row = std::span(raw_values).subspan(i * layers, layers);
        const bool raw_ok =
            std::none_of(raw_row.begin(), raw_row.end(), [](double v) { return std::isnan(v); });
        const bool reduced_ok =
            std::none_of(reduced.begin(), reduced.end(), [](double v) { return std::isnan(v); });

        if (raw_ok && reduced_ok && header.has_reduced()) {
            for (std::size_t l = 0; l < layers; ++l) {
                const double diff = std::abs(raw_row[l] - reduced[l]);
                table.cross_check_max_abs_diff = std::max(table.cross_check_max_abs_diff, diff);
                if (diff > kCrossCheckTolerance) ++table.cross_check_failures;
            }
            ++table.cross_checked;
        }
        if (raw_ok) {
            table.values.insert(table.values.end(), raw_row.begin(), raw_row.end());
        } else if (reduced_ok) {
            table.values.insert(table.values.end(), reduced.begin(), reduced.end());
        } else {
            ++table.unpaired;
            continue;
        }
        table.instance_ids.push_back(obj.instance_id());
    }
    return table;
}

StabilityCurve stability_delta_curve(const CosineTable &cosines, const Correctness &correctness,
                                     std::span<const Task> tasks, std::size_t n_permutations,
                                     std::uint64_t seed) {
    StabilityCurve curve;
    const std::size_t layers = cosines.layers;
    const std::size_t n = cosines.instance_ids.size();
    curve.mean_cosine.assign(layers, kNaN);
    if (n > 0) {
        double total = 0.0;
        for (std::size_t l = 0; l < layers; ++l) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += cosines.values[i * layers + l];
            curve.mean_cosine[l] = s / static_cast<double>(n);
            total += curve.mean_cosine[l];
        }
        curve.overall_mean_cosine = layers > 0 ? total / static_cast<double>(layers) : kNaN;
    } else {
        curve.overall_mean_cosine = kNaN;
    }

    for (const Task task : tasks) {
        TaskStability ts;
        ts.task = task;
        std::vector<std::size_t> idx_correct, idx_incorrect;
        for (std::size_t i = 0; i < n; ++i) {
            const auto it = correctness.find(cosines.instance_ids[i]);
            if (it == correctness.end()) continue;
            const auto jt = it->second.find(task);
            if (jt == it->second.end()) continue;
            (jt->second ? idx_correct : idx_incorrect).push_back(i);
        }
        for (std::size_t l = 0; l < layers; ++l) {
            LayerDelta d;
            d.n_correct = idx_correct.size();
            d.n_incorrect = idx_incorrect.size();
            d.small_n = d.n_correct < 3 || d.n_incorrect < 3;
            if (!idx_correct.empty() && !idx_incorrect.empty()) {
                std::vector<double> a, b;
                for (auto i : idx_correct) a.push_back(cosines.values[i * layers + l]);
                for (auto i : idx_incorrect) b.push_back(cosines.values[i * layers + l]);
                const auto res =
                    stats::permutation_mean_diff(a, b, n_permutations, stream_seed(seed, task, l));
                d.delta = res.observed_diff;
                d.p = res.p;
            }
            ts.layers.push_back(d);
        }
        curve.tasks.push_back(std::move(ts));
    }
    return curve;
}

double top3_logit_mean(std::span<const double> patch_logits) {
    return kernels::top_k_mean(patch_logits, 3);
}

LogitCurve layer_auc_curve(Task task, std::vector<std::string> instance_ids, std::size_t layers,
                           std::vector<double> top3, std::vector<int> correct) {
    LogitCurve curve;
    curve.task = task;
    curve.instance_ids = std::move(instance_ids);
    curve.layers = layers;
    curve.top3 = std::move(top3);
    curve.correct = std::move(correct);
    curve.per_layer.assign(layers, {});
    const std::size_t n = curve.correct.size();
    const auto n_pos = static_cast<std::size_t>(
        std::count_if(curve.correct.begin(), curve.correct.end(), [](int c) { return c != 0; }));
    curve.defined = n_pos > 0 && n_pos < n;
    if (!curve.defined) return curve;

    for (std::size_t l = 0; l < layers; ++l) {
        std::vector<double> pos, neg;
        for (std::size_t i = 0; i < n; ++i) {
            (curve.correct[i] != 0 ? pos : neg).push_back(curve.top3[i * layers + l]);
        }
        auto &out = curve.per_layer[l];
        out.auc = stats::roc_auc(pos, neg);
        out.p = stats::mann_whitney_u(pos, neg).p;
        out.significant = *out.p < kAlpha;
    }
    return curve;
}

LogitInputs collect_top3(const trace::TraceHeader &header,
                         std::span<const trace::TrialTrace> trials,
                         const std::map<std::string, std::pair<std::string, bool>> &truth,
                         bool parallel) {
    LogitInputs in;
    const std::size_t layers = header.layer_count;
    std::vector<kernels::LogitSlab> slabs;
    for (const auto &t : trials) {
        if (t.condition != Condition::object_only) continue;
        const auto it = truth.find(t.instance_id());
        if (it == truth.end()) continue;
        const auto column = header.label_column(it->second.first);
        if (!column || !header.has_reduced()) {
            ++in.missing_label;
            continue;
        }
        const std::size_t rows = t.logit_rows(header);
        if (rows == 0) {
            ++in.no_patches;
            continue;
        }
        slabs.push_back({t.logits, rows, *column});
        in.instance_ids.push_back(t.instance_id());
        in.correct.push_back(it->second.second ? 1 : 0);
    }
    in.top3.resize(slabs.size() * layers);
    if (parallel) {
        kernels::omp::top3_logit_means(slabs, layers, header.labels.size(), in.top3);
    } else {
        kernels::serial::top3_logit_means(slabs, layers, header.labels.size(), in.top3);
    }
    return in;
}

stats::RegressionFit size_controlled_fit(std::span<const double> cosine,
                                         std::span<const double> size,
                                         std::span<const int> correct) {
    if (cosine.size() != size.size() || cosine.size() != correct.size()) {
        throw StatsError("size-controlled fit: column lengths differ");
    }
    const auto zc = stats::zscore(cosine);
    const auto zs = stats::zscore(size);
    return stats::fit_logistic(stats::DesignMatrix::from_columns(
        {"cosine", "size"}, {zc, zs}, std::vector<int>(correct.begin(), correct.end())));
}

} // namespace ctxprobe::mechanism
