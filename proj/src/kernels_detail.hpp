// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "ctxprobe/kernels.hpp"
#include "ctxprobe/rng.hpp"

namespace ctxprobe::kernels::detail {

inline void pair_cosines(const CosinePair &pair, std::size_t layers, std::size_t dim,
                         double *out_row, std::size_t &skipped) {
    for (std::size_t l = 0; l < layers; ++l) {
        double sum = 0.0;
        std::size_t used = 0;
        for (std::size_t p = 0; p < pair.patches; ++p) {
            const std::size_t off = (l * pair.patches + p) * dim;
            bool zero = false;
            const double c =
                cosine(pair.full.subspan(off, dim), pair.object.subspan(off, dim), zero);
            if (zero) {
                ++skipped;
                continue;
            }
            sum += c;
            ++used;
        }
        out_row[l] = used == 0 ? std::numeric_limits<double>::quiet_NaN()
                               : sum / static_cast<double>(used);
    }
}

inline void slab_top3(const LogitSlab &slab, std::size_t layers, std::size_t labels,
                      double *out_row) {
    std::vector<double> column(slab.patches);
    for (std::size_t l = 0; l < layers; ++l) {
        for (std::size_t p = 0; p < slab.patches; ++p) {
            column[p] = slab.logits[(l * slab.patches + p) * labels + slab.label];
        }
        out_row[l] = top_k_mean(column, 3);
    }
}

inline bool cell_full(const BinaryMask &mask, std::size_t r, std::size_t c, std::size_t side) {
    for (std::size_t y = r * side; y < (r + 1) * side; ++y) {
        for (std::size_t x = c * side; x < (c + 1) * side; ++x) {
            if (!mask.at(y, x)) return false;
        }
    }
    return true;
}

// Partial Fisher-Yates over a scratch copy: the first n_first slots form the
// permuted first group.
inline double permuted_abs_diff(std::span<const double> pooled, std::size_t n_first,
                                double total, std::uint64_t seed, std::uint64_t iteration,
                                std::vector<double> &scratch) {
    scratch.assign(pooled.begin(), pooled.end());
    CounterRng rng = CounterRng::substream(seed, iteration);
    const std::size_t n = scratch.size();
    double first = 0.0;
    for (std::size_t s = 0; s < n_first; ++s) {
        const std::size_t r = s + static_cast<std::size_t>(rng.below(n - s));
        std::swap(scratch[s], scratch[r]);
        first += scratch[s];
    }
    const double mean_first = first / static_cast<double>(n_first);
    const double mean_rest = (total - first) / static_cast<double>(n - n_first);
    return std::abs(mean_first - mean_rest);
}

inline double sum_of(std::span<const double> v) {
    double s = 0.0;
    for (const double x : v) s += x;
    return s;
}

} // namespace ctxprobe::kernels::detail
