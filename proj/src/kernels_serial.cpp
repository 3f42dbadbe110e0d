// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <functional>

#include "kernels_detail.hpp"

namespace ctxprobe::kernels {

double cosine(std::span<const float> a, std::span<const float> b, bool &zero_norm) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i], y = b[i];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    zero_norm = na == 0.0 || nb == 0.0;
    if (zero_norm) return 0.0;
    // sqrt(na * nb) rather than sqrt(na) * sqrt(nb): identical vectors give exactly 1.
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double top_k_mean(std::span<const double> values, std::size_t k) {
    k = std::min(k, values.size());
    if (k == 0) return std::numeric_limits<double>::quiet_NaN();
    std::vector<double> v(values.begin(), values.end());
    std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end(),
                      std::greater<>());
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += v[i];
    return s / static_cast<double>(k);
}

namespace serial {

void mean_patch_cosines(std::span<const CosinePair> pairs, std::size_t layers, std::size_t dim,
                        std::span<double> out, std::span<std::size_t> skipped) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        skipped[i] = 0;
        detail::pair_cosines(pairs[i], layers, dim, out.data() + i * layers, skipped[i]);
    }
}

void top3_logit_means(std::span<const LogitSlab> slabs, std::size_t layers, std::size_t labels,
                      std::span<double> out) {
    for (std::size_t i = 0; i < slabs.size(); ++i) {
        detail::slab_top3(slabs[i], layers, labels, out.data() + i * layers);
    }
}

std::vector<std::uint32_t> fully_covered_cells(const BinaryMask &mask, std::size_t rows,
                                               std::size_t cols, std::size_t cell_side) {
    std::vector<std::uint32_t> out;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (detail::cell_full(mask, r, c, cell_side)) {
                out.push_back(static_cast<std::uint32_t>(r * cols + c));
            }
        }
    }
    return out;
}

std::size_t permutation_exceedances(std::span<const double> pooled, std::size_t n_first,
                                    double threshold, std::size_t n_permutations,
                                    std::uint64_t seed) {
    const double total = detail::sum_of(pooled);
    std::vector<double> scratch;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n_permutations; ++i) {
        if (detail::permuted_abs_diff(pooled, n_first, total, seed, i, scratch) >= threshold) {
            ++count;
        }
    }
    return count;
}

} // namespace serial
} // namespace ctxprobe::kernels
