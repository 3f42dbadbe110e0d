// SPDX-License-Identifier: Apache-2.0
#include "kernels_detail.hpp"

namespace ctxprobe::kernels::omp {

void mean_patch_cosines(std::span<const CosinePair> pairs, std::size_t layers, std::size_t dim,
                        std::span<double> out, std::span<std::size_t> skipped) {
    const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        skipped[k] = 0;
        detail::pair_cosines(pairs[k], layers, dim, out.data() + k * layers, skipped[k]);
    }
}

void top3_logit_means(std::span<const LogitSlab> slabs, std::size_t layers, std::size_t labels,
                      std::span<double> out) {
    const auto n = static_cast<std::ptrdiff_t>(slabs.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        detail::slab_top3(slabs[k], layers, labels, out.data() + k * layers);
    }
}

std::vector<std::uint32_t> fully_covered_cells(const BinaryMask &mask, std::size_t rows,
                                               std::size_t cols, std::size_t cell_side) {
    std::vector<std::uint8_t> full(rows * cols, 0);
    const auto n = static_cast<std::ptrdiff_t>(rows * cols);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        full[k] = detail::cell_full(mask, k / cols, k % cols, cell_side) ? 1 : 0;
    }
    std::vector<std::uint32_t> out;
    for (std::size_t k = 0; k < full.size(); ++k) {
        if (full[k]) out.push_back(static_cast<std::uint32_t>(k));
    }
    return out;
}

std::size_t permutation_exceedances(std::span<const double> pooled, std::size_t n_first,
                                    double threshold, std::size_t n_permutations,
                                    std::uint64_t seed) {
    const double total = detail::sum_of(pooled);
    std::size_t count = 0;
    const auto n = static_cast<std::ptrdiff_t>(n_permutations);
#pragma omp parallel reduction(+ : count)
    {
        std::vector<double> scratch;
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            if (detail::permuted_abs_diff(pooled, n_first, total, seed,
                                          static_cast<std::uint64_t>(i), scratch) >= threshold) {
                ++count;
            }
        }
    }
    return count;
}

} // namespace ctxprobe::kernels::omp
