// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ctxprobe/mask.hpp"

// Data-parallel inner loops. Each kernel has a straightforward serial
// reference and an OpenMP version; the OpenMP versions split work only
// across independent items (trials, grid rows, permutation iterations), so
// both produce bit-identical results.
namespace ctxprobe::kernels {

// Raw hidden vectors of one (full_scene, object_only) pair.
// Both spans are laid out layers x patches x dim.
struct CosinePair {
    std::span<const float> full;
    std::span<const float> object;
    std::size_t patches = 0;
};

// Per-patch label logits of one trial, laid out layers x patches x labels.
struct LogitSlab {
    std::span<const float> logits;
    std::size_t patches = 0;
    std::size_t label = 0; // column of the label whose logits are ranked
};

namespace serial {

// out is pairs.size() x layers (row-major). A cell is NaN when every patch
// had a zero-norm vector. skipped[i] counts zero-norm patches of pair i.
void mean_patch_cosines(std::span<const CosinePair> pairs, std::size_t layers, std::size_t dim,
                        std::span<double> out, std::span<std::size_t> skipped);

// out is slabs.size() x layers: mean of the top min(3, patches) logits.
void top3_logit_means(std::span<const LogitSlab> slabs, std::size_t layers, std::size_t labels,
                      std::span<double> out);

// Row-major indices of the rows x cols cells (cell_side pixels square) whose
// pixels are all foreground. The mask must be at least rows*cell_side by
// cols*cell_side.
std::vector<std::uint32_t> fully_covered_cells(const BinaryMask &mask, std::size_t rows,
                                               std::size_t cols, std::size_t cell_side);

// Counts permutations whose |mean(first n_first) - mean(rest)| >= threshold.
// Permutation i draws from CounterRng::substream(seed, i).
std::size_t permutation_exceedances(std::span<const double> pooled, std::size_t n_first,
                                    double threshold, std::size_t n_permutations,
                                    std::uint64_t seed);

} // namespace serial

namespace omp {

void mean_patch_cosines(std::span<const CosinePair> pairs, std::size_t layers, std::size_t dim,
                        std::span<double> out, std::span<std::size_t> skipped);
void top3_logit_means(std::span<const LogitSlab> slabs, std::size_t layers, std::size_t labels,
                      std::span<double> out);
std::vector<std::uint32_t> fully_covered_cells(const BinaryMask &mask, std::size_t rows,
                                               std::size_t cols, std::size_t cell_side);
std::size_t permutation_exceedances(std::span<const double> pooled, std::size_t n_first,
                                    double threshold, std::size_t n_permutations,
                                    std::uint64_t seed);

} // namespace omp

// Shared scalar helpers.
double cosine(std::span<const float> a, std::span<const float> b, bool &zero_norm);
double top_k_mean(std::span<const double> values, std::size_t k);

} // namespace ctxprobe::kernels
