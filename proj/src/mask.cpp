// SPDX-License-Identifier: Apache-2.0
#include "ctxprobe/mask.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

void BinaryMask::fill_rect(std::size_t row0, std::size_t col0, std::size_t row1,
                           std::size_t col1) {
    row1 = std::min(row1, height_);
    col1 = std::min(col1, width_);
    for (std::size_t r = row0; r < row1; ++r) {
        std::fill(bits_.begin() + static_cast<std::ptrdiff_t>(r * width_ + col0),
                  bits_.begin() + static_cast<std::ptrdiff_t>(r * width_ + col1), 1);
    }
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

double BinaryMask::area_fraction() const {
    if (bits_.empty()) return 0.0;
    return static_cast<double>(count()) / static_cast<double>(bits_.size());
}

std::size_t BinaryMask::overlap_count(const BinaryMask &other) const {
    if (other.height_ != height_ || other.width_ != width_) {
        throw ValidationError("mask overlap: dimension mismatch");
    }
    std::size_t n = 0;
    for (std::size_t i = 0; i < bits_.size(); ++i) n += (bits_[i] & other.bits_[i]);
    return n;
}

void BinaryMask::union_with(const BinaryMask &other) {
    if (other.height_ != height_ || other.width_ != width_) {
        throw ValidationError("mask union: dimension mismatch");
    }
    for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] |= other.bits_[i];
}

BinaryMask decode_rle(const MaskRle &rle) {
    const std::uint64_t total =
        std::accumulate(rle.counts.begin(), rle.counts.end(), std::uint64_t{0});
    const std::uint64_t expected = static_cast<std::uint64_t>(rle.height) * rle.width;
    if (total != expected) {
        throw ValidationError("mask runs sum to " + std::to_string(total) + ", expected " +
                              std::to_string(expected) + " (" + std::to_string(rle.height) +
                              "x" + std::to_string(rle.width) + ")");
    }
    BinaryMask mask(rle.height, rle.width);
    auto &bits = mask.data();
    std::size_t pos = 0;
    bool fg = false;
    for (const std::uint64_t run : rle.counts) {
        if (fg) std::fill_n(bits.begin() + static_cast<std::ptrdiff_t>(pos), run, 1);
        pos += run;
        fg = !fg;
    }
    return mask;
}

MaskRle encode_rle(const BinaryMask &mask) {
    MaskRle rle{mask.height(), mask.width(), {}};
    std::uint8_t current = 0;
    std::uint64_t run = 0;
    for (const std::uint8_t b : mask.data()) {
        if (b != current) {
            rle.counts.push_back(run);
            run = 0;
            current = b;
        }
        ++run;
    }
    rle.counts.push_back(run);
    return rle;
}

} // namespace ctxprobe
