// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace ctxprobe {

// Row-major binary mask over an image grid.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(std::size_t height, std::size_t width)
        : height_(height), width_(width), bits_(height * width, 0) {}

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t pixels() const { return bits_.size(); }

    bool at(std::size_t row, std::size_t col) const { return bits_[row * width_ + col] != 0; }
    void set(std::size_t row, std::size_t col, bool on = true) {
        bits_[row * width_ + col] = on ? 1 : 0;
    }
    // Fills the half-open rectangle [row0,row1) x [col0,col1), clipped to the mask.
    void fill_rect(std::size_t row0, std::size_t col0, std::size_t row1, std::size_t col1);

    const std::vector<std::uint8_t> &data() const { return bits_; }
    std::vector<std::uint8_t> &data() { return bits_; }

    std::size_t count() const;
    double area_fraction() const;
    std::size_t overlap_count(const BinaryMask &other) const;
    void union_with(const BinaryMask &other);

    bool operator==(const BinaryMask &) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<std::uint8_t> bits_;
};

// Uncompressed run-length encoding: alternating background/foreground run
// lengths in row-major order, starting with a (possibly zero) background run.
struct MaskRle {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint64_t> counts;

    bool operator==(const MaskRle &) const = default;
};

// Throws ValidationError when the runs do not sum to height * width.
BinaryMask decode_rle(const MaskRle &rle);
MaskRle encode_rle(const BinaryMask &mask);

} // namespace ctxprobe
