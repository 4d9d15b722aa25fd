#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dscore/errors.hpp"

namespace dscore {

/// n x n near-equal tiling of an H x W map. Regions are numbered 1..n^2 row-major
/// starting at the upper-left corner.
struct RegionGrid {
    std::size_t n = 1;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::size_t> row_bounds;  // n+1 entries, 0 .. height
    std::vector<std::size_t> col_bounds;  // n+1 entries, 0 .. width

    std::size_t region_count() const { return n * n; }

    struct Rect {
        std::size_t row_begin, row_end, col_begin, col_end;
    };

    /// 1-based region index to its rectangle.
    Rect rect(std::size_t index) const {
        if (index < 1 || index > n * n)
            throw UsageError("region index " + std::to_string(index) + " outside 1.." + std::to_string(n * n));
        const std::size_t r = (index - 1) / n, c = (index - 1) % n;
        return {row_bounds[r], row_bounds[r + 1], col_bounds[c], col_bounds[c + 1]};
    }

    /// 1-based region index containing (y, x).
    std::size_t region_of(std::size_t y, std::size_t x) const {
        std::size_t r = 0, c = 0;
        while (row_bounds[r + 1] <= y) ++r;
        while (col_bounds[c + 1] <= x) ++c;
        return r * n + c + 1;
    }
};

/// Boundaries at floor(j*H/n) and floor(j*W/n).
inline RegionGrid partition(std::size_t height, std::size_t width, std::size_t n) {
    if (n < 1) throw UsageError("grid order n must be at least 1");
    if (n > height || n > width)
        throw UsageError("grid order n=" + std::to_string(n) + " exceeds map size " + std::to_string(height) + "x" +
                         std::to_string(width));
    RegionGrid g{n, height, width, {}, {}};
    for (std::size_t j = 0; j <= n; ++j) {
        g.row_bounds.push_back(j * height / n);
        g.col_bounds.push_back(j * width / n);
    }
    return g;
}

/// Zeroing pattern for one convolution layer's output map; applies to every channel and batch item.
struct LayerMask {
    std::size_t layer = 0;  // index into the model's layer list
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> zero;  // height*width, 1 where the activation is deleted

    bool masked(std::size_t y, std::size_t x) const { return zero[y * width + x] != 0; }
};

/// Deletion of region `region` (1-based) in every convolution layer.
struct RegionMaskSet {
    std::size_t n = 1;
    std::size_t region = 1;
    std::vector<LayerMask> layers;

    const LayerMask* for_layer(std::size_t layer) const {
        for (const auto& m : layers)
            if (m.layer == layer) return &m;
        return nullptr;
    }
};

inline LayerMask region_mask(std::size_t layer, std::size_t height, std::size_t width, std::size_t n,
                             std::size_t region) {
    const auto grid = partition(height, width, n);
    const auto rc = grid.rect(region);
    LayerMask m{layer, height, width, std::vector<std::uint8_t>(height * width, 0)};
    for (std::size_t y = rc.row_begin; y < rc.row_end; ++y)
        for (std::size_t x = rc.col_begin; x < rc.col_end; ++x) m.zero[y * width + x] = 1;
    return m;
}

}  // namespace dscore
