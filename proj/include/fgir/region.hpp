#pragma once

#include <cstdint>
#include <vector>

#include "fgir/tensor.hpp"

namespace fgir {

// Turns a selected confidence map into a discriminative region: normalize,
// resize, binarize, connected-component analysis, dominant region, minimum
// enclosing rectangle, crop.

struct ConfidenceMap {
    std::size_t width = 0, height = 0;
    std::vector<double> values;  // normalized to [0,1], max exactly 1

    double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
};

struct BinaryMask {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> bits;  // 1 foreground, 0 background

    bool at(std::size_t r, std::size_t c) const { return bits[r * width + c] != 0; }
};

struct BoundingBox {
    std::size_t row0 = 0, col0 = 0, row1 = 0, col1 = 0;  // inclusive
};

struct PixelRegion {
    int label = 0;
    std::vector<std::size_t> pixels;  // flat row-major indices, ascending

    std::size_t size() const { return pixels.size(); }
};

// Bilinear interpolation with edge-aligned corners: the first and last output
// samples coincide with the first and last source samples along each axis.
// `map` is row-major height x width.
std::vector<double> resize_bilinear(const std::vector<double>& map, std::size_t in_w,
                                    std::size_t in_h, std::size_t out_w, std::size_t out_h);

Tensor resize_bilinear(const Tensor& image2d, std::size_t out_w, std::size_t out_h);

// Divides by the maximum so the peak becomes exactly 1. Throws
// DegenerateMapError when no value exceeds the 1e-9 guard.
ConfidenceMap normalize_map(const std::vector<double>& map, std::size_t width, std::size_t height);

// Foreground iff value >= t; t must lie in (0,1).
BinaryMask binarize(const ConfidenceMap& map, double t);

// 4-connectivity labeling; labels assigned in first-encounter row-major order
// starting at 0.
std::vector<PixelRegion> label_components(const BinaryMask& mask);

// Discards regions smaller than min_frac of the mask area, returns the
// largest survivor (ties: lowest label). Throws NoDominantRegionError when
// nothing survives.
PixelRegion dominant_region(const std::vector<PixelRegion>& regions, std::size_t mask_width,
                            std::size_t mask_height, double min_frac = 0.01);

BoundingBox min_enclosing_rect(const PixelRegion& region, std::size_t mask_width);

// Scales `box` from map coordinates to image coordinates (rounded outward so
// no region pixel is lost) and crops. `image` is [c,h,w].
Tensor crop_region(const Tensor& image, const BoundingBox& box, std::size_t map_w,
                   std::size_t map_h);

} // namespace fgir
