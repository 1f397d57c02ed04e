#include "fgir/region.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "fgir/errors.hpp"

namespace fgir {

std::vector<double> resize_bilinear(const std::vector<double>& map, std::size_t in_w,
                                    std::size_t in_h, std::size_t out_w, std::size_t out_h) {
    if (in_w == 0 || in_h == 0 || map.size() != in_w * in_h)
        throw ContractError("resize_bilinear: bad source extents");
    if (out_w == 0 || out_h == 0) throw ContractError("resize_bilinear: output extents must be >= 1");

    const double sy = out_h > 1 ? static_cast<double>(in_h - 1) / static_cast<double>(out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(in_w - 1) / static_cast<double>(out_w - 1) : 0.0;

    std::vector<double> out(out_w * out_h);
    for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = static_cast<double>(y) * sy;
        std::size_t y0 = static_cast<std::size_t>(fy);
        if (y0 >= in_h - 1) y0 = in_h - 1;
        const std::size_t y1 = std::min(y0 + 1, in_h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double fx = static_cast<double>(x) * sx;
            std::size_t x0 = static_cast<std::size_t>(fx);
            if (x0 >= in_w - 1) x0 = in_w - 1;
            const std::size_t x1 = std::min(x0 + 1, in_w - 1);
            const double wx = fx - static_cast<double>(x0);
            const double top = map[y0 * in_w + x0] * (1.0 - wx) + map[y0 * in_w + x1] * wx;
            const double bot = map[y1 * in_w + x0] * (1.0 - wx) + map[y1 * in_w + x1] * wx;
            out[y * out_w + x] = top * (1.0 - wy) + bot * wy;
        }
    }
    return out;
}

Tensor resize_bilinear(const Tensor& image2d, std::size_t out_w, std::size_t out_h) {
    require_rank(image2d, 2, "resize_bilinear image");
    const std::size_t in_h = image2d.extent(0), in_w = image2d.extent(1);
    std::vector<double> out = resize_bilinear(image2d.values(), in_w, in_h, out_w, out_h);
    return Tensor({out_h, out_w}, std::move(out));
}

ConfidenceMap normalize_map(const std::vector<double>& map, std::size_t width, std::size_t height) {
    if (map.size() != width * height) throw ContractError("normalize_map: bad extents");
    double mx = 0.0;
    for (double v : map) mx = std::max(mx, v);
    if (mx <= 1e-9) throw DegenerateMapError("normalize_map: degenerate map, all responses <= 1e-9");
    ConfidenceMap out;
    out.width = width;
    out.height = height;
    out.values.resize(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) out.values[i] = map[i] / mx;
    return out;
}

BinaryMask binarize(const ConfidenceMap& map, double t) {
    if (!(t > 0.0 && t < 1.0)) throw ContractError("binarize: threshold must lie in (0,1)");
    BinaryMask mask;
    mask.width = map.width;
    mask.height = map.height;
    mask.bits.resize(map.values.size());
    for (std::size_t i = 0; i < map.values.size(); ++i)
        mask.bits[i] = map.values[i] >= t ? 1 : 0;
    return mask;
}

std::vector<PixelRegion> label_components(const BinaryMask& mask) {
    const std::size_t w = mask.width, h = mask.height;
    std::vector<int> label(w * h, -1);
    std::vector<PixelRegion> regions;
    std::deque<std::size_t> queue;

    for (std::size_t start = 0; start < w * h; ++start) {
        if (mask.bits[start] == 0 || label[start] != -1) continue;
        const int id = static_cast<int>(regions.size());
        PixelRegion region;
        region.label = id;
        label[start] = id;
        queue.push_back(start);
        while (!queue.empty()) {
            const std::size_t p = queue.front();
            queue.pop_front();
            region.pixels.push_back(p);
            const std::size_t r = p / w, c = p % w;
            const std::size_t neighbors[4][2] = {{r, c + 1}, {r + 1, c}, {r, c - 1}, {r - 1, c}};
            for (const auto& nb : neighbors) {
                if (nb[0] >= h || nb[1] >= w) continue;  // unsigned wrap guards the border
                const std::size_t q = nb[0] * w + nb[1];
                if (mask.bits[q] != 0 && label[q] == -1) {
                    label[q] = id;
                    queue.push_back(q);
                }
            }
        }
        std::sort(region.pixels.begin(), region.pixels.end());
        regions.push_back(std::move(region));
    }
    return regions;
}

PixelRegion dominant_region(const std::vector<PixelRegion>& regions, std::size_t mask_width,
                            std::size_t mask_height, double min_frac) {
    if (!(min_frac >= 0.0 && min_frac < 1.0))
        throw ContractError("dominant_region: min_frac must lie in [0,1)");
    const double cutoff = min_frac * static_cast<double>(mask_width * mask_height);
    const PixelRegion* best = nullptr;
    for (const PixelRegion& r : regions) {
        if (static_cast<double>(r.size()) < cutoff) continue;
        if (r.size() == 0) continue;
        if (best == nullptr || r.size() > best->size()) best = &r;  // ties keep the lower label
    }
    if (best == nullptr) throw NoDominantRegionError("dominant_region: no region survives the size cutoff");
    return *best;
}

BoundingBox min_enclosing_rect(const PixelRegion& region, std::size_t mask_width) {
    if (region.pixels.empty()) throw ContractError("min_enclosing_rect: empty region");
    BoundingBox box;
    box.row0 = box.col0 = static_cast<std::size_t>(-1);
    box.row1 = box.col1 = 0;
    for (std::size_t p : region.pixels) {
        const std::size_t r = p / mask_width, c = p % mask_width;
        box.row0 = std::min(box.row0, r);
        box.row1 = std::max(box.row1, r);
        box.col0 = std::min(box.col0, c);
        box.col1 = std::max(box.col1, c);
    }
    return box;
}

Tensor crop_region(const Tensor& image, const BoundingBox& box, std::size_t map_w,
                   std::size_t map_h) {
    require_rank(image, 3, "crop_region image");
    const std::size_t c = image.extent(0), h = image.extent(1), w = image.extent(2);
    if (box.row1 >= map_h || box.col1 >= map_w || box.row0 > box.row1 || box.col0 > box.col1)
        throw ContractError("crop_region: box invalid in map coordinates");

    // Map pixel r covers image rows [r*h/map_h, (r+1)*h/map_h); round outward.
    const std::size_t r0 = box.row0 * h / map_h;
    const std::size_t r1 = ((box.row1 + 1) * h + map_h - 1) / map_h;  // exclusive
    const std::size_t c0 = box.col0 * w / map_w;
    const std::size_t c1 = ((box.col1 + 1) * w + map_w - 1) / map_w;  // exclusive
    if (r1 <= r0 || c1 <= c0 || r1 > h || c1 > w)
        throw ContractError("crop_region: scaled box is empty");

    const std::size_t oh = r1 - r0, ow = c1 - c0;
    Tensor out({c, oh, ow});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = r0; y < r1; ++y)
            for (std::size_t x = c0; x < c1; ++x)
                out[(ch * oh + (y - r0)) * ow + (x - c0)] = image[(ch * h + y) * w + x];
    return out;
}

} // namespace fgir
