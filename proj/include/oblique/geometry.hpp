#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "oblique/rng.hpp"

namespace oblique {

// Axis-aligned box in normalized image coordinates, x right, y down,
// (x_min, y_min) is the top-left corner. Degenerate boxes are allowed and
// have zero area.
struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
    double center_x() const { return 0.5 * (x_min + x_max); }
    double center_y() const { return 0.5 * (y_min + y_max); }
};

// Pixel-space box, half-open on both axes: covers [x_min, x_max) x [y_min, y_max).
struct PixelBox {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;

    int width() const { return x_max - x_min; }
    int height() const { return y_max - y_min; }
    bool empty() const { return x_max <= x_min || y_max <= y_min; }
};

inline BoundingBox to_normalized(const PixelBox& p, int image_w, int image_h) {
    return {static_cast<double>(p.x_min) / image_w, static_cast<double>(p.y_min) / image_h,
            static_cast<double>(p.x_max) / image_w, static_cast<double>(p.y_max) / image_h};
}

// Smallest pixel rectangle covering the normalized box, clamped to the image.
inline PixelBox rasterize(const BoundingBox& b, int image_w, int image_h) {
    PixelBox p;
    p.x_min = std::clamp(static_cast<int>(std::floor(b.x_min * image_w)), 0, image_w);
    p.y_min = std::clamp(static_cast<int>(std::floor(b.y_min * image_h)), 0, image_h);
    p.x_max = std::clamp(static_cast<int>(std::ceil(b.x_max * image_w)), 0, image_w);
    p.y_max = std::clamp(static_cast<int>(std::ceil(b.y_max * image_h)), 0, image_h);
    return p;
}

inline double intersection_area(const BoundingBox& a, const BoundingBox& b) {
    const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    return ix * iy;
}

// Intersection over union; 0 when the union is degenerate.
inline double iou(const BoundingBox& a, const BoundingBox& b) {
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

// Strict: boxes sharing only an edge or a corner do not overlap.
inline bool overlaps(const BoundingBox& a, const BoundingBox& b) {
    return intersection_area(a, b) > 0.0;
}

// Minimum distance between the two boxes as point sets, in normalized units
// (the image is a unit square). Zero when the boxes touch or overlap.
inline double min_box_distance(const BoundingBox& a, const BoundingBox& b) {
    const double dx = std::max({0.0, b.x_min - a.x_max, a.x_min - b.x_max});
    const double dy = std::max({0.0, b.y_min - a.y_max, a.y_min - b.y_max});
    return std::hypot(dx, dy);
}

enum class PlacementDirection { kLeft, kRight, kAbove, kBelow };

inline const char* to_string(PlacementDirection d) {
    switch (d) {
        case PlacementDirection::kLeft: return "left";
        case PlacementDirection::kRight: return "right";
        case PlacementDirection::kAbove: return "above";
        case PlacementDirection::kBelow: return "below";
    }
    return "?";
}

struct PlacedRegion {
    BoundingBox box;     // normalized footprint of `pixels`
    PixelBox pixels;     // authoritative pixel footprint used for masks
    PlacementDirection direction;
};

namespace detail {
inline int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }
}  // namespace detail

// Places a square region beside `target` with its side and gap given as
// fractions of the image width (left/right placements) or height
// (above/below). The square is center-aligned with the target along the
// shared axis. Side length rounds half-up; the position rounds to whole
// pixels away from the target, so the realized gap is in [request,
// request + 1px) and the region never overlaps the target. The direction is
// drawn uniformly among those whose square fits fully inside the image;
// nullopt when no direction fits.
inline std::optional<PlacedRegion> place_square_region(const BoundingBox& target,
                                                       double side_fraction,
                                                       double distance_fraction,
                                                       int image_w, int image_h, Rng& rng) {
    struct Candidate {
        PlacementDirection direction;
        PixelBox pixels;
    };
    std::vector<Candidate> eligible;

    const double tx_min = target.x_min * image_w;
    const double tx_max = target.x_max * image_w;
    const double ty_min = target.y_min * image_h;
    const double ty_max = target.y_max * image_h;

    for (PlacementDirection dir : {PlacementDirection::kLeft, PlacementDirection::kRight,
                                   PlacementDirection::kAbove, PlacementDirection::kBelow}) {
        const bool horizontal =
            dir == PlacementDirection::kLeft || dir == PlacementDirection::kRight;
        const double scale = horizontal ? image_w : image_h;
        const int side = detail::round_half_up(side_fraction * scale);
        if (side < 1) continue;
        const double gap = distance_fraction * scale;

        PixelBox p;
        switch (dir) {
            case PlacementDirection::kLeft:
                p.x_max = static_cast<int>(std::floor(tx_min - gap));
                p.x_min = p.x_max - side;
                p.y_min = static_cast<int>(std::floor(0.5 * (ty_min + ty_max) - 0.5 * side));
                p.y_max = p.y_min + side;
                break;
            case PlacementDirection::kRight:
                p.x_min = static_cast<int>(std::ceil(tx_max + gap));
                p.x_max = p.x_min + side;
                p.y_min = static_cast<int>(std::floor(0.5 * (ty_min + ty_max) - 0.5 * side));
                p.y_max = p.y_min + side;
                break;
            case PlacementDirection::kAbove:
                p.y_max = static_cast<int>(std::floor(ty_min - gap));
                p.y_min = p.y_max - side;
                p.x_min = static_cast<int>(std::floor(0.5 * (tx_min + tx_max) - 0.5 * side));
                p.x_max = p.x_min + side;
                break;
            case PlacementDirection::kBelow:
                p.y_min = static_cast<int>(std::ceil(ty_max + gap));
                p.y_max = p.y_min + side;
                p.x_min = static_cast<int>(std::floor(0.5 * (tx_min + tx_max) - 0.5 * side));
                p.x_max = p.x_min + side;
                break;
        }
        if (p.x_min < 0 || p.y_min < 0 || p.x_max > image_w || p.y_max > image_h) continue;
        if (overlaps(to_normalized(p, image_w, image_h), target)) continue;
        eligible.push_back({dir, p});
    }

    if (eligible.empty()) return std::nullopt;
    const Candidate& pick = eligible[rng.uniform_index(eligible.size())];
    return PlacedRegion{to_normalized(pick.pixels, image_w, image_h), pick.pixels, pick.direction};
}

}  // namespace oblique
