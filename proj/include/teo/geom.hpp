#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace teo {

/// Axis-aligned box in integer pixel coordinates, origin top-left,
/// half-open on the max edges: pixel (x, y) is covered iff
/// x_min <= x < x_max and y_min <= y < y_max.
struct BBox {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;

    bool valid() const { return x_min >= 0 && y_min >= 0 && x_min < x_max && y_min < y_max; }
    long long width() const { return x_max - x_min; }
    long long height() const { return y_max - y_min; }
    long long area() const { return width() * height(); }

    bool contains(const BBox& other) const {
        return x_min <= other.x_min && y_min <= other.y_min && x_max >= other.x_max &&
               y_max >= other.y_max;
    }
    std::optional<BBox> intersection(const BBox& other) const;
    bool intersects(const BBox& other) const { return intersection(other).has_value(); }
    double iou(const BBox& other) const;

    bool operator==(const BBox&) const = default;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

/// Simple polygon in real-valued pixel coordinates. Rings are stored open
/// (closing vertex not repeated); normalize() drops a duplicated closing
/// vertex. Interior rings punch holes under the even-odd fill rule.
struct Polygon {
    std::vector<Point> exterior;
    std::vector<std::vector<Point>> holes;

    /// Drop duplicated closing vertices from all rings.
    void normalize();
    /// Exterior has >= 3 vertices and no ring self-intersects.
    bool valid(std::string* why = nullptr) const;
    /// Shoelace area of the exterior minus hole areas (always >= 0 here).
    double area() const;
};

/// Smallest integer half-open box containing all vertices (floor mins,
/// ceil maxes). Returns nullopt when the rounded box has zero area; the
/// caller decides whether to drop or keep such degenerate labels.
std::optional<BBox> min_aabb(const Polygon& poly);

/// Dense per-pixel label grid, row-major. Label 0 is reserved background;
/// every stored label must be < num_classes.
struct Mask {
    int width = 0;
    int height = 0;
    int num_classes = 2;
    std::vector<uint8_t> labels;

    static Mask zeros(int w, int h, int classes = 2);
    uint8_t at(int x, int y) const { return labels[static_cast<size_t>(y) * width + x]; }
    uint8_t& at(int x, int y) { return labels[static_cast<size_t>(y) * width + x]; }
    bool same_extent(const Mask& other) const {
        return width == other.width && height == other.height;
    }
    size_t foreground_count() const;
    bool operator==(const Mask&) const = default;
};

struct Shape {
    std::variant<BBox, Polygon> geometry;
    uint8_t label = 1;
};

/// Paint shapes onto a fresh mask. A pixel takes a shape's label iff its
/// center (x + 0.5, y + 0.5) lies inside the shape (even-odd rule for
/// polygons, half-open containment for boxes). Later shapes overwrite
/// earlier ones; geometry outside the extent is clipped.
/// Throws std::invalid_argument on label 0, label >= num_classes, or an
/// invalid polygon (message names the offending shape index).
Mask rasterize(const std::vector<Shape>& shapes, int width, int height, int num_classes = 2);

/// Affine frame change: p' = p * scale - (dx, dy), clipped to the target
/// extent. Covers grid tiling (scale 1, integer offsets) and the
/// shorter-side-to-224 resize + center crop used to normalize frames.
struct TileTransform {
    int src_w = 0;
    int src_h = 0;
    double scale = 1.0;
    double dx = 0.0;
    double dy = 0.0;
    int dst_w = 0;
    int dst_h = 0;

    static TileTransform identity(int w, int h);
    /// Pure crop window [x0, x0+w) x [y0, y0+h) at scale 1.
    static TileTransform crop(int src_w, int src_h, int x0, int y0, int w, int h);
    /// Scale the shorter side to `target`, then center-crop to target x target.
    static TileTransform shorter_side_center_crop(int src_w, int src_h, int target);
    /// Inverse mapping (exact up to the clipping applied on the way in).
    TileTransform inverse() const;

    bool operator==(const TileTransform&) const = default;
};

/// Post-clip drop rule for transformed geometry: drop when the clipped
/// area is below an absolute floor or below a fraction of the original.
struct DropPolicy {
    double min_area_px = 10.0;
    double min_area_fraction = 0.10;

    bool drop(double clipped_area, double original_area) const {
        return clipped_area < min_area_px || clipped_area < min_area_fraction * original_area;
    }
};

/// Scale, offset, and clip a box to the target extent. Mins round down and
/// maxes round up, so coverage is never lost. nullopt means the box was
/// dropped (clipped away entirely or under the drop policy) — a normal
/// outcome, not an error.
std::optional<BBox> transform_box(const BBox& box, const TileTransform& t,
                                  const DropPolicy& policy = {});

/// Same frame change for polygons: vertices mapped, then Sutherland-Hodgman
/// clipped against the target rectangle. Holes are clipped independently.
std::optional<Polygon> transform_polygon(const Polygon& poly, const TileTransform& t,
                                         const DropPolicy& policy = {});

/// Boxes backing two binary masks, used to suppress spurious diff pixels:
/// any box in `a` that positively intersects any box in `b` (and vice
/// versa) has its full extent forced to background in the diff.
struct OverlapBoxes {
    std::vector<BBox> a;
    std::vector<BBox> b;
};

/// Symmetric difference of two binary masks: output pixel is 1 iff set in
/// exactly one input. With overlap masking, pixels of every cross-
/// intersecting box pair are zeroed. Throws std::invalid_argument on
/// extent mismatch or non-binary inputs.
Mask mask_diff(const Mask& a, const Mask& b, const OverlapBoxes* overlap_masking = nullptr);

/// Debug dump: 8-bit single-channel PNG, label values stored as-is.
void write_mask_png(const Mask& mask, const std::string& path);

}  // namespace teo
