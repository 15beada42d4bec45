#include "teo/geom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

#include <zlib.h>

namespace teo {

std::optional<BBox> BBox::intersection(const BBox& other) const {
    BBox r{std::max(x_min, other.x_min), std::max(y_min, other.y_min),
           std::min(x_max, other.x_max), std::min(y_max, other.y_max)};
    if (r.x_min >= r.x_max || r.y_min >= r.y_max) return std::nullopt;
    return r;
}

double BBox::iou(const BBox& other) const {
    auto inter = intersection(other);
    if (!inter) return 0.0;
    long long ia = inter->area();
    long long ua = area() + other.area() - ia;
    return ua > 0 ? static_cast<double>(ia) / static_cast<double>(ua) : 0.0;
}

namespace {

void normalize_ring(std::vector<Point>& ring) {
    while (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
}

double ring_area(const std::vector<Point>& ring) {
    double a = 0.0;
    size_t n = ring.size();
    for (size_t i = 0; i < n; ++i) {
        const Point& p = ring[i];
        const Point& q = ring[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    return std::abs(a) * 0.5;
}

int orientation(const Point& a, const Point& b, const Point& c) {
    double v = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    if (v > 0) return 1;
    if (v < 0) return -1;
    return 0;
}

bool on_segment(const Point& a, const Point& b, const Point& p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
           std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

bool segments_intersect(const Point& a, const Point& b, const Point& c, const Point& d) {
    int o1 = orientation(a, b, c);
    int o2 = orientation(a, b, d);
    int o3 = orientation(c, d, a);
    int o4 = orientation(c, d, b);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(a, b, c)) return true;
    if (o2 == 0 && on_segment(a, b, d)) return true;
    if (o3 == 0 && on_segment(c, d, a)) return true;
    if (o4 == 0 && on_segment(c, d, b)) return true;
    return false;
}

bool ring_self_intersects(const std::vector<Point>& ring) {
    size_t n = ring.size();
    if (n < 3) return false;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            // skip edges sharing a vertex (adjacent, incl. first/last)
            if (j == i + 1 || (i == 0 && j == n - 1)) continue;
            if (segments_intersect(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]))
                return true;
        }
    }
    return false;
}

}  // namespace

void Polygon::normalize() {
    normalize_ring(exterior);
    for (auto& h : holes) normalize_ring(h);
}

bool Polygon::valid(std::string* why) const {
    if (exterior.size() < 3) {
        if (why) *why = "exterior ring has fewer than 3 vertices";
        return false;
    }
    for (const auto& p : exterior) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
            if (why) *why = "non-finite vertex coordinate";
            return false;
        }
    }
    if (ring_self_intersects(exterior)) {
        if (why) *why = "exterior ring self-intersects";
        return false;
    }
    for (const auto& h : holes) {
        if (h.size() < 3) {
            if (why) *why = "interior ring has fewer than 3 vertices";
            return false;
        }
        if (ring_self_intersects(h)) {
            if (why) *why = "interior ring self-intersects";
            return false;
        }
    }
    return true;
}

double Polygon::area() const {
    double a = ring_area(exterior);
    for (const auto& h : holes) a -= ring_area(h);
    return a;
}

std::optional<BBox> min_aabb(const Polygon& poly) {
    if (poly.exterior.empty()) return std::nullopt;
    double xmin = poly.exterior[0].x, xmax = xmin;
    double ymin = poly.exterior[0].y, ymax = ymin;
    for (const auto& p : poly.exterior) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    BBox box{static_cast<int>(std::floor(xmin)), static_cast<int>(std::floor(ymin)),
             static_cast<int>(std::ceil(xmax)), static_cast<int>(std::ceil(ymax))};
    if (box.x_min >= box.x_max || box.y_min >= box.y_max) return std::nullopt;  // degenerate
    return box;
}

Mask Mask::zeros(int w, int h, int classes) {
    Mask m;
    m.width = w;
    m.height = h;
    m.num_classes = classes;
    m.labels.assign(static_cast<size_t>(w) * h, 0);
    return m;
}

size_t Mask::foreground_count() const {
    size_t n = 0;
    for (uint8_t v : labels) n += v != 0;
    return n;
}

namespace {

void fill_box(Mask& m, const BBox& b, uint8_t label) {
    int x0 = std::max(b.x_min, 0), x1 = std::min(b.x_max, m.width);
    int y0 = std::max(b.y_min, 0), y1 = std::min(b.y_max, m.height);
    for (int y = y0; y < y1; ++y)
        std::memset(m.labels.data() + static_cast<size_t>(y) * m.width + x0, label,
                    static_cast<size_t>(std::max(0, x1 - x0)));
}

// Scanline even-odd fill sampled at pixel centers. Crossings of the line
// y = row + 0.5 are collected from every ring edge under the half-open
// rule (horizontal edges never cross), sorted, and filled pairwise. The
// per-pixel oracle in the tests uses the same intersection expression, so
// agreement is exact, not approximate.
void fill_polygon(Mask& m, const Polygon& poly, uint8_t label) {
    std::vector<const std::vector<Point>*> rings;
    rings.push_back(&poly.exterior);
    for (const auto& h : poly.holes) rings.push_back(&h);

    double ylo = 1e300, yhi = -1e300;
    for (const auto* ring : rings)
        for (const auto& p : *ring) {
            ylo = std::min(ylo, p.y);
            yhi = std::max(yhi, p.y);
        }
    int row0 = std::max(0, static_cast<int>(std::floor(ylo - 0.5)));
    int row1 = std::min(m.height - 1, static_cast<int>(std::ceil(yhi)));

    std::vector<double> xs;
    for (int row = row0; row <= row1; ++row) {
        double yc = row + 0.5;
        xs.clear();
        for (const auto* ring : rings) {
            size_t n = ring->size();
            for (size_t i = 0; i < n; ++i) {
                const Point& p = (*ring)[i];
                const Point& q = (*ring)[(i + 1) % n];
                if ((p.y <= yc && yc < q.y) || (q.y <= yc && yc < p.y))
                    xs.push_back(p.x + (yc - p.y) * (q.x - p.x) / (q.y - p.y));
            }
        }
        std::sort(xs.begin(), xs.end());
        for (size_t i = 0; i + 1 < xs.size(); i += 2) {
            int x0 = static_cast<int>(std::ceil(xs[i] - 0.5));
            int x1 = static_cast<int>(std::ceil(xs[i + 1] - 0.5));
            x0 = std::max(x0, 0);
            x1 = std::min(x1, m.width);
            if (x1 > x0)
                std::memset(m.labels.data() + static_cast<size_t>(row) * m.width + x0, label,
                            static_cast<size_t>(x1 - x0));
        }
    }
}

}  // namespace

Mask rasterize(const std::vector<Shape>& shapes, int width, int height, int num_classes) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("rasterize: extent must be positive");
    Mask m = Mask::zeros(width, height, num_classes);
    for (size_t i = 0; i < shapes.size(); ++i) {
        const Shape& s = shapes[i];
        if (s.label == 0 || s.label >= num_classes)
            throw std::invalid_argument("rasterize: shape " + std::to_string(i) +
                                        " has label outside [1, num_classes)");
        if (const auto* box = std::get_if<BBox>(&s.geometry)) {
            fill_box(m, *box, s.label);
        } else {
            const auto& poly = std::get<Polygon>(s.geometry);
            std::string why;
            if (!poly.valid(&why))
                throw std::invalid_argument("rasterize: shape " + std::to_string(i) +
                                            " invalid polygon: " + why);
            fill_polygon(m, poly, s.label);
        }
    }
    return m;
}

TileTransform TileTransform::identity(int w, int h) {
    return TileTransform{w, h, 1.0, 0.0, 0.0, w, h};
}

TileTransform TileTransform::crop(int src_w, int src_h, int x0, int y0, int w, int h) {
    return TileTransform{src_w, src_h, 1.0, static_cast<double>(x0), static_cast<double>(y0), w, h};
}

TileTransform TileTransform::shorter_side_center_crop(int src_w, int src_h, int target) {
    double scale = static_cast<double>(target) / std::min(src_w, src_h);
    int scaled_w = static_cast<int>(std::lround(src_w * scale));
    int scaled_h = static_cast<int>(std::lround(src_h * scale));
    int dx = (scaled_w - target) / 2;
    int dy = (scaled_h - target) / 2;
    return TileTransform{src_w, src_h, scale, static_cast<double>(dx), static_cast<double>(dy),
                         target, target};
}

TileTransform TileTransform::inverse() const {
    // p = (p' + d) / scale
    return TileTransform{dst_w, dst_h, 1.0 / scale, -dx / scale, -dy / scale, src_w, src_h};
}

std::optional<BBox> transform_box(const BBox& box, const TileTransform& t,
                                  const DropPolicy& policy) {
    double x0 = box.x_min * t.scale - t.dx;
    double y0 = box.y_min * t.scale - t.dy;
    double x1 = box.x_max * t.scale - t.dx;
    double y1 = box.y_max * t.scale - t.dy;
    double original_area = (x1 - x0) * (y1 - y0);
    double cx0 = std::max(x0, 0.0), cy0 = std::max(y0, 0.0);
    double cx1 = std::min(x1, static_cast<double>(t.dst_w));
    double cy1 = std::min(y1, static_cast<double>(t.dst_h));
    if (cx0 >= cx1 || cy0 >= cy1) return std::nullopt;
    double clipped_area = (cx1 - cx0) * (cy1 - cy0);
    // The drop rule only applies to geometry the clip actually cut; a box
    // that survives whole is kept no matter how small.
    if (clipped_area < original_area && policy.drop(clipped_area, original_area))
        return std::nullopt;
    BBox out{static_cast<int>(std::floor(cx0)), static_cast<int>(std::floor(cy0)),
             static_cast<int>(std::ceil(cx1)), static_cast<int>(std::ceil(cy1))};
    if (!out.valid()) return std::nullopt;
    return out;
}

namespace {

// Sutherland-Hodgman against one half-plane. keep(p) true means p is on
// the kept side; cross(p, q) returns the boundary intersection.
template <typename Keep, typename Cross>
std::vector<Point> clip_halfplane(const std::vector<Point>& ring, Keep keep, Cross cross) {
    std::vector<Point> out;
    size_t n = ring.size();
    for (size_t i = 0; i < n; ++i) {
        const Point& p = ring[i];
        const Point& q = ring[(i + 1) % n];
        bool pin = keep(p), qin = keep(q);
        if (pin) {
            out.push_back(p);
            if (!qin) out.push_back(cross(p, q));
        } else if (qin) {
            out.push_back(cross(p, q));
        }
    }
    return out;
}

std::vector<Point> clip_ring_to_rect(std::vector<Point> ring, double w, double h) {
    auto lerp_x = [](const Point& p, const Point& q, double x) {
        return Point{x, p.y + (x - p.x) * (q.y - p.y) / (q.x - p.x)};
    };
    auto lerp_y = [](const Point& p, const Point& q, double y) {
        return Point{p.x + (y - p.y) * (q.x - p.x) / (q.y - p.y), y};
    };
    ring = clip_halfplane(
        ring, [](const Point& p) { return p.x >= 0.0; },
        [&](const Point& p, const Point& q) { return lerp_x(p, q, 0.0); });
    ring = clip_halfplane(
        ring, [&](const Point& p) { return p.x <= w; },
        [&](const Point& p, const Point& q) { return lerp_x(p, q, w); });
    ring = clip_halfplane(
        ring, [](const Point& p) { return p.y >= 0.0; },
        [&](const Point& p, const Point& q) { return lerp_y(p, q, 0.0); });
    ring = clip_halfplane(
        ring, [&](const Point& p) { return p.y <= h; },
        [&](const Point& p, const Point& q) { return lerp_y(p, q, h); });
    // collapse consecutive duplicates introduced at corners
    std::vector<Point> out;
    for (const auto& p : ring)
        if (out.empty() || !(out.back() == p)) out.push_back(p);
    while (out.size() > 1 && out.front() == out.back()) out.pop_back();
    return out;
}

}  // namespace

std::optional<Polygon> transform_polygon(const Polygon& poly, const TileTransform& t,
                                         const DropPolicy& policy) {
    auto map_ring = [&](const std::vector<Point>& ring) {
        std::vector<Point> out;
        out.reserve(ring.size());
        for (const auto& p : ring) out.push_back({p.x * t.scale - t.dx, p.y * t.scale - t.dy});
        return out;
    };
    double original_area = poly.area() * t.scale * t.scale;

    Polygon out;
    out.exterior = clip_ring_to_rect(map_ring(poly.exterior), t.dst_w, t.dst_h);
    if (out.exterior.size() < 3) return std::nullopt;
    for (const auto& h : poly.holes) {
        auto clipped = clip_ring_to_rect(map_ring(h), t.dst_w, t.dst_h);
        if (clipped.size() >= 3) out.holes.push_back(std::move(clipped));
    }
    double clipped_area = out.area();
    if (clipped_area <= 0.0) return std::nullopt;
    if (clipped_area < original_area - 1e-9 && policy.drop(clipped_area, original_area))
        return std::nullopt;
    return out;
}

Mask mask_diff(const Mask& a, const Mask& b, const OverlapBoxes* overlap_masking) {
    if (!a.same_extent(b)) throw std::invalid_argument("mask_diff: extent mismatch");
    if (a.num_classes != 2 || b.num_classes != 2)
        throw std::invalid_argument("mask_diff: inputs must be binary masks");
    Mask out = Mask::zeros(a.width, a.height, 2);
    for (size_t i = 0; i < out.labels.size(); ++i)
        out.labels[i] = (a.labels[i] != 0) != (b.labels[i] != 0) ? 1 : 0;
    if (overlap_masking) {
        for (const auto& ba : overlap_masking->a)
            for (const auto& bb : overlap_masking->b)
                if (ba.intersects(bb)) {
                    fill_box(out, ba, 0);
                    fill_box(out, bb, 0);
                }
    }
    return out;
}

namespace {

struct PngChunkWriter {
    FILE* f;
    void write_u32(uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
        std::fwrite(b, 1, 4, f);
    }
    void chunk(const char* type, const unsigned char* data, size_t len) {
        write_u32(static_cast<uint32_t>(len));
        std::fwrite(type, 1, 4, f);
        if (len) std::fwrite(data, 1, len, f);
        uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
        if (len) crc = crc32(crc, data, static_cast<uInt>(len));
        write_u32(static_cast<uint32_t>(crc));
    }
};

}  // namespace

void write_mask_png(const Mask& mask, const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("write_mask_png: cannot open " + path);
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::fwrite(sig, 1, 8, f);
    PngChunkWriter w{f};

    unsigned char ihdr[13];
    auto put_u32 = [](unsigned char* p, uint32_t v) {
        p[0] = static_cast<unsigned char>(v >> 24);
        p[1] = static_cast<unsigned char>(v >> 16);
        p[2] = static_cast<unsigned char>(v >> 8);
        p[3] = static_cast<unsigned char>(v);
    };
    put_u32(ihdr, static_cast<uint32_t>(mask.width));
    put_u32(ihdr + 4, static_cast<uint32_t>(mask.height));
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 0;   // grayscale
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    w.chunk("IHDR", ihdr, 13);

    std::vector<unsigned char> raw;
    raw.reserve(static_cast<size_t>(mask.height) * (mask.width + 1));
    for (int y = 0; y < mask.height; ++y) {
        raw.push_back(0);  // filter: none
        const uint8_t* row = mask.labels.data() + static_cast<size_t>(y) * mask.width;
        raw.insert(raw.end(), row, row + mask.width);
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
        std::fclose(f);
        throw std::runtime_error("write_mask_png: deflate failed");
    }
    w.chunk("IDAT", comp.data(), comp_len);
    w.chunk("IEND", nullptr, 0);
    std::fclose(f);
}

}  // namespace teo
