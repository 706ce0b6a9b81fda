#include "imdyn/primitive.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

namespace imdyn {
namespace {

constexpr std::array<std::array<int, 2>, 4> kDirs{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};

bool inside(const Mask& m, int x, int y) { return m.contains(x, y) && m(x, y) != 0; }

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = length_squared(ab);
    if (len2 == 0.0) return length(p - a);
    const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    return length(p - (a + t * ab));
}

std::vector<Vec2> remove_collinear(const std::vector<Vec2>& poly) {
    std::vector<Vec2> out = poly;
    bool changed = true;
    while (changed && out.size() > 3) {
        changed = false;
        for (std::size_t i = 0; i < out.size() && out.size() > 3; ++i) {
            const Vec2 prev = out[(i + out.size() - 1) % out.size()];
            const Vec2 next = out[(i + 1) % out.size()];
            if (out[i] == prev || cross(out[i] - prev, next - out[i]) == 0.0) {
                out.erase(out.begin() + static_cast<std::ptrdiff_t>(i));
                changed = true;
                --i;
            }
        }
    }
    return out;
}

int orient(Vec2 a, Vec2 b, Vec2 c) {
    const double v = cross(b - a, c - a);
    return (v > 0.0) - (v < 0.0);
}

bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}

bool segments_touch(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
    const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(a, b, c)) return true;
    if (o2 == 0 && on_segment(a, b, d)) return true;
    if (o3 == 0 && on_segment(c, d, a)) return true;
    if (o4 == 0 && on_segment(c, d, b)) return true;
    return false;
}

bool point_in_triangle(Vec2 p, Vec2 a, Vec2 b, Vec2 c) {
    return cross(b - a, p - a) >= 0.0 && cross(c - b, p - b) >= 0.0 && cross(a - c, p - c) >= 0.0;
}

bool point_in_convex(const ConvexPiece& piece, Vec2 p) {
    const std::size_t n = piece.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (cross(piece[(i + 1) % n] - piece[i], p - piece[i]) < 0.0) return false;
    }
    return true;
}

bool is_convex_cycle(const std::vector<Vec2>& pts, const std::vector<int>& cycle) {
    const std::size_t n = cycle.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = pts[cycle[(i + n - 1) % n]];
        const Vec2 b = pts[cycle[i]];
        const Vec2 c = pts[cycle[(i + 1) % n]];
        if (cross(b - a, c - b) < 0.0) return false;
    }
    return true;
}

/// Position of the directed edge (u -> v) in `cycle`, or -1.
int find_edge(const std::vector<int>& cycle, int u, int v) {
    const std::size_t n = cycle.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (cycle[i] == u && cycle[(i + 1) % n] == v) return static_cast<int>(i);
    }
    return -1;
}

std::vector<int> rotate_to(const std::vector<int>& cycle, std::size_t start) {
    std::vector<int> out;
    out.reserve(cycle.size());
    for (std::size_t k = 0; k < cycle.size(); ++k) out.push_back(cycle[(start + k) % cycle.size()]);
    return out;
}

struct Bounds {
    int x0, y0, x1, y1;  // inclusive pixel range
};

Bounds pixel_bounds(const std::vector<Vec2>& pts, int width, int height) {
    double minx = std::numeric_limits<double>::infinity(), miny = minx;
    double maxx = -minx, maxy = -minx;
    for (const Vec2& p : pts) {
        minx = std::min(minx, p.x);
        miny = std::min(miny, p.y);
        maxx = std::max(maxx, p.x);
        maxy = std::max(maxy, p.y);
    }
    return {std::max(0, static_cast<int>(std::floor(minx)) - 1), std::max(0, static_cast<int>(std::floor(miny)) - 1),
            std::min(width - 1, static_cast<int>(std::ceil(maxx)) + 1),
            std::min(height - 1, static_cast<int>(std::ceil(maxy)) + 1)};
}

}  // namespace

Primitive Primitive::make_circle(Vec2 center, double radius) {
    Primitive p;
    p.kind = Kind::kCircle;
    p.circle = {center, radius};
    return p;
}

Primitive Primitive::make_polygon(std::vector<Vec2> outline, std::vector<ConvexPiece> pieces) {
    Primitive p;
    p.kind = Kind::kPolygon;
    p.outline = std::move(outline);
    p.pieces = std::move(pieces);
    return p;
}

double mask_iou(const Mask& a, const Mask& b) {
    require_same_shape(a, b, "mask_iou");
    std::size_t inter = 0, uni = 0;
    auto pa = a.pixels();
    auto pb = b.pixels();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const bool x = pa[i] != 0, y = pb[i] != 0;
        inter += x && y;
        uni += x || y;
    }
    if (uni == 0) throw DegenerateMask("IoU of two empty masks is undefined");
    return static_cast<double>(inter) / static_cast<double>(uni);
}

Circle fit_circle(const Mask& mask) {
    double sx = 0.0, sy = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask(x, y)) {
                sx += x + 0.5;
                sy += y + 0.5;
                ++n;
            }
        }
    }
    if (n == 0) throw DegenerateMask("cannot fit a circle to an empty mask");
    const double area = static_cast<double>(n);
    return {{sx / area, sy / area}, std::sqrt(area / std::numbers::pi)};
}

std::size_t count_components(const Mask& mask) {
    Raster<std::uint8_t> seen(mask.width(), mask.height());
    std::size_t components = 0;
    std::vector<std::array<int, 2>> stack;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask(x, y) || seen(x, y)) continue;
            ++components;
            stack.push_back({x, y});
            seen(x, y) = 1;
            while (!stack.empty()) {
                const auto [cx, cy] = stack.back();
                stack.pop_back();
                for (const auto& d : kDirs) {
                    const int nx = cx + d[0], ny = cy + d[1];
                    if (inside(mask, nx, ny) && !seen(nx, ny)) {
                        seen(nx, ny) = 1;
                        stack.push_back({nx, ny});
                    }
                }
            }
        }
    }
    return components;
}

std::vector<Vec2> trace_outer_contour(const Mask& mask) {
    int sx = -1, sy = -1;
    for (int y = 0; y < mask.height() && sx < 0; ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask(x, y)) {
                sx = x;
                sy = y;
                break;
            }
        }
    }
    if (sx < 0) throw DegenerateMask("cannot trace the contour of an empty mask");

    // Walk pixel edges keeping the mask on the right-hand side (screen frame).
    // A missing right-ahead pixel forces a right turn first, which treats
    // diagonal neighbours as disconnected (4-connectivity).
    std::vector<Vec2> corners;
    int cx = sx, cy = sy, d = 0;
    do {
        corners.push_back({static_cast<double>(cx), static_cast<double>(cy)});
        const auto& fwd = kDirs[d];
        const auto& right = kDirs[(d + 1) % 4];
        const bool ahead_right = inside(mask, cx + std::min({0, fwd[0], right[0]}), cy + std::min({0, fwd[1], right[1]}));
        const bool ahead_left = inside(mask, cx + std::min({0, fwd[0], -right[0]}), cy + std::min({0, fwd[1], -right[1]}));
        if (!ahead_right) {
            d = (d + 1) % 4;
        } else if (ahead_left) {
            d = (d + 3) % 4;
        }
        cx += kDirs[d][0];
        cy += kDirs[d][1];
    } while (cx != sx || cy != sy);

    std::vector<Vec2> poly = remove_collinear(corners);
    if (signed_area(poly) < 0.0) std::reverse(poly.begin(), poly.end());
    return poly;
}

double signed_area(const std::vector<Vec2>& polygon) {
    double a = 0.0;
    const std::size_t n = polygon.size();
    for (std::size_t i = 0; i < n; ++i) a += cross(polygon[i], polygon[(i + 1) % n]);
    return 0.5 * a;
}

bool is_simple(const std::vector<Vec2>& polygon) {
    const std::size_t n = polygon.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i) {
        if (polygon[i] == polygon[(i + 1) % n]) return false;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = polygon[i], b = polygon[(i + 1) % n];
        for (std::size_t j = i + 1; j < n; ++j) {
            if (j == i + 1 || (i == 0 && j == n - 1)) {
                // Adjacent edges share one vertex; they must not fold back.
                const Vec2 c = polygon[j], dd = polygon[(j + 1) % n];
                const Vec2 shared = (j == i + 1) ? b : a;
                const Vec2 other1 = (j == i + 1) ? a : b;
                const Vec2 other2 = (j == i + 1) ? dd : c;
                if (orient(other1, shared, other2) == 0 && dot(other1 - shared, other2 - shared) > 0.0) return false;
                continue;
            }
            if (segments_touch(a, b, polygon[j], polygon[(j + 1) % n])) return false;
        }
    }
    return true;
}

std::vector<Vec2> simplify_closed(const std::vector<Vec2>& polygon, double tolerance) {
    const std::size_t n = polygon.size();
    if (n <= 3 || tolerance <= 0.0) return polygon;

    std::size_t far = 0;
    double best = -1.0;
    for (std::size_t i = 1; i < n; ++i) {
        const double d = length_squared(polygon[i] - polygon[0]);
        if (d > best) {
            best = d;
            far = i;
        }
    }
    std::vector<bool> keep(n, false);
    keep[0] = keep[far] = true;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, far}, {far, n}};
    while (!stack.empty()) {
        const auto [i, j] = stack.back();
        stack.pop_back();
        if (j - i < 2) continue;
        const Vec2 a = polygon[i], b = polygon[j % n];
        double worst = -1.0;
        std::size_t worst_idx = i;
        for (std::size_t m = i + 1; m < j; ++m) {
            const double d = point_segment_distance(polygon[m], a, b);
            if (d > worst) {
                worst = d;
                worst_idx = m;
            }
        }
        if (worst > tolerance) {
            keep[worst_idx] = true;
            stack.push_back({i, worst_idx});
            stack.push_back({worst_idx, j});
        }
    }
    std::vector<Vec2> out;
    for (std::size_t i = 0; i < n; ++i)
        if (keep[i]) out.push_back(polygon[i]);
    if (out.size() < 3) {
        // Two kept vertices: add the one farthest from their chord.
        std::size_t extra = 0;
        double dmax = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (keep[i]) continue;
            const double d = point_segment_distance(polygon[i], polygon[0], polygon[far]);
            if (d > dmax) {
                dmax = d;
                extra = i;
            }
        }
        keep[extra] = true;
        out.clear();
        for (std::size_t i = 0; i < n; ++i)
            if (keep[i]) out.push_back(polygon[i]);
    }
    return remove_collinear(out);
}

std::vector<ConvexPiece> convex_decompose(const std::vector<Vec2>& polygon) {
    const std::vector<Vec2>& pts = polygon;
    std::vector<int> ring(pts.size());
    for (std::size_t i = 0; i < ring.size(); ++i) ring[i] = static_cast<int>(i);

    // Ear clipping.
    std::vector<std::vector<int>> pieces;
    std::size_t guard = 0;
    while (ring.size() > 3 && guard < 4 * pts.size() * pts.size() + 16) {
        ++guard;
        bool clipped = false;
        const std::size_t n = ring.size();
        for (std::size_t k = 0; k < n; ++k) {
            const int ip = ring[(k + n - 1) % n], i = ring[k], in = ring[(k + 1) % n];
            const double turn = cross(pts[i] - pts[ip], pts[in] - pts[i]);
            if (turn == 0.0) {
                ring.erase(ring.begin() + static_cast<std::ptrdiff_t>(k));
                clipped = true;
                break;
            }
            if (turn < 0.0) continue;
            bool ear = true;
            for (int j : ring) {
                if (j == ip || j == i || j == in) continue;
                if (pts[j] == pts[ip] || pts[j] == pts[i] || pts[j] == pts[in]) continue;
                if (point_in_triangle(pts[j], pts[ip], pts[i], pts[in])) {
                    ear = false;
                    break;
                }
            }
            if (ear) {
                pieces.push_back({ip, i, in});
                ring.erase(ring.begin() + static_cast<std::ptrdiff_t>(k));
                clipped = true;
                break;
            }
        }
        if (!clipped) {
            // Numerically stuck (weakly simple input); clip the first convex vertex.
            for (std::size_t k = 0; k < n; ++k) {
                const int ip = ring[(k + n - 1) % n], i = ring[k], in = ring[(k + 1) % n];
                if (cross(pts[i] - pts[ip], pts[in] - pts[i]) > 0.0) {
                    pieces.push_back({ip, i, in});
                    ring.erase(ring.begin() + static_cast<std::ptrdiff_t>(k));
                    clipped = true;
                    break;
                }
            }
            if (!clipped) break;
        }
    }
    if (ring.size() == 3 && cross(pts[ring[1]] - pts[ring[0]], pts[ring[2]] - pts[ring[1]]) > 0.0) {
        pieces.push_back(ring);
    }

    // Hertel-Mehlhorn: drop diagonals whose removal keeps both sides convex.
    bool merged = true;
    while (merged) {
        merged = false;
        for (std::size_t a = 0; !merged && a < pieces.size(); ++a) {
            const auto& pa = pieces[a];
            for (std::size_t e = 0; !merged && e < pa.size(); ++e) {
                const int u = pa[e], v = pa[(e + 1) % pa.size()];
                for (std::size_t b = 0; b < pieces.size(); ++b) {
                    if (b == a) continue;
                    const int eb = find_edge(pieces[b], v, u);
                    if (eb < 0) continue;
                    // pa rotated to start at v and end at u; pb to start at u and end at v.
                    std::vector<int> ra = rotate_to(pa, (e + 1) % pa.size());
                    std::vector<int> rb = rotate_to(pieces[b], static_cast<std::size_t>(eb + 1) % pieces[b].size());
                    std::vector<int> cand = ra;
                    cand.insert(cand.end(), rb.begin() + 1, rb.end() - 1);
                    if (is_convex_cycle(pts, cand)) {
                        pieces[a] = std::move(cand);
                        pieces.erase(pieces.begin() + static_cast<std::ptrdiff_t>(b));
                        merged = true;
                    }
                    break;
                }
            }
        }
    }

    std::vector<ConvexPiece> out;
    out.reserve(pieces.size());
    for (const auto& cyc : pieces) {
        ConvexPiece piece;
        for (int i : cyc) piece.push_back(pts[i]);
        piece = remove_collinear(piece);
        if (piece.size() >= 3 && signed_area(piece) > 0.0) out.push_back(std::move(piece));
    }
    return out;
}

Mask rasterize_circle(const Circle& circle, int width, int height) {
    Mask m(width, height);
    const double r2 = circle.radius * circle.radius;
    const int y0 = std::max(0, static_cast<int>(std::floor(circle.center.y - circle.radius)) - 1);
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(circle.center.y + circle.radius)) + 1);
    const int x0 = std::max(0, static_cast<int>(std::floor(circle.center.x - circle.radius)) - 1);
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(circle.center.x + circle.radius)) + 1);
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = x + 0.5 - circle.center.x, dy = y + 0.5 - circle.center.y;
            if (dx * dx + dy * dy <= r2) m(x, y) = 1;
        }
    }
    return m;
}

Mask rasterize(const Primitive& primitive, int width, int height) {
    if (primitive.is_circle()) return rasterize_circle(primitive.circle, width, height);
    Mask m(width, height);
    for (const auto& piece : primitive.pieces) {
        const Bounds bb = pixel_bounds(piece, width, height);
        for (int y = bb.y0; y <= bb.y1; ++y) {
            for (int x = bb.x0; x <= bb.x1; ++x) {
                if (!m(x, y) && point_in_convex(piece, {x + 0.5, y + 0.5})) m(x, y) = 1;
            }
        }
    }
    return m;
}

Primitive extract_polygon(const Mask& mask, double tolerance) {
    const std::size_t components = count_components(mask);
    if (components == 0) throw DegenerateMask("cannot extract a polygon from an empty mask");
    if (components > 1) throw MultiComponentMask(components);

    const std::vector<Vec2> contour = trace_outer_contour(mask);
    Primitive best;
    double tol = tolerance;
    for (;;) {
        const bool exact = tol < 0.5;
        std::vector<Vec2> outline = exact ? contour : simplify_closed(contour, tol);
        if (signed_area(outline) > 0.0 && (exact || is_simple(outline))) {
            Primitive p = Primitive::make_polygon(outline, convex_decompose(outline));
            if (!p.pieces.empty()) {
                if (exact || mask_iou(rasterize(p, mask.width(), mask.height()), mask) >= kPolygonIouFloor) return p;
            }
        }
        if (exact) {
            // Unreachable for a traced 4-connected component; keep the raw contour.
            return Primitive::make_polygon(contour, convex_decompose(contour));
        }
        tol *= 0.5;
    }
}

double circle_fit_iou(const Mask& mask) {
    return mask_iou(rasterize_circle(fit_circle(mask), mask.width(), mask.height()), mask);
}

Primitive choose_primitive(const Mask& mask, double polygon_tolerance) {
    const Circle c = fit_circle(mask);
    const double iou = mask_iou(rasterize_circle(c, mask.width(), mask.height()), mask);
    if (iou >= kCircleIouThreshold) return Primitive::make_circle(c.center, c.radius);
    return extract_polygon(mask, polygon_tolerance);
}

MassProperties mass_properties(const Primitive& primitive, double mass) {
    if (primitive.is_circle()) {
        const double r = primitive.circle.radius;
        return {mass, 0.5 * mass * r * r, primitive.circle.center};
    }
    // Accumulate about a local reference point to limit cancellation.
    Vec2 ref = primitive.pieces.front().front();
    double area = 0.0, polar = 0.0;
    Vec2 first_moment{};
    for (const auto& piece : primitive.pieces) {
        const std::size_t n = piece.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2 p = piece[i] - ref, q = piece[(i + 1) % n] - ref;
            const double c = cross(p, q);
            area += 0.5 * c;
            first_moment += (c / 6.0) * (p + q);
            polar += (c / 12.0) * (dot(p, p) + dot(p, q) + dot(q, q));
        }
    }
    const Vec2 centroid = (1.0 / area) * first_moment;
    const double polar_about_centroid = polar - area * length_squared(centroid);
    return {mass, mass / area * polar_about_centroid, ref + centroid};
}

Primitive translated(const Primitive& primitive, Vec2 offset) {
    Primitive p = primitive;
    p.circle.center += offset;
    for (auto& v : p.outline) v += offset;
    for (auto& piece : p.pieces)
        for (auto& v : piece) v += offset;
    return p;
}

ImageRgb8 primitive_overlay(const Mask& mask, const Primitive& primitive) {
    ImageRgb8 img(mask.width(), mask.height());
    auto dst = img.pixels();
    auto src = mask.pixels();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] ? Rgb8{96, 96, 96} : Rgb8{0, 0, 0};
    const Rgb8 pink{255, 105, 180};
    auto plot = [&](Vec2 p) {
        const int x = static_cast<int>(std::floor(p.x)), y = static_cast<int>(std::floor(p.y));
        if (img.contains(x, y)) img(x, y) = pink;
    };
    auto line = [&](Vec2 a, Vec2 b) {
        const int steps = std::max(1, static_cast<int>(std::ceil(2.0 * length(b - a))));
        for (int s = 0; s <= steps; ++s) plot(a + (static_cast<double>(s) / steps) * (b - a));
    };
    if (primitive.is_circle()) {
        const auto& c = primitive.circle;
        const int steps = std::max(16, static_cast<int>(8.0 * c.radius));
        for (int s = 0; s < steps; ++s) {
            const double t = 2.0 * std::numbers::pi * s / steps;
            plot(c.center + c.radius * Vec2{std::cos(t), std::sin(t)});
        }
    } else {
        for (const auto& piece : primitive.pieces)
            for (std::size_t i = 0; i < piece.size(); ++i) line(piece[i], piece[(i + 1) % piece.size()]);
    }
    return img;
}

}  // namespace imdyn
