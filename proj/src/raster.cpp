#include "rhythmotion/raster.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace rhythmotion::img {

namespace {

constexpr int kSS = 4;  // 4x4 subsamples per pixel

struct Bounds {
    int x0, y0, x1, y1;  // half-open pixel range
    bool empty;
};

Bounds clip_bounds(const Image& im, double minx, double miny, double maxx, double maxy) {
    Bounds b;
    b.x0 = std::max(0, static_cast<int>(std::floor(minx)));
    b.y0 = std::max(0, static_cast<int>(std::floor(miny)));
    b.x1 = std::min(im.w, static_cast<int>(std::ceil(maxx)) + 1);
    b.y1 = std::min(im.h, static_cast<int>(std::ceil(maxy)) + 1);
    b.empty = b.x0 >= b.x1 || b.y0 >= b.y1;
    return b;
}

void blend(Image& im, int x, int y, double coverage, double value) {
    if (coverage <= 0.0) return;
    double& p = im.at(x, y);
    p = p + (value - p) * coverage;
}

}  // namespace

void fill_convex_polygon(Image& im, std::span<const Vec2> pts, double value) {
    if (pts.size() < 3) return;
    double minx = pts[0].x, maxx = pts[0].x, miny = pts[0].y, maxy = pts[0].y;
    for (const auto& p : pts) {
        minx = std::min(minx, p.x);
        maxx = std::max(maxx, p.x);
        miny = std::min(miny, p.y);
        maxy = std::max(maxy, p.y);
    }
    const Bounds b = clip_bounds(im, minx, miny, maxx, maxy);
    if (b.empty) return;

    // Signed area to get winding; inside test requires consistent edge sign.
    double area2 = 0;
    for (size_t i = 0; i < pts.size(); ++i) {
        const auto& p = pts[i];
        const auto& q = pts[(i + 1) % pts.size()];
        area2 += p.x * q.y - q.x * p.y;
    }
    const double sign = area2 >= 0 ? 1.0 : -1.0;

    const double step = 1.0 / kSS;
    for (int y = b.y0; y < b.y1; ++y) {
        for (int x = b.x0; x < b.x1; ++x) {
            int hit = 0;
            for (int sy = 0; sy < kSS; ++sy) {
                const double py = y + (sy + 0.5) * step;
                for (int sx = 0; sx < kSS; ++sx) {
                    const double px = x + (sx + 0.5) * step;
                    bool inside = true;
                    for (size_t i = 0; i < pts.size() && inside; ++i) {
                        const auto& a = pts[i];
                        const auto& c = pts[(i + 1) % pts.size()];
                        const double cross =
                            (c.x - a.x) * (py - a.y) - (c.y - a.y) * (px - a.x);
                        inside = sign * cross >= 0.0;
                    }
                    hit += inside;
                }
            }
            blend(im, x, y, hit / double(kSS * kSS), value);
        }
    }
}

void fill_circle(Image& im, Vec2 c, double radius, double value) {
    const Bounds b = clip_bounds(im, c.x - radius, c.y - radius, c.x + radius, c.y + radius);
    if (b.empty || radius <= 0) return;
    const double r2 = radius * radius;
    const double step = 1.0 / kSS;
    for (int y = b.y0; y < b.y1; ++y) {
        for (int x = b.x0; x < b.x1; ++x) {
            int hit = 0;
            for (int sy = 0; sy < kSS; ++sy) {
                const double dy = y + (sy + 0.5) * step - c.y;
                for (int sx = 0; sx < kSS; ++sx) {
                    const double dx = x + (sx + 0.5) * step - c.x;
                    hit += (dx * dx + dy * dy <= r2);
                }
            }
            blend(im, x, y, hit / double(kSS * kSS), value);
        }
    }
}

void fill_segment(Image& im, Vec2 a, Vec2 b, double thickness, double value) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len = std::sqrt(dx * dx + dy * dy);
    if (len < 1e-12) {
        fill_circle(im, a, thickness * 0.5, value);
        return;
    }
    const double nx = -dy / len * thickness * 0.5;
    const double ny = dx / len * thickness * 0.5;
    const Vec2 quad[4] = {{a.x + nx, a.y + ny},
                          {b.x + nx, b.y + ny},
                          {b.x - nx, b.y - ny},
                          {a.x - nx, a.y - ny}};
    fill_convex_polygon(im, quad, value);
}

}  // namespace rhythmotion::img
