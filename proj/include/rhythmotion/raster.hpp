#pragma once

#include <array>
#include <span>

#include "rhythmotion/image.hpp"

namespace rhythmotion::img {

struct Vec2 {
    double x = 0, y = 0;
};

// Deterministic anti-aliased fills (4x4 supersampled coverage, alpha-over).
// Coordinates are in pixel space, origin top-left, y down.
void fill_convex_polygon(Image& im, std::span<const Vec2> pts, double value);
void fill_circle(Image& im, Vec2 center, double radius, double value);

// Thick segment rendered as an oriented quad.
void fill_segment(Image& im, Vec2 a, Vec2 b, double thickness, double value);

}  // namespace rhythmotion::img
