#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "metalens/error.hpp"
#include "metalens/image.hpp"

namespace metalens {

namespace detail {

// Uniform [0,1) from the raw engine output, independent of the standard library's distributions.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

/// Synthetic test scene: color gradients, flat shapes with hard edges, a sinusoidal grating
/// and a checkerboard patch. Deterministic for a given seed.
inline Image make_scene(int w, int h, std::uint64_t seed) {
    require(w >= 16 && h >= 16, ErrorKind::size, "scene must be at least 16x16");
    std::mt19937_64 rng(seed);
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * detail::unit_uniform(rng); };
    Image img(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double u = static_cast<double>(x) / (w - 1);
            const double v = static_cast<double>(y) / (h - 1);
            img.at(0, y, x) = static_cast<float>(0.2 + 0.5 * u);
            img.at(1, y, x) = static_cast<float>(0.3 + 0.4 * v);
            img.at(2, y, x) = static_cast<float>(0.6 - 0.3 * 0.5 * (u + v));
        }

    const int min_side = std::min(w, h);
    for (int s = 0; s < 12; ++s) {
        const bool disk = uni(0, 1) < 0.5;
        const double cx = uni(0, w);
        const double cy = uni(0, h);
        const double size = uni(0.06, 0.22) * min_side;
        const double color[3] = {uni(0.05, 0.95), uni(0.05, 0.95), uni(0.05, 0.95)};
        const double aspect = uni(0.6, 1.6);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double dx = (x - cx) / (size * aspect);
                const double dy = (y - cy) / size;
                const bool in = disk ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
                if (!in) continue;
                for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(color[c]);
            }
    }

    // grating in one quadrant, checkerboard in the opposite one
    const double period = uni(5.0, 9.0);
    const double angle = uni(0.0, std::numbers::pi);
    const int q = min_side / 4;
    const int gx0 = static_cast<int>(uni(0, w - q)), gy0 = static_cast<int>(uni(0, h / 2 - q / 2));
    for (int y = gy0; y < std::min(h, gy0 + q); ++y)
        for (int x = gx0; x < std::min(w, gx0 + q); ++x) {
            const double t = std::cos(2 * std::numbers::pi * (x * std::cos(angle) + y * std::sin(angle)) / period);
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(0.5 + 0.35 * t * (c == 1 ? 1.0 : 0.8));
        }
    const int cx0 = static_cast<int>(uni(0, w - q)), cy0 = static_cast<int>(uni(h / 2, h - q));
    for (int y = cy0; y < std::min(h, cy0 + q); ++y)
        for (int x = cx0; x < std::min(w, cx0 + q); ++x) {
            const bool on = (((x - cx0) / 4) + ((y - cy0) / 4)) % 2 == 0;
            img.at(0, y, x) = on ? 0.85f : 0.15f;
            img.at(1, y, x) = on ? 0.80f : 0.20f;
            img.at(2, y, x) = on ? 0.75f : 0.25f;
        }
    return img;
}

}  // namespace metalens
