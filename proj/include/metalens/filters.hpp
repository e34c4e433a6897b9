#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "metalens/image.hpp"

namespace metalens {

/// 5-tap sampled Gaussian, sigma = 1, normalized to unit DC gain.
inline const std::array<double, 5>& gaussian5_taps() {
    static const std::array<double, 5> taps = [] {
        std::array<double, 5> t{};
        double sum = 0.0;
        for (int i = -2; i <= 2; ++i) sum += t[i + 2] = std::exp(-0.5 * i * i);
        for (double& v : t) v /= sum;
        return t;
    }();
    return taps;
}

/// Separable 5-tap Gaussian blur with replicated edges.
inline Image gaussian_blur5(const Image& img) {
    const auto& k = gaussian5_taps();
    const int w = img.width();
    const int h = img.height();
    Image out(w, h, img.channels());
    std::vector<double> tmp(img.plane_size());
    for (int c = 0; c < img.channels(); ++c) {
        auto src = img.plane(c);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = -2; i <= 2; ++i)
                    acc += k[i + 2] * src[static_cast<std::size_t>(y) * w + std::clamp(x + i, 0, w - 1)];
                tmp[static_cast<std::size_t>(y) * w + x] = acc;
            }
        auto dst = out.plane(c);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = -2; i <= 2; ++i)
                    acc += k[i + 2] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
                dst[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
            }
    }
    return out;
}

/// Keeps even-indexed rows and columns: ceil(w/2) x ceil(h/2).
inline Image decimate2(const Image& img) {
    const int w = (img.width() + 1) / 2;
    const int h = (img.height() + 1) / 2;
    Image out(w, h, img.channels());
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, 2 * y, 2 * x);
    return out;
}

/// Blur then decimate; coarse pixel i sits on fine pixel 2i.
inline Image reduce2(const Image& img) { return decimate2(gaussian_blur5(img)); }

/// Bilinear expansion of a coarse level onto a w x h grid, fine x mapping to coarse x/2.
inline Image expand2(const Image& coarse, int w, int h) {
    Image out(w, h, coarse.channels());
    const int cw = coarse.width();
    const int ch = coarse.height();
    for (int c = 0; c < coarse.channels(); ++c)
        for (int y = 0; y < h; ++y) {
            const double cy = std::min(0.5 * y, static_cast<double>(ch - 1));
            const int y0 = static_cast<int>(cy);
            const int y1 = std::min(y0 + 1, ch - 1);
            const double fy = cy - y0;
            for (int x = 0; x < w; ++x) {
                const double cx = std::min(0.5 * x, static_cast<double>(cw - 1));
                const int x0 = static_cast<int>(cx);
                const int x1 = std::min(x0 + 1, cw - 1);
                const double fx = cx - x0;
                const double top = coarse.at(c, y0, x0) + fx * (coarse.at(c, y0, x1) - coarse.at(c, y0, x0));
                const double bot = coarse.at(c, y1, x0) + fx * (coarse.at(c, y1, x1) - coarse.at(c, y1, x0));
                out.at(c, y, x) = static_cast<float>(top + fy * (bot - top));
            }
        }
    return out;
}

/// Bilinear sample of channel c at a real-valued position, coordinates clamped to the image.
inline double sample_bilinear(const Image& img, int c, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(img.width() - 1));
    y = std::clamp(y, 0.0, static_cast<double>(img.height() - 1));
    const int x0 = static_cast<int>(x);
    const int y0 = static_cast<int>(y);
    const int x1 = std::min(x0 + 1, img.width() - 1);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double a = img.at(c, y0, x0);
    const double top = a + fx * (img.at(c, y0, x1) - a);
    const double b = img.at(c, y1, x0);
    const double bot = b + fx * (img.at(c, y1, x1) - b);
    return top + fy * (bot - top);
}

}  // namespace metalens
