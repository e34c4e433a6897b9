#pragma once

#include <vector>

#include "metalens/error.hpp"
#include "metalens/filters.hpp"
#include "metalens/image.hpp"

namespace metalens {

/// Level i has ceil(w / 2^i) x ceil(h / 2^i) pixels; all levels share the channel count.
struct FeaturePyramid {
    std::vector<Image> levels;

    int size() const noexcept { return static_cast<int>(levels.size()); }
    const Image& operator[](int i) const { return levels.at(static_cast<std::size_t>(i)); }
    Image& operator[](int i) { return levels.at(static_cast<std::size_t>(i)); }
};

inline constexpr int kDefaultPyramidLevels = 4;

/// Gaussian pyramid: level i+1 = reduce2(level i).
inline FeaturePyramid build_pyramid(const Image& img, int levels = kDefaultPyramidLevels) {
    require(levels >= 1, ErrorKind::parameter, "pyramid needs at least one level");
    int w = img.width();
    int h = img.height();
    for (int i = 1; i < levels; ++i) {
        w = (w + 1) / 2;
        h = (h + 1) / 2;
    }
    require(w >= 4 && h >= 4, ErrorKind::size,
            "image too small for a " + std::to_string(levels) + "-level pyramid");
    FeaturePyramid p;
    p.levels.push_back(img);
    for (int i = 1; i < levels; ++i) p.levels.push_back(reduce2(p.levels.back()));
    return p;
}

namespace detail {

inline void require_compatible(const Image& a, const Image& b, const char* what) {
    require(a.width() == b.width() && a.height() == b.height() &&
                (a.channels() == b.channels() || b.channels() == 1),
            ErrorKind::shape, std::string(what) + ": pyramid levels are not shape-compatible");
}

}  // namespace detail

/// Per level f_z + f_c * f_s; a 1-channel f_s gates every channel of f_c.
inline FeaturePyramid gated_fuse(const FeaturePyramid& fz, const FeaturePyramid& fc, const FeaturePyramid& fs) {
    require(fz.size() == fc.size() && fz.size() == fs.size(), ErrorKind::shape,
            "gated_fuse: pyramids differ in level count");
    FeaturePyramid out;
    for (int l = 0; l < fz.size(); ++l) {
        const Image& z = fz[l];
        const Image& c = fc[l];
        const Image& s = fs[l];
        require_same_shape(z, c, "gated_fuse");
        detail::require_compatible(c, s, "gated_fuse");
        Image f(z.width(), z.height(), z.channels());
        const std::size_t plane = z.plane_size();
        for (int ch = 0; ch < z.channels(); ++ch) {
            auto pz = z.plane(ch);
            auto pc = c.plane(ch);
            auto ps = s.plane(s.channels() == 1 ? 0 : ch);
            auto pf = f.plane(ch);
            for (std::size_t i = 0; i < plane; ++i) pf[i] = pz[i] + pc[i] * ps[i];
        }
        out.levels.push_back(std::move(f));
    }
    return out;
}

/// Coarse-to-fine reconstruction: R = expand(R) + (G_i - expand(reduce(G_i))).
/// Each level contributes its own band-pass detail, so a Gaussian pyramid collapses back to level 0.
inline Image collapse_pyramid(const FeaturePyramid& p) {
    require(p.size() >= 1, ErrorKind::parameter, "cannot collapse an empty pyramid");
    Image r = p[p.size() - 1];
    for (int i = p.size() - 2; i >= 0; --i) {
        const Image& g = p[i];
        require(r.channels() == g.channels(), ErrorKind::shape, "pyramid levels differ in channel count");
        const Image up = expand2(r, g.width(), g.height());
        const Image low = expand2(reduce2(g), g.width(), g.height());
        Image next(g.width(), g.height(), g.channels());
        for (std::size_t k = 0; k < next.size(); ++k)
            next.samples()[k] = up.samples()[k] + (g.samples()[k] - low.samples()[k]);
        r = std::move(next);
    }
    return r;
}

}  // namespace metalens
