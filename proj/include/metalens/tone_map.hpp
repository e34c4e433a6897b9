#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "metalens/error.hpp"
#include "metalens/image.hpp"

namespace metalens {

struct ChannelTone {
    double gain = 1.0;
    double bias = 0.0;
    double gamma = 1.0;
};

struct ToneMapParams {
    std::vector<ChannelTone> channels;

    void validate() const {
        for (const auto& t : channels)
            require(t.gain > 0.0 && t.gamma > 0.0 && std::isfinite(t.bias), ErrorKind::parameter,
                    "tone map gain and gamma must be positive");
    }
};

/// Target moments for one channel. Skewness drives the gamma choice.
struct ChannelStats {
    double mean = 0.0;
    double std = 0.0;
    double skewness = 0.0;
};

inline const std::vector<double>& default_gamma_grid() {
    static const std::vector<double> grid{0.5, 0.75, 1.0, 1.5, 2.0, 2.2};
    return grid;
}

namespace detail {

inline ChannelStats moments(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double m2 = 0.0, m3 = 0.0;
    for (double x : v) {
        const double d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= static_cast<double>(v.size());
    m3 /= static_cast<double>(v.size());
    const double sd = std::sqrt(m2);
    return {mean, sd, sd > 0.0 ? m3 / (sd * sd * sd) : 0.0};
}

inline std::vector<double> powered(std::span<const float> plane, double gamma) {
    std::vector<double> v(plane.size());
    for (std::size_t i = 0; i < plane.size(); ++i) v[i] = std::pow(std::max(static_cast<double>(plane[i]), 0.0), gamma);
    return v;
}

}  // namespace detail

/// Population mean, std and skewness per channel.
inline std::vector<ChannelStats> channel_stats(const Image& img) {
    std::vector<ChannelStats> out;
    for (int c = 0; c < img.channels(); ++c) {
        auto p = img.plane(c);
        out.push_back(detail::moments(std::vector<double>(p.begin(), p.end())));
    }
    return out;
}

/// Per channel: for each gamma, gain and bias match mean/std in closed form; the gamma whose
/// powered source skewness is closest to the reference skewness wins (first on ties).
inline ToneMapParams fit_tone_map(const Image& src, const std::vector<ChannelStats>& ref,
                                  const std::vector<double>& gamma_grid = default_gamma_grid()) {
    require(static_cast<int>(ref.size()) == src.channels(), ErrorKind::shape,
            "reference statistics do not match the channel count");
    require(!gamma_grid.empty(), ErrorKind::parameter, "gamma grid is empty");
    for (double g : gamma_grid) require(g > 0.0, ErrorKind::parameter, "gamma values must be positive");
    ToneMapParams params;
    for (int c = 0; c < src.channels(); ++c) {
        require(ref[c].std > 0.0, ErrorKind::parameter, "reference std must be positive");
        const ChannelStats raw = detail::moments(detail::powered(src.plane(c), 1.0));
        require(raw.std > 1e-8, ErrorKind::degenerate_input,
                "channel " + std::to_string(c) + " is constant; tone map is undefined");
        ChannelTone best;
        double best_err = std::numeric_limits<double>::infinity();
        for (double g : gamma_grid) {
            const ChannelStats s = detail::moments(detail::powered(src.plane(c), g));
            if (!(s.std > 1e-12)) continue;
            const double err = std::abs(s.skewness - ref[c].skewness);
            if (err < best_err) {
                best_err = err;
                const double gain = ref[c].std / s.std;
                best = {gain, ref[c].mean - gain * s.mean, g};
            }
        }
        require(std::isfinite(best_err), ErrorKind::degenerate_input,
                "channel " + std::to_string(c) + " has no usable gamma");
        params.channels.push_back(best);
    }
    return params;
}

/// gain * max(x, 0)^gamma + bias per channel.
inline Image apply_tone_map(const Image& img, const ToneMapParams& p) {
    require(static_cast<int>(p.channels.size()) == img.channels(), ErrorKind::shape,
            "tone map channel count does not match the image");
    p.validate();
    Image out(img.width(), img.height(), img.channels());
    for (int c = 0; c < img.channels(); ++c) {
        const auto& t = p.channels[c];
        auto src = img.plane(c);
        auto dst = out.plane(c);
        for (std::size_t i = 0; i < src.size(); ++i) {
            const double x = std::max(static_cast<double>(src[i]), 0.0);
            dst[i] = static_cast<float>(t.gain * (t.gamma == 1.0 ? x : std::pow(x, t.gamma)) + t.bias);
        }
    }
    return out;
}

}  // namespace metalens
