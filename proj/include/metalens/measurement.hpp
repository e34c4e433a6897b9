#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "metalens/error.hpp"
#include "metalens/image.hpp"
#include "metalens/kernel_grid.hpp"
#include "metalens/random.hpp"
#include "metalens/sv_convolve.hpp"

namespace metalens {

/// Additive white Gaussian noise: standard deviation in intensity units plus a seed.
struct NoiseModel {
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

inline constexpr std::array<double, 3> kUniformColorWeights{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
inline constexpr std::array<double, 3> kLuminanceWeights{0.2126, 0.7152, 0.0722};

/// Collapses RGB to one channel, out = w0*r + w1*g + w2*b. Equal weights by default.
inline Image color_average(const Image& img, const std::array<double, 3>& weights = kUniformColorWeights) {
    require(img.channels() == 3, ErrorKind::shape, "color_average expects 3 channels");
    Image out(img.width(), img.height(), 1);
    auto r = img.plane(0);
    auto g = img.plane(1);
    auto b = img.plane(2);
    auto dst = out.plane(0);
    const bool uniform = weights == kUniformColorWeights;
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const double sum = uniform ? (static_cast<double>(r[i]) + g[i] + b[i]) / 3.0
                                   : weights[0] * r[i] + weights[1] * g[i] + weights[2] * b[i];
        dst[i] = static_cast<float>(sum);
    }
    return out;
}

/// img + sigma * eps, eps drawn in sample order from the seeded generator.
inline Image add_gaussian_noise(const Image& img, const NoiseModel& noise) {
    require(noise.sigma >= 0.0, ErrorKind::parameter, "noise sigma must be non-negative");
    if (noise.sigma == 0.0) return img;
    Image out = img;
    NormalSource normal(noise.seed);
    for (float& v : out.samples()) v = static_cast<float>(v + noise.sigma * normal());
    return out;
}

struct Measurements {
    Image color_cue;  // y_c, 3 channels
    Image structure;  // y_s, 1 channel
};

/// y_c = h_c (*) x + n_c and y_s = h_s (*) (S x) + n_s, no clamping.
/// The color-cue noise uses `noise.seed`; the structure noise an independent derived seed.
inline Measurements synthesize_measurements(const Image& x, const PsfGrid& grid_c, const PsfGrid& grid_s,
                                            const NoiseModel& noise, Engine engine = Engine::direct) {
    require(x.channels() == 3, ErrorKind::shape, "scene must have 3 channels");
    require(grid_s.channels() == 1, ErrorKind::shape, "structure PSF grid must have 1 channel");
    Measurements m;
    m.color_cue = add_gaussian_noise(sv_convolve(x, grid_c, engine), noise);
    m.structure = add_gaussian_noise(sv_convolve(color_average(x), grid_s, engine),
                                     NoiseModel{noise.sigma, derive_seed(noise.seed, 1)});
    return m;
}

}  // namespace metalens
