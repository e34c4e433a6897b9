#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "metalens/error.hpp"
#include "metalens/image.hpp"
#include "metalens/pyramid.hpp"
#include "metalens/random.hpp"

namespace metalens {

/// Linear-beta DDPM schedule with 0-based timesteps.
struct DiffusionSchedule {
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<double> abar;

    int steps() const noexcept { return static_cast<int>(betas.size()); }
    /// abar[t - 1], with abar[-1] = 1.
    double abar_prev(int t) const { return t == 0 ? 1.0 : abar.at(static_cast<std::size_t>(t - 1)); }
};

inline constexpr int kDefaultTimesteps = 1000;
inline constexpr double kDefaultBetaMin = 1e-4;
inline constexpr double kDefaultBetaMax = 0.02;

inline DiffusionSchedule make_schedule(int steps, double beta_min, double beta_max) {
    require(steps >= 1, ErrorKind::parameter, "schedule needs at least one timestep");
    require(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0, ErrorKind::parameter,
            "betas must satisfy 0 < beta_min <= beta_max < 1");
    DiffusionSchedule s;
    double prod = 1.0;
    for (int t = 0; t < steps; ++t) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
        const double beta = beta_min + (beta_max - beta_min) * frac;
        prod *= 1.0 - beta;
        s.betas.push_back(beta);
        s.alphas.push_back(1.0 - beta);
        s.abar.push_back(prod);
    }
    return s;
}

/// Default betas [1e-4, 0.02] stretched by 1000 / T so short schedules still end near pure noise.
inline DiffusionSchedule default_schedule(int steps) {
    require(steps > kDefaultTimesteps * kDefaultBetaMax, ErrorKind::parameter,
            "default schedule needs more than 20 timesteps");
    const double scale = static_cast<double>(kDefaultTimesteps) / steps;
    return make_schedule(steps, kDefaultBetaMin * scale, kDefaultBetaMax * scale);
}

inline Image standard_normal_image(int w, int h, int c, std::uint64_t seed) {
    Image out(w, h, c);
    NormalSource normal(seed);
    for (float& v : out.samples()) v = static_cast<float>(normal());
    return out;
}

namespace detail {

inline void require_timestep(const DiffusionSchedule& s, int t) {
    require(t >= 0 && t < s.steps(), ErrorKind::parameter,
            "timestep " + std::to_string(t) + " outside [0, " + std::to_string(s.steps()) + ")");
}

}  // namespace detail

/// z_t = sqrt(abar[t]) z0 + sqrt(1 - abar[t]) eps.
inline Image forward_noise(const Image& z0, int t, const Image& eps, const DiffusionSchedule& s) {
    require_same_shape(z0, eps, "forward_noise");
    detail::require_timestep(s, t);
    const double a = std::sqrt(s.abar[t]);
    const double b = std::sqrt(1.0 - s.abar[t]);
    Image out(z0.width(), z0.height(), z0.channels());
    for (std::size_t i = 0; i < out.size(); ++i)
        out.samples()[i] = static_cast<float>(a * z0.samples()[i] + b * eps.samples()[i]);
    return out;
}

/// eps_theta(z_t, f_c, f_s, t). Output has the shape of z_t; deterministic given inputs.
using EpsilonPredictor =
    std::function<Image(const Image& z_t, const FeaturePyramid& f_c, const FeaturePyramid& f_s, int t)>;

/// Returns the exact noise consistent with z_t and a known target z0.
inline EpsilonPredictor oracle_predictor(Image z0, DiffusionSchedule sched) {
    auto target = std::make_shared<const Image>(std::move(z0));
    auto s = std::make_shared<const DiffusionSchedule>(std::move(sched));
    return [target, s](const Image& z_t, const FeaturePyramid&, const FeaturePyramid&, int t) {
        require_same_shape(z_t, *target, "oracle_predictor");
        const double a = std::sqrt(s->abar.at(t));
        const double b = std::sqrt(1.0 - s->abar.at(t));
        require(b > 0.0, ErrorKind::numeric, "oracle predictor undefined at abar = 1");
        Image eps(z_t.width(), z_t.height(), z_t.channels());
        for (std::size_t i = 0; i < eps.size(); ++i)
            eps.samples()[i] = static_cast<float>((z_t.samples()[i] - a * target->samples()[i]) / b);
        return eps;
    };
}

/// Posterior-mean noise for z0 ~ N(mu, sigma^2 I):
/// eps = (z_t - sqrt(abar) mu) sqrt(1 - abar) / (abar sigma^2 + 1 - abar).
inline EpsilonPredictor gaussian_predictor(Image mu, double sigma, DiffusionSchedule sched) {
    require(sigma >= 0.0, ErrorKind::parameter, "prior sigma must be non-negative");
    auto mean = std::make_shared<const Image>(std::move(mu));
    auto s = std::make_shared<const DiffusionSchedule>(std::move(sched));
    return [mean, sigma, s](const Image& z_t, const FeaturePyramid&, const FeaturePyramid&, int t) {
        require_same_shape(z_t, *mean, "gaussian_predictor");
        const double ab = s->abar.at(t);
        const double den = ab * sigma * sigma + 1.0 - ab;
        require(den > 0.0, ErrorKind::numeric, "gaussian predictor undefined at abar = 1 with sigma = 0");
        const double a = std::sqrt(ab);
        const double k = std::sqrt(1.0 - ab) / den;
        Image eps(z_t.width(), z_t.height(), z_t.channels());
        for (std::size_t i = 0; i < eps.size(); ++i)
            eps.samples()[i] = static_cast<float>((z_t.samples()[i] - a * mean->samples()[i]) * k);
        return eps;
    };
}

/// Feeds the base predictor collapse(gated_fuse(build_pyramid(z_t), f_c, f_s)) instead of z_t.
inline EpsilonPredictor fused_predictor(EpsilonPredictor base, FeaturePyramid f_c, FeaturePyramid f_s) {
    require(f_c.size() >= 1 && f_c.size() == f_s.size(), ErrorKind::shape,
            "fused_predictor: conditioning pyramids differ in level count");
    auto fc = std::make_shared<const FeaturePyramid>(std::move(f_c));
    auto fs = std::make_shared<const FeaturePyramid>(std::move(f_s));
    return [base = std::move(base), fc, fs](const Image& z_t, const FeaturePyramid&, const FeaturePyramid&, int t) {
        require(z_t.width() == (*fc)[0].width() && z_t.height() == (*fc)[0].height() &&
                    z_t.channels() == (*fc)[0].channels(),
                ErrorKind::shape, "fused_predictor: z_t does not match the conditioning pyramid");
        const Image fused = collapse_pyramid(gated_fuse(build_pyramid(z_t, fc->size()), *fc, *fs));
        return base(fused, *fc, *fs, t);
    };
}

struct TrainingDraw {
    int t = 0;
    Image eps;
};

/// The (t, eps) pair used by diffusion_loss for a given seed: t ~ U{0..T-1}, eps ~ N(0, I).
inline TrainingDraw training_draw(int w, int h, int c, const DiffusionSchedule& s, std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, 0));
    const int t = std::uniform_int_distribution<int>(0, s.steps() - 1)(rng);
    return {t, standard_normal_image(w, h, c, derive_seed(seed, 1))};
}

/// One Monte-Carlo draw of mean((eps - eps_theta(z_t, f_c, f_s, t))^2).
inline double diffusion_loss(const EpsilonPredictor& pred, const Image& z0, const FeaturePyramid& f_c,
                             const FeaturePyramid& f_s, const DiffusionSchedule& s, std::uint64_t seed) {
    const TrainingDraw d = training_draw(z0.width(), z0.height(), z0.channels(), s, seed);
    const Image hat = pred(forward_noise(z0, d.t, d.eps, s), f_c, f_s, d.t);
    require_same_shape(hat, d.eps, "diffusion_loss");
    double sum = 0.0;
    for (std::size_t i = 0; i < hat.size(); ++i) {
        const double diff = static_cast<double>(d.eps.samples()[i]) - hat.samples()[i];
        sum += diff * diff;
    }
    return sum / static_cast<double>(hat.size());
}

inline double diffusion_loss(const EpsilonPredictor& pred, const Image& z0, const FeaturePyramid& f_c,
                             const FeaturePyramid& f_s, const DiffusionSchedule& s,
                             const std::vector<std::uint64_t>& seeds) {
    require(!seeds.empty(), ErrorKind::parameter, "batch loss needs at least one seed");
    double total = 0.0;
    for (auto seed : seeds) total += diffusion_loss(pred, z0, f_c, f_s, s, seed);
    return total / static_cast<double>(seeds.size());
}

/// DDIM update from t to t-1 with stochasticity eta (eta = 1 is DDPM ancestral sampling).
inline Image reverse_step(const Image& z_t, const Image& eps_hat, int t, const DiffusionSchedule& s, double eta,
                          std::uint64_t seed) {
    require_same_shape(z_t, eps_hat, "reverse_step");
    detail::require_timestep(s, t);
    require(eta >= 0.0 && eta <= 1.0, ErrorKind::parameter, "eta must lie in [0, 1]");
    const double ab = s.abar[t];
    require(ab > 0.0, ErrorKind::numeric, "abar[t] = 0; z0 estimate undefined");
    const double ap = s.abar_prev(t);
    const double sigma = ap >= 1.0 ? 0.0 : eta * std::sqrt((1.0 - ap) / (1.0 - ab) * (1.0 - ab / ap));
    const double dir = std::sqrt(std::max(1.0 - ap - sigma * sigma, 0.0));
    const double inv_sqrt_ab = 1.0 / std::sqrt(ab);
    const double sqrt_1mab = std::sqrt(1.0 - ab);
    const double sqrt_ap = std::sqrt(ap);
    Image out(z_t.width(), z_t.height(), z_t.channels());
    std::unique_ptr<NormalSource> normal;
    if (sigma > 0.0) normal = std::make_unique<NormalSource>(seed);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double e = eps_hat.samples()[i];
        const double z0 = (z_t.samples()[i] - sqrt_1mab * e) * inv_sqrt_ab;
        double v = sqrt_ap * z0 + dir * e;
        if (normal) v += sigma * (*normal)();
        out.samples()[i] = static_cast<float>(v);
    }
    return out;
}

/// z_{T-1} ~ N(0, I) from `seed`, then reverse_step down to t = 0. Step noise uses derived seeds.
inline Image sample(const EpsilonPredictor& pred, const FeaturePyramid& f_c, const FeaturePyramid& f_s, int w,
                    int h, int c, const DiffusionSchedule& s, double eta, std::uint64_t seed) {
    Image z = standard_normal_image(w, h, c, seed);
    for (int t = s.steps() - 1; t >= 0; --t) {
        const Image eps = pred(z, f_c, f_s, t);
        z = reverse_step(z, eps, t, s, eta, derive_seed(seed, static_cast<std::uint64_t>(t) + 1));
    }
    return z;
}

}  // namespace metalens
