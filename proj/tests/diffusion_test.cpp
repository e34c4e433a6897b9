#include <gtest/gtest.h>

#include <cmath>

#include "metalens/diffusion.hpp"
#include "test_support.hpp"

using namespace metalens;
namespace mt = metalens::testing;

namespace {

FeaturePyramid empty_pyramid() { return {}; }

FeaturePyramid filled(int w, int h, int c, int levels, float v) {
    FeaturePyramid p;
    for (int i = 0; i < levels; ++i) {
        p.levels.emplace_back(w, h, c, v);
        w = (w + 1) / 2;
        h = (h + 1) / 2;
    }
    return p;
}

double sample_variance(const Image& img) {
    double m = 0.0;
    for (float v : img.samples()) m += v;
    m /= static_cast<double>(img.size());
    double s = 0.0;
    for (float v : img.samples()) s += (v - m) * (v - m);
    return s / static_cast<double>(img.size() - 1);
}

// Gaussian prior sampling: mu = 0.5, sigma = 1 on 8x8, 2000 draws, T = 50.
void check_gaussian_moments(double eta) {
    const double mu = 0.5, sigma = 1.0;
    const int n = 2000;
    const DiffusionSchedule s = default_schedule(50);
    const EpsilonPredictor pred = gaussian_predictor(Image(8, 8, 1, static_cast<float>(mu)), sigma, s);
    std::vector<Image> draws;
    for (int i = 0; i < n; ++i)
        draws.push_back(sample(pred, empty_pyramid(), empty_pyramid(), 8, 8, 1, s, eta, 1000 + i));
    const auto m = mt::sample_moments(draws);
    const double se = sigma / std::sqrt(static_cast<double>(n));
    for (double v : m.mean) EXPECT_NEAR(v, mu, 4 * se);
    ::testing::Test::RecordProperty("pooled_std", std::to_string(m.pooled_std));
    EXPECT_NEAR(m.pooled_std, sigma, 0.05 * sigma) << "eta " << eta;
}

}  // namespace

TEST(Schedule, HandProducts) {
    auto one = make_schedule(1, 0.5, 0.5);
    ASSERT_EQ(one.steps(), 1);
    EXPECT_EQ(one.abar[0], 0.5);
    auto two = make_schedule(2, 0.1, 0.2);
    EXPECT_NEAR(two.abar[0], 0.9, 1e-15);
    EXPECT_NEAR(two.abar[1], 0.72, 1e-15);
}

TEST(Schedule, DefaultThousandSteps) {
    auto s = make_schedule(1000, 1e-4, 0.02);
    double prod = 1.0;
    for (int t = 0; t < 1000; ++t) {
        prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * t / 999.0);
        EXPECT_NEAR(s.abar[t], prod, 1e-12);
        if (t > 0) {
            EXPECT_LT(s.abar[t], s.abar[t - 1]);
            EXPECT_NEAR(s.abar[t], s.abar[t - 1] * (1.0 - s.betas[t]), 1e-12);
        }
    }
    EXPECT_LT(s.abar[999], 5e-5);
}

TEST(Schedule, StretchedDefaultEndsNearNoise) {
    for (int steps : {25, 50, 100, 1000}) {
        auto s = default_schedule(steps);
        EXPECT_LT(s.abar.back(), 0.01) << steps;
        EXPECT_GT(s.abar.back(), 0.0);
    }
}

TEST(Schedule, BadParametersAreRejected) {
    EXPECT_THROW(make_schedule(0, 0.1, 0.2), Error);
    EXPECT_THROW(make_schedule(10, 0.0, 0.2), Error);
    EXPECT_THROW(make_schedule(10, 0.3, 0.2), Error);
    EXPECT_THROW(make_schedule(10, 0.1, 1.0), Error);
    EXPECT_THROW(default_schedule(20), Error);
}

TEST(ForwardNoise, ArithmeticCases) {
    Image z0 = mt::random_image(9, 7, 3, 1), eps = mt::random_image(9, 7, 3, 2, -2.0f, 2.0f);
    auto near_one = make_schedule(1, 1e-14, 1e-14);
    EXPECT_LT(mt::max_abs_diff(forward_noise(z0, 0, eps, near_one), z0), 1e-6);
    auto quarter = make_schedule(1, 0.75, 0.75);
    Image zt = forward_noise(z0, 0, eps, quarter);
    for (std::size_t i = 0; i < zt.size(); ++i)
        EXPECT_NEAR(zt.samples()[i], 0.5 * z0.samples()[i] + std::sqrt(0.75) * eps.samples()[i], 1e-6);
    EXPECT_THROW(forward_noise(z0, 0, Image(9, 7, 1), quarter), Error);
    EXPECT_THROW(forward_noise(z0, 1, eps, quarter), Error);
}

TEST(ForwardNoise, MarginalVariance) {
    // 1e5 samples: the sample variance of a unit Gaussian has standard error sqrt(2 / n)
    auto s = default_schedule(50);
    const double se = std::sqrt(2.0 / 1e5);
    for (int t : {0, 10, 30, 49}) {
        Image z0 = standard_normal_image(400, 250, 1, 10 + t);
        Image eps = standard_normal_image(400, 250, 1, 100 + t);
        EXPECT_NEAR(sample_variance(forward_noise(z0, t, eps, s)), 1.0, 3 * se) << t;
        Image wide = z0;
        for (float& v : wide.samples()) v *= 2.0f;
        const double expected = s.abar[t] * 4.0 + 1.0 - s.abar[t];
        EXPECT_NEAR(sample_variance(forward_noise(wide, t, eps, s)), expected, 3 * se * expected) << t;
    }
}

TEST(DiffusionLoss, TrueNoiseGivesZero) {
    auto s = default_schedule(50);
    Image z0 = mt::random_image(16, 16, 3, 3);
    const std::uint64_t seed = 77;
    const TrainingDraw draw = training_draw(16, 16, 3, s, seed);
    EpsilonPredictor truth = [&](const Image&, const FeaturePyramid&, const FeaturePyramid&, int t) {
        EXPECT_EQ(t, draw.t);
        return draw.eps;
    };
    EXPECT_EQ(diffusion_loss(truth, z0, {}, {}, s, seed), 0.0);
    EXPECT_LT(diffusion_loss(oracle_predictor(z0, s), z0, {}, {}, s, seed), 1e-10);
}

TEST(DiffusionLoss, ZeroPredictorGivesUnitLoss) {
    auto s = default_schedule(50);
    Image z0(320, 320, 1, 0.3f);
    EpsilonPredictor zero = [](const Image& z, const FeaturePyramid&, const FeaturePyramid&, int) {
        return Image(z.width(), z.height(), z.channels());
    };
    // mean of n squared unit normals: standard error sqrt(2 / n)
    EXPECT_NEAR(diffusion_loss(zero, z0, {}, {}, s, 5), 1.0, 3 * std::sqrt(2.0 / (320 * 320)));
}

TEST(DiffusionLoss, ConstantOffsetGivesSquare) {
    auto s = default_schedule(50);
    Image z0 = mt::random_image(12, 12, 1, 4);
    const double c = 0.25;
    EpsilonPredictor offset = [&](const Image&, const FeaturePyramid&, const FeaturePyramid&, int) {
        Image out = training_draw(12, 12, 1, s, 9).eps;
        for (float& v : out.samples()) v = static_cast<float>(v + c);
        return out;
    };
    EXPECT_NEAR(diffusion_loss(offset, z0, {}, {}, s, 9), c * c, 1e-6);
    std::vector<std::uint64_t> seeds{9, 9, 9};
    EXPECT_NEAR(diffusion_loss(offset, z0, {}, {}, s, seeds), c * c, 1e-6);
}

TEST(ReverseStep, TerminalStepReturnsEstimate) {
    auto s = default_schedule(30);
    Image zt = mt::random_image(10, 10, 1, 5, -2.0f, 2.0f), eps = mt::random_image(10, 10, 1, 6, -1.0f, 1.0f);
    for (double eta : {0.0, 0.5, 1.0}) {
        Image out = reverse_step(zt, eps, 0, s, eta, 3);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double z0 = (zt.samples()[i] - std::sqrt(1 - s.abar[0]) * eps.samples()[i]) / std::sqrt(s.abar[0]);
            EXPECT_NEAR(out.samples()[i], z0, 1e-6);
        }
    }
}

TEST(ReverseStep, DdimConsistencyOverFullSchedule) {
    for (int steps : {50, 100}) {
        auto s = default_schedule(steps);
        Image z0 = mt::random_image(24, 24, 3, 7);
        Image eps = standard_normal_image(24, 24, 3, 8);
        double worst = 0.0;
        for (int t = 1; t < steps; ++t) {
            Image back = reverse_step(forward_noise(z0, t, eps, s), eps, t, s, 0.0, 0);
            worst = std::max(worst, mt::max_abs_diff(back, forward_noise(z0, t - 1, eps, s)));
        }
        EXPECT_LT(worst, 1e-6) << steps;
    }
}

TEST(ReverseStep, ZeroNoiseEstimateIsPureRescale) {
    auto s = default_schedule(40);
    Image zt = mt::random_image(8, 8, 2, 9, -3.0f, 3.0f);
    Image zero(8, 8, 2);
    for (int t : {1, 17, 39}) {
        Image out = reverse_step(zt, zero, t, s, 0.0, 0);
        const double ratio = std::sqrt(s.abar[t - 1] / s.abar[t]);
        for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out.samples()[i], zt.samples()[i] * ratio, 1e-6);
    }
}

TEST(ReverseStep, StochasticStepIsSeeded) {
    auto s = default_schedule(40);
    Image zt = mt::random_image(8, 8, 1, 10), eps = mt::random_image(8, 8, 1, 11);
    EXPECT_EQ(reverse_step(zt, eps, 20, s, 1.0, 5), reverse_step(zt, eps, 20, s, 1.0, 5));
    EXPECT_NE(reverse_step(zt, eps, 20, s, 1.0, 5), reverse_step(zt, eps, 20, s, 1.0, 6));
    EXPECT_NE(reverse_step(zt, eps, 20, s, 1.0, 5), reverse_step(zt, eps, 20, s, 0.0, 5));
}

TEST(ReverseStep, GuardsAndParameters) {
    auto collapsed = make_schedule(200, 0.999, 0.999);
    ASSERT_EQ(collapsed.abar.back(), 0.0);
    Image z(4, 4, 1);
    try {
        reverse_step(z, z, 199, collapsed, 0.0, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::numeric);
    }
    auto s = default_schedule(30);
    EXPECT_THROW(reverse_step(z, z, 5, s, 1.5, 0), Error);
    EXPECT_THROW(reverse_step(z, z, 30, s, 0.0, 0), Error);
}

TEST(Sample, OracleRecoversTarget) {
    auto s = default_schedule(50);
    Image target = mt::random_image(32, 32, 3, 12);
    Image out = sample(oracle_predictor(target, s), {}, {}, 32, 32, 3, s, 0.0, 13);
    EXPECT_LT(mt::max_abs_diff(out, target), 1e-5);
}

TEST(Sample, DeterministicGivenSeed) {
    auto s = default_schedule(30);
    auto pred = gaussian_predictor(Image(8, 8, 1, 0.2f), 0.5, s);
    EXPECT_EQ(sample(pred, {}, {}, 8, 8, 1, s, 1.0, 4), sample(pred, {}, {}, 8, 8, 1, s, 1.0, 4));
    EXPECT_NE(sample(pred, {}, {}, 8, 8, 1, s, 1.0, 4), sample(pred, {}, {}, 8, 8, 1, s, 1.0, 5));
}

TEST(Sample, GaussianPriorMomentsDdim) { check_gaussian_moments(0.0); }

TEST(Sample, GaussianPriorMomentsAncestral) { check_gaussian_moments(1.0); }

TEST(FusedPredictor, ClosedGateMatchesBase) {
    auto s = default_schedule(30);
    Image mu = mt::smooth_image(32, 32, 3, 14);
    auto base = gaussian_predictor(mu, 0.3, s);
    Image zt = mt::smooth_image(32, 32, 3, 15);
    FeaturePyramid fc = build_pyramid(mt::random_image(32, 32, 3, 16), 4);
    auto closed = fused_predictor(base, fc, filled(32, 32, 1, 4, 0.0f));
    auto no_color = fused_predictor(base, filled(32, 32, 3, 4, 0.0f), filled(32, 32, 1, 4, 1.0f));
    for (int t : {0, 12, 29}) {
        Image ref = base(zt, {}, {}, t);
        EXPECT_LT(mt::max_abs_diff(closed(zt, {}, {}, t), ref), 5e-3);
        EXPECT_LT(mt::max_abs_diff(no_color(zt, {}, {}, t), ref), 5e-3);
    }
}

TEST(FusedPredictor, OpenGateChangesPrediction) {
    auto s = default_schedule(30);
    auto base = gaussian_predictor(Image(32, 32, 3, 0.5f), 0.3, s);
    Image zt = mt::random_image(32, 32, 3, 17);
    auto fused = fused_predictor(base, build_pyramid(mt::random_image(32, 32, 3, 18), 4),
                                 build_pyramid(mt::random_image(32, 32, 1, 19), 4));
    EXPECT_GT(mt::max_abs_diff(fused(zt, {}, {}, 10), base(zt, {}, {}, 10)), 0.0);
}

TEST(FusedPredictor, ShapeMismatchIsShapeError) {
    auto s = default_schedule(30);
    auto base = gaussian_predictor(Image(32, 32, 3, 0.5f), 0.3, s);
    auto fused = fused_predictor(base, filled(32, 32, 3, 4, 0.0f), filled(32, 32, 1, 4, 0.0f));
    EXPECT_THROW(fused(Image(16, 16, 3), {}, {}, 0), Error);
    EXPECT_THROW(fused_predictor(base, filled(32, 32, 3, 4, 0.0f), filled(32, 32, 1, 3, 0.0f)), Error);
}
