#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "metalens/error.hpp"
#include "metalens/filters.hpp"
#include "metalens/image.hpp"
#include "metalens/measurement.hpp"
#include "metalens/sv_convolve.hpp"
#include "metalens/transform.hpp"

namespace metalens {

enum class MotionModel { translation, affine, homography };

struct AlignConfig {
    MotionModel model = MotionModel::affine;
    int pyramid_levels = 3;
    int max_iters = 50;
    double convergence_tol = 1e-6;

    void validate() const {
        require(pyramid_levels >= 1, ErrorKind::parameter, "alignment needs at least one pyramid level");
        require(max_iters >= 1, ErrorKind::parameter, "alignment needs at least one iteration");
        require(convergence_tol > 0.0, ErrorKind::parameter, "convergence tolerance must be positive");
    }
};

struct AlignResult {
    Transform2D transform;
    bool converged = false;
    int iterations = 0;      // summed over levels
    double residual_mse = 0; // at the finest level, over pixels that map inside the image
};

/// Inverse warp: out(y,x) = bilinear sample of img at H^-1 (x, y, 1), coordinates clamped to the image.
inline Image warp(const Image& img, const Transform2D& h, Boundary boundary = Boundary::replicate) {
    (void)boundary;
    const Transform2D inv = h.inverse();
    Image out(img.width(), img.height(), img.channels());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const auto [p, ok] = inv.apply(x, y);
            (void)ok;
            for (int c = 0; c < img.channels(); ++c)
                out.at(c, y, x) = static_cast<float>(sample_bilinear(img, c, p[0], p[1]));
        }
    return out;
}

namespace detail {

inline int motion_params(MotionModel m) {
    switch (m) {
        case MotionModel::translation: return 2;
        case MotionModel::affine: return 6;
        case MotionModel::homography: return 8;
    }
    return 0;
}

/// Indices into the 8-vector (a00-1, a01, tx, a10, a11-1, ty, h20, h21) used by each model.
inline std::vector<int> motion_param_index(MotionModel m) {
    switch (m) {
        case MotionModel::translation: return {2, 5};
        case MotionModel::affine: return {0, 1, 2, 3, 4, 5};
        case MotionModel::homography: return {0, 1, 2, 3, 4, 5, 6, 7};
    }
    return {};
}

/// One level of inverse-compositional Lucas-Kanade: refines `warp_ti` in place so that
/// image(warp_ti(p)) matches template(p). Parameters live in normalized coordinates
/// (origin at the image center, unit = half the larger side) so the update is well scaled.
struct LevelResult {
    bool converged = false;
    int iterations = 0;
    double mse = std::numeric_limits<double>::infinity();
};

inline LevelResult lucas_kanade_level(const Image& image, const Image& templ, Transform2D& warp_ti,
                                      const AlignConfig& cfg) {
    const int w = templ.width();
    const int h = templ.height();
    const double cx = 0.5 * (w - 1);
    const double cy = 0.5 * (h - 1);
    const double s = 0.5 * std::max(w, h);
    const Transform2D to_norm(Transform2D::Matrix{1 / s, 0, -cx / s, 0, 1 / s, -cy / s, 0, 0, 1});
    const Transform2D from_norm = to_norm.inverse();

    auto inside = [&](const std::array<double, 2>& p) {
        return p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= w - 1 && p[1] <= h - 1;
    };

    const auto idx = motion_param_index(cfg.model);
    const int np = static_cast<int>(idx.size());

    // Steepest-descent images of the template, for interior pixels with central gradients.
    struct Sample {
        int x, y;
        double t;
        std::array<double, 8> sd;
    };
    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(w) * h);
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x) {
            const double gx = 0.5 * (templ.at(0, y, x + 1) - templ.at(0, y, x - 1));
            const double gy = 0.5 * (templ.at(0, y + 1, x) - templ.at(0, y - 1, x));
            const double xn = (x - cx) / s;
            const double yn = (y - cy) / s;
            // d(pixel)/d(p) = s * d(normalized)/d(p)
            const std::array<double, 8> jx{xn, yn, 1, 0, 0, 0, -xn * xn, -xn * yn};
            const std::array<double, 8> jy{0, 0, 0, xn, yn, 1, -xn * yn, -yn * yn};
            Sample smp{x, y, templ.at(0, y, x), {}};
            for (int k = 0; k < 8; ++k) smp.sd[k] = s * (gx * jx[k] + gy * jy[k]);
            samples.push_back(smp);
        }

    LevelResult best;
    Transform2D best_warp = warp_ti;
    Transform2D current = warp_ti;
    int it = 0;
    bool converged = false;
    for (; it < cfg.max_iters; ++it) {
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(np, np);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(np);
        double sse = 0.0;
        std::size_t count = 0;
        for (const Sample& smp : samples) {
            const auto [p, ok] = current.apply(smp.x, smp.y);
            if (!ok || !inside(p)) continue;
            const double err = sample_bilinear(image, 0, p[0], p[1]) - smp.t;
            sse += err * err;
            ++count;
            for (int a = 0; a < np; ++a) {
                const double sa = smp.sd[idx[a]];
                rhs(a) += sa * err;
                for (int b = a; b < np; ++b) hess(a, b) += sa * smp.sd[idx[b]];
            }
        }
        if (count < static_cast<std::size_t>(4 * np)) break;
        const double mse = sse / static_cast<double>(count);
        if (mse < best.mse) {
            best.mse = mse;
            best_warp = current;
        }
        for (int a = 0; a < np; ++a)
            for (int b = 0; b < a; ++b) hess(a, b) = hess(b, a);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
        if (ldlt.info() != Eigen::Success || !(ldlt.isPositive())) break;
        const Eigen::VectorXd dp = ldlt.solve(rhs);
        if (!dp.allFinite()) break;

        std::array<double, 8> full{};
        for (int a = 0; a < np; ++a) full[idx[a]] = dp(a);
        Transform2D::Matrix m{1 + full[0], full[1], full[2], full[3], 1 + full[4], full[5], full[6], full[7], 1};
        Transform2D delta;
        try {
            delta = from_norm * Transform2D(m) * to_norm;
            current = current * delta.inverse();
        } catch (const Error&) {
            break;
        }
        if (dp.norm() < cfg.convergence_tol) {
            converged = true;
            ++it;
            break;
        }
    }

    // Score the final iterate too; it has not been evaluated yet.
    double sse = 0.0;
    std::size_t count = 0;
    for (const Sample& smp : samples) {
        const auto [p, ok] = current.apply(smp.x, smp.y);
        if (!ok || !inside(p)) continue;
        const double err = sample_bilinear(image, 0, p[0], p[1]) - smp.t;
        sse += err * err;
        ++count;
    }
    if (count > 0 && sse / static_cast<double>(count) <= best.mse) {
        best.mse = sse / static_cast<double>(count);
        best_warp = current;
    }
    warp_ti = best_warp;
    best.converged = converged;
    best.iterations = it;
    return best;
}

inline Image to_luminance(const Image& img) {
    if (img.channels() == 1) return img;
    require(img.channels() == 3, ErrorKind::shape, "alignment expects 1- or 3-channel images");
    return color_average(img);
}

}  // namespace detail

/// Coarse-to-fine inverse-compositional Lucas-Kanade on luminance.
///
/// Returns H such that warp(moving, H) approximates `fixed`, under the model
/// moving(q) = fixed(H q): the moving image is the template and the fixed image is
/// resampled. Residual MSE is measured in the moving frame. Non-convergence is flagged
/// and the best iterate returned.
inline AlignResult estimate_transform_detailed(const Image& moving, const Image& fixed, const AlignConfig& cfg) {
    cfg.validate();
    require(moving.same_dims(fixed), ErrorKind::shape, "alignment inputs must have equal dimensions");
    std::vector<Image> mov{detail::to_luminance(moving)};
    std::vector<Image> fix{detail::to_luminance(fixed)};
    for (int l = 1; l < cfg.pyramid_levels; ++l) {
        if (std::min(fix.back().width(), fix.back().height()) < 16) break;
        mov.push_back(reduce2(mov.back()));
        fix.push_back(reduce2(fix.back()));
    }

    // Level l pixel i sits on level-0 pixel 2^l i.
    const Transform2D up(Transform2D::Matrix{2, 0, 0, 0, 2, 0, 0, 0, 1});
    const Transform2D down = up.inverse();
    Transform2D warp_mf = Transform2D::identity();
    AlignResult result;
    for (int l = static_cast<int>(fix.size()) - 1; l >= 0; --l) {
        auto level = detail::lucas_kanade_level(fix[l], mov[l], warp_mf, cfg);
        result.iterations += level.iterations;
        result.converged = level.converged;
        result.residual_mse = level.mse;
        if (l > 0) warp_mf = up * warp_mf * down;
    }
    result.transform = warp_mf;
    return result;
}

inline Transform2D estimate_transform(const Image& moving, const Image& fixed, const AlignConfig& cfg = {}) {
    return estimate_transform_detailed(moving, fixed, cfg).transform;
}

struct AlignedColor {
    Image image;
    Transform2D transform;
    AlignResult estimate;
};

/// Registers the color cue onto the structure image; all channels share one transform.
inline AlignedColor align_color_to_structure(const Image& y_c, const Image& y_s, const AlignConfig& cfg = {}) {
    require(y_c.channels() == 3 && y_s.channels() == 1, ErrorKind::shape,
            "align_color_to_structure expects a 3-channel cue and a 1-channel structure image");
    require(y_c.same_dims(y_s), ErrorKind::shape, "color cue and structure image differ in size");
    AlignResult est = estimate_transform_detailed(color_average(y_c), y_s, cfg);
    return {warp(y_c, est.transform), est.transform, est};
}

}  // namespace metalens
