#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "metalens/error.hpp"
#include "metalens/kernel_grid.hpp"

namespace metalens {

enum class PsfKind { gaussian_ramp, astigmatic_ramp, delta };

struct PsfSpec {
    PsfKind kind = PsfKind::gaussian_ramp;
    GridLayout layout{3, 3, 11, 1, 128, 128};
    double sigma_center = 0.5;
    double sigma_edge = 1.5;
    double anisotropy = 2.0;  // tangential / radial sigma at the field edge (astigmatic-ramp)
};

inline PsfKind parse_psf_kind(const std::string& s) {
    if (s == "gaussian-ramp") return PsfKind::gaussian_ramp;
    if (s == "astigmatic-ramp") return PsfKind::astigmatic_ramp;
    if (s == "delta") return PsfKind::delta;
    fail(ErrorKind::parameter, "unknown PSF kind '" + s + "'");
}

/// Normalized field radius of an anchor: 0 at the image center, 1 at the corners.
inline double field_radius(const PsfGrid& grid, int gy, int gx) {
    const double cy = 0.5 * (grid.image_h() - 1);
    const double cx = 0.5 * (grid.image_w() - 1);
    const double corner = std::hypot(cx, cy);
    if (corner == 0.0) return 0.0;
    return std::hypot(grid.anchor_y(gy) - cy, grid.anchor_x(gx) - cx) / corner;
}

/// Synthetic calibration grids whose blur grows toward the field edge.
///
/// gaussian-ramp: isotropic Gaussian, sigma(rho) = sigma_center + (sigma_edge - sigma_center) rho.
/// astigmatic-ramp: radial sigma as above, tangential sigma scaled by 1 + (anisotropy - 1) rho.
/// delta: identity kernels. All kernels are normalized to unit sum.
inline PsfGrid make_psf_grid(const PsfSpec& spec) {
    require(spec.sigma_center >= 0.0 && spec.sigma_edge >= 0.0, ErrorKind::parameter, "PSF sigmas must be >= 0");
    require(spec.anisotropy >= 1.0, ErrorKind::parameter, "anisotropy must be >= 1");
    PsfGrid grid(spec.layout);
    const int k = grid.kernel_k();
    const int r = grid.radius();
    const double cy = 0.5 * (grid.image_h() - 1);
    const double cx = 0.5 * (grid.image_w() - 1);
    for (int gy = 0; gy < grid.grid_h(); ++gy)
        for (int gx = 0; gx < grid.grid_w(); ++gx) {
            const double rho = field_radius(grid, gy, gx);
            const double sigma = spec.sigma_center + (spec.sigma_edge - spec.sigma_center) * rho;
            // radial unit vector; arbitrary at the exact center, where the kernel is isotropic
            double uy = grid.anchor_y(gy) - cy;
            double ux = grid.anchor_x(gx) - cx;
            const double len = std::hypot(uy, ux);
            if (len > 0.0) {
                uy /= len;
                ux /= len;
            } else {
                uy = 0.0;
                ux = 1.0;
            }
            const double sigma_t =
                spec.kind == PsfKind::astigmatic_ramp ? sigma * (1.0 + (spec.anisotropy - 1.0) * rho) : sigma;
            for (int c = 0; c < grid.channels(); ++c) {
                auto kern = grid.kernel(gy, gx, c);
                if (spec.kind == PsfKind::delta || sigma < 1e-6) {
                    kern[r * k + r] = 1.0f;
                    continue;
                }
                double sum = 0.0;
                std::vector<double> vals(grid.kernel_size());
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const double dy = ky - r;
                        const double dx = kx - r;
                        const double along = dy * uy + dx * ux;
                        const double across = -dy * ux + dx * uy;
                        const double v = std::exp(-0.5 * (along * along / (sigma * sigma) +
                                                          across * across / (sigma_t * sigma_t)));
                        vals[ky * k + kx] = v;
                        sum += v;
                    }
                for (std::size_t i = 0; i < vals.size(); ++i) kern[i] = static_cast<float>(vals[i] / sum);
            }
        }
    // float rounding can leave sums a few ulps off; rescale once more in float
    grid.renormalize();
    grid.validate();
    return grid;
}

}  // namespace metalens
