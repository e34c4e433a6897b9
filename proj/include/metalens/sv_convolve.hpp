#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "metalens/error.hpp"
#include "metalens/fft.hpp"
#include "metalens/image.hpp"
#include "metalens/kernel_grid.hpp"

namespace metalens {

/// How pixels outside the image are synthesized. Only edge replication exists.
enum class Boundary { replicate };

/// `direct` evaluates the interpolated kernel per pixel; `tiled` convolves the whole
/// image with each anchor kernel via FFT and blends the anchor outputs.
enum class Engine { direct, tiled };

namespace detail {

/// Bilinear position of pixel `i` between anchors `g0` and `g1` along one axis.
struct AxisWeight {
    int g0;
    int g1;
    double w0;
    double w1;
};

inline AxisWeight axis_weight(int i, int n_pixels, int n_anchors) {
    double u = (i + 0.5) * n_anchors / n_pixels - 0.5;
    u = std::clamp(u, 0.0, static_cast<double>(n_anchors - 1));
    const int g0 = std::min(static_cast<int>(std::floor(u)), n_anchors - 1);
    const int g1 = std::min(g0 + 1, n_anchors - 1);
    const double w1 = u - g0;
    return {g0, g1, 1.0 - w1, w1};
}

inline std::vector<AxisWeight> axis_weights(int n_pixels, int n_anchors) {
    std::vector<AxisWeight> w(static_cast<std::size_t>(n_pixels));
    for (int i = 0; i < n_pixels; ++i) w[i] = axis_weight(i, n_pixels, n_anchors);
    return w;
}

/// Weight of anchor `g` at a pixel with axis weight `aw`.
inline double anchor_weight(const AxisWeight& aw, int g) {
    double w = 0.0;
    if (aw.g0 == g) w += aw.w0;
    if (aw.g1 == g) w += aw.w1;
    return w;
}

inline int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

template <class Tag>
void check_compatible(const Image& img, const BasicKernelGrid<Tag>& grid) {
    require(img.width() == grid.image_w() && img.height() == grid.image_h(), ErrorKind::shape,
            "image is " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                " but the kernel grid calibrates " + std::to_string(grid.image_w()) + "x" +
                std::to_string(grid.image_h()));
    require(grid.channels() == 1 || grid.channels() == img.channels(), ErrorKind::shape,
            "kernel grid has " + std::to_string(grid.channels()) + " channels, image has " +
                std::to_string(img.channels()));
}

/// Interpolated kernel at one pixel for kernel channel `kc`, written into `out` (K*K doubles).
template <class Tag>
void interpolate_kernel(const BasicKernelGrid<Tag>& grid, const AxisWeight& wy, const AxisWeight& wx, int kc,
                        double* out) {
    const std::size_t kk = grid.kernel_size();
    std::fill(out, out + kk, 0.0);
    const int gys[2] = {wy.g0, wy.g1};
    const double wys[2] = {wy.w0, wy.w1};
    const int gxs[2] = {wx.g0, wx.g1};
    const double wxs[2] = {wx.w0, wx.w1};
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            const double w = wys[a] * wxs[b];
            if (w == 0.0) continue;
            auto k = grid.kernel(gys[a], gxs[b], kc);
            for (std::size_t i = 0; i < kk; ++i) out[i] += w * k[i];
        }
    }
}

template <class Tag>
Image sv_convolve_direct(const Image& img, const BasicKernelGrid<Tag>& grid) {
    const int w = img.width();
    const int h = img.height();
    const int k = grid.kernel_k();
    const int r = grid.radius();
    const int kc_count = grid.channels();
    const auto wy = axis_weights(h, grid.grid_h());
    const auto wx = axis_weights(w, grid.grid_w());
    Image out(w, h, img.channels());

#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        std::vector<double> kbuf(grid.kernel_size() * static_cast<std::size_t>(kc_count));
        std::vector<int> sx(static_cast<std::size_t>(w + 2 * r));
        for (int i = 0; i < w + 2 * r; ++i) sx[i] = clamp_index(i - r, w);
        for (int x = 0; x < w; ++x) {
            for (int kc = 0; kc < kc_count; ++kc)
                interpolate_kernel(grid, wy[y], wx[x], kc, kbuf.data() + kc * grid.kernel_size());
            for (int c = 0; c < img.channels(); ++c) {
                const double* kern = kbuf.data() + (kc_count == 1 ? 0 : c) * grid.kernel_size();
                auto plane = img.plane(c);
                double acc = 0.0;
                for (int dy = 0; dy < k; ++dy) {
                    const float* row = plane.data() + static_cast<std::size_t>(clamp_index(y - dy + r, h)) * w;
                    const double* krow = kern + dy * k;
                    // source column x - dx + r is sx[x - dx + 2r]
                    for (int dx = 0; dx < k; ++dx) acc += krow[dx] * row[sx[x - dx + 2 * r]];
                }
                out.at(c, y, x) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

template <class Tag>
Image sv_convolve_tiled(const Image& img, const BasicKernelGrid<Tag>& grid) {
    const int w = img.width();
    const int h = img.height();
    const int k = grid.kernel_k();
    const int r = grid.radius();
    const int channels = img.channels();
    const int kc_count = grid.channels();
    // Circular convolution over the replicate-padded image is alias-free for every
    // output pixel, so the transform needs no extra zero padding.
    const int hp = h + 2 * r;
    const int wp = w + 2 * r;
    const RealFft2d fft(hp, wp);
    const std::size_t nspec = fft.spectrum_size();
    const double norm = 1.0 / static_cast<double>(fft.real_size());

    std::vector<FftwArray<fftw_complex>> image_spec;
    {
        auto pad = fftw_array<double>(fft.real_size());
        for (int c = 0; c < channels; ++c) {
            auto plane = img.plane(c);
            for (int y = 0; y < hp; ++y)
                for (int x = 0; x < wp; ++x)
                    pad[static_cast<std::size_t>(y) * wp + x] =
                        plane[static_cast<std::size_t>(clamp_index(y - r, h)) * w + clamp_index(x - r, w)];
            image_spec.push_back(fftw_array<fftw_complex>(nspec));
            fft.forward(pad.get(), image_spec.back().get());
        }
    }

    const auto wy = axis_weights(h, grid.grid_h());
    const auto wx = axis_weights(w, grid.grid_w());

    struct Support {
        int y0 = 0, y1 = -1, x0 = 0, x1 = -1;
    };
    const int anchors = grid.anchor_count();
    std::vector<Support> support(static_cast<std::size_t>(anchors));
    for (int gy = 0; gy < grid.grid_h(); ++gy) {
        for (int gx = 0; gx < grid.grid_w(); ++gx) {
            Support s;
            s.y0 = h;
            s.x0 = w;
            for (int y = 0; y < h; ++y)
                if (anchor_weight(wy[y], gy) > 0.0) s.y0 = std::min(s.y0, y), s.y1 = std::max(s.y1, y);
            for (int x = 0; x < w; ++x)
                if (anchor_weight(wx[x], gx) > 0.0) s.x0 = std::min(s.x0, x), s.x1 = std::max(s.x1, x);
            support[gy * grid.grid_w() + gx] = s;
        }
    }

    // Per-anchor convolution outputs restricted to the anchor's support.
    std::vector<std::vector<double>> partial(static_cast<std::size_t>(anchors));

#pragma omp parallel for schedule(dynamic)
    for (int a = 0; a < anchors; ++a) {
        const int gy = a / grid.grid_w();
        const int gx = a % grid.grid_w();
        const Support& s = support[a];
        if (s.y1 < s.y0 || s.x1 < s.x0) continue;
        const int sh = s.y1 - s.y0 + 1;
        const int sw = s.x1 - s.x0 + 1;
        auto real = fftw_array<double>(fft.real_size());
        auto kspec = fftw_array<fftw_complex>(nspec);
        auto prod = fftw_array<fftw_complex>(nspec);
        std::vector<double> result(static_cast<std::size_t>(channels) * sh * sw);
        for (int kc = 0; kc < kc_count; ++kc) {
            std::fill(real.get(), real.get() + fft.real_size(), 0.0);
            auto kern = grid.kernel(gy, gx, kc);
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) real[static_cast<std::size_t>(ky) * wp + kx] = kern[ky * k + kx];
            fft.forward(real.get(), kspec.get());
            for (int c = 0; c < channels; ++c) {
                if (kc_count != 1 && c != kc) continue;
                const fftw_complex* is = image_spec[c].get();
                for (std::size_t i = 0; i < nspec; ++i) {
                    prod[i][0] = is[i][0] * kspec[i][0] - is[i][1] * kspec[i][1];
                    prod[i][1] = is[i][0] * kspec[i][1] + is[i][1] * kspec[i][0];
                }
                fft.inverse(prod.get(), real.get());
                double* dst = result.data() + static_cast<std::size_t>(c) * sh * sw;
                for (int y = 0; y < sh; ++y)
                    for (int x = 0; x < sw; ++x)
                        dst[y * sw + x] = real[static_cast<std::size_t>(s.y0 + y + 2 * r) * wp + (s.x0 + x + 2 * r)] * norm;
            }
        }
        partial[a] = std::move(result);
    }

    // Blend in fixed anchor order so the result does not depend on thread scheduling.
    std::vector<double> acc(img.size(), 0.0);
    for (int a = 0; a < anchors; ++a) {
        const int gy = a / grid.grid_w();
        const int gx = a % grid.grid_w();
        const Support& s = support[a];
        if (partial[a].empty()) continue;
        const int sh = s.y1 - s.y0 + 1;
        const int sw = s.x1 - s.x0 + 1;
        for (int c = 0; c < channels; ++c) {
            const double* src = partial[a].data() + static_cast<std::size_t>(c) * sh * sw;
            double* dst = acc.data() + static_cast<std::size_t>(c) * img.plane_size();
            for (int y = 0; y < sh; ++y) {
                const double wgy = anchor_weight(wy[s.y0 + y], gy);
                for (int x = 0; x < sw; ++x) {
                    const double wgt = wgy * anchor_weight(wx[s.x0 + x], gx);
                    dst[static_cast<std::size_t>(s.y0 + y) * w + (s.x0 + x)] += wgt * src[y * sw + x];
                }
            }
        }
    }
    std::vector<float> samples(acc.size());
    std::transform(acc.begin(), acc.end(), samples.begin(), [](double v) { return static_cast<float>(v); });
    return Image(w, h, channels, std::move(samples));
}

}  // namespace detail

/// Spatially varying convolution.
///
/// out(y,x) = sum_{dy,dx} k_{y,x}[dy,dx] * img[y - dy + r, x - dx + r], where k_{y,x} is the
/// bilinear blend of the (up to four) anchor kernels around (y,x), anchors clamped at the
/// borders, and samples outside the image replicate the nearest edge pixel. A 1-channel
/// grid shares its kernels across all image channels.
template <class Tag>
Image sv_convolve(const Image& img, const BasicKernelGrid<Tag>& grid, Engine engine = Engine::direct,
                  Boundary boundary = Boundary::replicate) {
    (void)boundary;
    detail::check_compatible(img, grid);
    return engine == Engine::direct ? detail::sv_convolve_direct(img, grid) : detail::sv_convolve_tiled(img, grid);
}

/// Exact transpose of sv_convolve as a linear map, including the edge replication.
template <class Tag>
Image sv_adjoint(const Image& img, const BasicKernelGrid<Tag>& grid, Boundary boundary = Boundary::replicate) {
    (void)boundary;
    detail::check_compatible(img, grid);
    const int w = img.width();
    const int h = img.height();
    const int k = grid.kernel_k();
    const int r = grid.radius();
    const int kc_count = grid.channels();
    const auto wy = detail::axis_weights(h, grid.grid_h());
    const auto wx = detail::axis_weights(w, grid.grid_w());

    std::vector<double> acc(img.size(), 0.0);
    std::vector<double> kbuf(grid.kernel_size() * static_cast<std::size_t>(kc_count));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int kc = 0; kc < kc_count; ++kc)
                detail::interpolate_kernel(grid, wy[y], wx[x], kc, kbuf.data() + kc * grid.kernel_size());
            for (int c = 0; c < img.channels(); ++c) {
                const double* kern = kbuf.data() + (kc_count == 1 ? 0 : c) * grid.kernel_size();
                const double v = img.at(c, y, x);
                double* plane = acc.data() + static_cast<std::size_t>(c) * img.plane_size();
                for (int dy = 0; dy < k; ++dy) {
                    double* row = plane + static_cast<std::size_t>(detail::clamp_index(y - dy + r, h)) * w;
                    for (int dx = 0; dx < k; ++dx) row[detail::clamp_index(x - dx + r, w)] += kern[dy * k + dx] * v;
                }
            }
        }
    }
    std::vector<float> samples(acc.size());
    std::transform(acc.begin(), acc.end(), samples.begin(), [](double v) { return static_cast<float>(v); });
    return Image(w, h, img.channels(), std::move(samples));
}

}  // namespace metalens
