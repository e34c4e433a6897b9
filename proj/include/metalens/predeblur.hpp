#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "metalens/error.hpp"
#include "metalens/fft.hpp"
#include "metalens/image.hpp"
#include "metalens/kernel_grid.hpp"
#include "metalens/measurement.hpp"
#include "metalens/metrics.hpp"
#include "metalens/sv_convolve.hpp"

namespace metalens {

struct PredeblurParams {
    double noise_sigma = 0.0;
    int k_out = 0;  // 0 picks 2 * kernel_k + 1
    double lambda_scale = 1.0;
};

inline constexpr double kLambdaFloor = 1e-6;

/// Raised-cosine taper over the kernel offset o in [-R, R]; reaches zero at |o| = k_out.
inline double inverse_kernel_window(int offset, int k_out) {
    return 0.5 * (1.0 + std::cos(std::numbers::pi * offset / static_cast<double>(k_out)));
}

/// FFT size used for inverse-kernel prediction: next power of two >= max(4 kernel_k, k_out).
inline int inverse_fft_size(int kernel_k, int k_out) {
    int p = 1;
    while (p < 4 * kernel_k || p < k_out) p *= 2;
    return p;
}

/// Per-anchor regularized inverse filters:
/// k = window * crop_center(IFFT(conj(H) / (|H|^2 + lambda)), k_out),
/// lambda = lambda_scale * max(noise_sigma^2, 1e-6), H the FFT of the PSF centered at the origin.
inline KernelField predict_kernels(const PsfGrid& grid, double noise_sigma, int k_out, double lambda_scale) {
    require(k_out >= 1 && k_out % 2 == 1, ErrorKind::parameter, "k_out must be odd and positive");
    require(noise_sigma >= 0.0, ErrorKind::parameter, "noise sigma must be non-negative");
    require(lambda_scale > 0.0, ErrorKind::parameter, "lambda_scale must be positive");
    const double lambda = lambda_scale * std::max(noise_sigma * noise_sigma, kLambdaFloor);
    const int k = grid.kernel_k();
    const int r = grid.radius();
    const int ro = (k_out - 1) / 2;
    const int p = inverse_fft_size(k, k_out);
    const detail::RealFft2d fft(p, p);
    const double norm = 1.0 / static_cast<double>(fft.real_size());

    GridLayout layout = grid.layout();
    layout.kernel_k = k_out;
    KernelField field(layout);
    std::vector<double> window(static_cast<std::size_t>(k_out));
    for (int o = -ro; o <= ro; ++o) window[o + ro] = inverse_kernel_window(o, k_out);

    const int jobs = grid.anchor_count() * grid.channels();
#pragma omp parallel for schedule(dynamic)
    for (int job = 0; job < jobs; ++job) {
        const int anchor = job / grid.channels();
        const int c = job % grid.channels();
        const int gy = anchor / grid.grid_w();
        const int gx = anchor % grid.grid_w();
        auto real = detail::fftw_array<double>(fft.real_size());
        auto spec = detail::fftw_array<fftw_complex>(fft.spectrum_size());
        std::fill(real.get(), real.get() + fft.real_size(), 0.0);
        auto psf = grid.kernel(gy, gx, c);
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const int y = ((ky - r) % p + p) % p;
                const int x = ((kx - r) % p + p) % p;
                real[static_cast<std::size_t>(y) * p + x] = psf[ky * k + kx];
            }
        fft.forward(real.get(), spec.get());
        for (std::size_t i = 0; i < fft.spectrum_size(); ++i) {
            const double re = spec[i][0];
            const double im = spec[i][1];
            const double den = re * re + im * im + lambda;
            spec[i][0] = re / den * norm;
            spec[i][1] = -im / den * norm;
        }
        fft.inverse(spec.get(), real.get());
        auto out = field.kernel(gy, gx, c);
        for (int oy = -ro; oy <= ro; ++oy)
            for (int ox = -ro; ox <= ro; ++ox) {
                const double v = real[static_cast<std::size_t>((oy + p) % p) * p + (ox + p) % p];
                out[(oy + ro) * k_out + (ox + ro)] = static_cast<float>(v * window[oy + ro] * window[ox + ro]);
            }
    }
    return field;
}

inline KernelField predict_kernels(const PsfGrid& grid, const PredeblurParams& params) {
    const int k_out = params.k_out > 0 ? params.k_out : 2 * grid.kernel_k() + 1;
    return predict_kernels(grid, params.noise_sigma, k_out, params.lambda_scale);
}

/// Same operator as sv_convolve, applied with predicted kernels.
inline Image apply_kernel_field(const Image& img, const KernelField& field, Engine engine = Engine::direct,
                                Boundary boundary = Boundary::replicate) {
    return sv_convolve(img, field, engine, boundary);
}

/// Coarse non-blind deblur; no clamping.
inline Image predeblur_image(const Image& y, const PsfGrid& grid, const PredeblurParams& params,
                             Engine engine = Engine::direct) {
    require(y.width() == grid.image_w() && y.height() == grid.image_h(), ErrorKind::shape,
            "measurement does not match the PSF grid dimensions");
    return apply_kernel_field(y, predict_kernels(grid, params), engine);
}

/// MSE(tilde_y_c, x) + MSE(tilde_y_s, S x).
inline double dkpn_loss(const Image& tilde_y_c, const Image& tilde_y_s, const Image& x) {
    require(tilde_y_c.channels() == 3 && x.channels() == 3 && tilde_y_s.channels() == 1, ErrorKind::shape,
            "dkpn_loss expects 3-channel color estimate and truth and a 1-channel structure estimate");
    require(tilde_y_s.same_dims(x), ErrorKind::shape, "structure estimate and truth differ in size");
    return mse(tilde_y_c, x) + mse(tilde_y_s, color_average(x));
}

/// Channel concatenation, `deblurred` channels first.
inline Image concat_condition(const Image& deblurred, const Image& original) {
    require(deblurred.same_dims(original), ErrorKind::shape, "concat_condition inputs differ in size");
    std::vector<float> samples;
    samples.reserve(deblurred.size() + original.size());
    samples.insert(samples.end(), deblurred.samples().begin(), deblurred.samples().end());
    samples.insert(samples.end(), original.samples().begin(), original.samples().end());
    return Image(deblurred.width(), deblurred.height(), deblurred.channels() + original.channels(),
                 std::move(samples));
}

}  // namespace metalens
