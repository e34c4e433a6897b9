#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "metalens/error.hpp"

namespace metalens {

struct psf_tag {};
struct kernel_field_tag {};

/// Tolerance of the in-memory energy-conservation invariant.
inline constexpr double kPsfSumTolerance = 1e-6;
/// Deviation accepted from calibration files before renormalization is mandatory.
inline constexpr double kPsfLoadTolerance = 1e-3;

/// Dimensions shared by PSF grids and kernel fields.
struct GridLayout {
    int grid_h = 1;
    int grid_w = 1;
    int kernel_k = 1;
    int channels = 1;
    int image_w = 1;
    int image_h = 1;

    friend bool operator==(const GridLayout&, const GridLayout&) = default;
};

/// Grid of anchor kernels describing a spatially varying convolution.
///
/// Kernels are stored [gy][gx][c][ky][kx]. Anchor (gy, gx) sits at the
/// center of its cell of a uniform grid laid over an image_w x image_h plane.
/// `Tag` distinguishes calibrated PSFs (non-negative, unit sum) from
/// predicted deconvolution kernels (unconstrained).
template <class Tag>
class BasicKernelGrid {
public:
    using Layout = GridLayout;

    BasicKernelGrid() = default;

    BasicKernelGrid(Layout layout, std::vector<float> kernels)
        : layout_(layout), kernels_(std::move(kernels)) {
        validate_layout();
        require(kernels_.size() == expected_size(), ErrorKind::size,
                "kernel data length does not match grid layout");
        validate_values();
    }

    /// Zero-filled grid; callers fill it through kernel() and then call validate().
    explicit BasicKernelGrid(Layout layout) : layout_(layout) {
        validate_layout();
        kernels_.assign(expected_size(), 0.0f);
    }

    const Layout& layout() const noexcept { return layout_; }
    int grid_h() const noexcept { return layout_.grid_h; }
    int grid_w() const noexcept { return layout_.grid_w; }
    int kernel_k() const noexcept { return layout_.kernel_k; }
    int radius() const noexcept { return (layout_.kernel_k - 1) / 2; }
    int channels() const noexcept { return layout_.channels; }
    int image_w() const noexcept { return layout_.image_w; }
    int image_h() const noexcept { return layout_.image_h; }
    std::size_t kernel_size() const noexcept {
        return static_cast<std::size_t>(layout_.kernel_k) * static_cast<std::size_t>(layout_.kernel_k);
    }
    int anchor_count() const noexcept { return layout_.grid_h * layout_.grid_w; }

    std::span<const float> kernel(int gy, int gx, int c) const noexcept {
        return {kernels_.data() + offset(gy, gx, c), kernel_size()};
    }
    std::span<float> kernel(int gy, int gx, int c) noexcept {
        return {kernels_.data() + offset(gy, gx, c), kernel_size()};
    }

    std::span<const float> data() const noexcept { return kernels_; }
    std::span<float> data() noexcept { return kernels_; }

    /// Image-plane position (y, x) of anchor (gy, gx).
    double anchor_y(int gy) const noexcept {
        return (gy + 0.5) * layout_.image_h / layout_.grid_h - 0.5;
    }
    double anchor_x(int gx) const noexcept {
        return (gx + 0.5) * layout_.image_w / layout_.grid_w - 0.5;
    }

    void validate() const {
        validate_layout();
        validate_values();
    }

    /// Rescales every kernel to unit sum. Only meaningful for PSFs.
    void renormalize() {
        for (int gy = 0; gy < grid_h(); ++gy)
            for (int gx = 0; gx < grid_w(); ++gx)
                for (int c = 0; c < channels(); ++c) {
                    auto k = kernel(gy, gx, c);
                    double sum = 0.0;
                    for (float v : k) sum += v;
                    require(sum > 0.0, ErrorKind::calibration, "cannot renormalize a zero-sum kernel");
                    for (float& v : k) v = static_cast<float>(v / sum);
                }
    }

    /// Largest |sum - 1| over all kernels.
    double max_sum_deviation() const {
        double worst = 0.0;
        for (int gy = 0; gy < grid_h(); ++gy)
            for (int gx = 0; gx < grid_w(); ++gx)
                for (int c = 0; c < channels(); ++c) {
                    double sum = 0.0;
                    for (float v : kernel(gy, gx, c)) sum += v;
                    worst = std::max(worst, std::abs(sum - 1.0));
                }
        return worst;
    }

    friend bool operator==(const BasicKernelGrid& a, const BasicKernelGrid& b) {
        return a.layout_ == b.layout_ && a.kernels_ == b.kernels_;
    }

private:
    static constexpr bool is_psf = std::is_same_v<Tag, psf_tag>;

    std::size_t expected_size() const noexcept {
        return static_cast<std::size_t>(anchor_count()) * static_cast<std::size_t>(layout_.channels) *
               kernel_size();
    }
    std::size_t offset(int gy, int gx, int c) const noexcept {
        return ((static_cast<std::size_t>(gy) * static_cast<std::size_t>(layout_.grid_w) +
                 static_cast<std::size_t>(gx)) *
                    static_cast<std::size_t>(layout_.channels) +
                static_cast<std::size_t>(c)) *
               kernel_size();
    }

    void validate_layout() const {
        require(layout_.grid_h >= 1 && layout_.grid_w >= 1, ErrorKind::format,
                "grid needs at least one anchor per axis");
        require(layout_.kernel_k >= 1, ErrorKind::format, "kernel size must be positive");
        require(layout_.kernel_k % 2 == 1, ErrorKind::format,
                "kernel size must be odd, got " + std::to_string(layout_.kernel_k));
        require(layout_.channels == 1 || layout_.channels == 3, ErrorKind::format,
                "kernel grids carry 1 or 3 channels");
        require(layout_.image_w > 0 && layout_.image_h > 0, ErrorKind::format,
                "calibrated image dimensions must be positive");
        require(layout_.kernel_k <= 1025 && layout_.grid_h <= 4096 && layout_.grid_w <= 4096,
                ErrorKind::size, "kernel grid dimensions overflow");
    }

    void validate_values() const {
        for (float v : kernels_) require(std::isfinite(v), ErrorKind::numeric, "kernel entry is not finite");
        if constexpr (is_psf) {
            for (float v : kernels_)
                require(v >= 0.0f, ErrorKind::calibration, "PSF entry is negative");
            double dev = max_sum_deviation();
            require(dev <= kPsfSumTolerance, ErrorKind::calibration,
                    "PSF kernel sum deviates from 1 by " + std::to_string(dev));
        }
    }

    Layout layout_{};
    std::vector<float> kernels_;
};

using PsfGrid = BasicKernelGrid<psf_tag>;
using KernelField = BasicKernelGrid<kernel_field_tag>;

}  // namespace metalens
