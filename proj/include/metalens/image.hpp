#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "metalens/error.hpp"

namespace metalens {

/// Planar multi-channel raster of linear intensities.
///
/// Samples are stored channel-major, row-major within a plane, as 32-bit
/// floats (the same layout as the IMGF file format). Arithmetic in the
/// library accumulates in double and rounds once on store.
class Image {
public:
    Image() = default;

    Image(int width, int height, int channels, float fill = 0.0f)
        : width_(width), height_(height), channels_(channels) {
        check_dims();
        samples_.assign(expected_size(), fill);
    }

    Image(int width, int height, int channels, std::vector<float> samples)
        : width_(width), height_(height), channels_(channels), samples_(std::move(samples)) {
        check_dims();
        require(samples_.size() == expected_size(), ErrorKind::size,
                "sample count " + std::to_string(samples_.size()) + " does not match " +
                    std::to_string(width_) + "x" + std::to_string(height_) + "x" +
                    std::to_string(channels_));
        check_finite();
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    bool empty() const noexcept { return samples_.empty(); }
    std::size_t plane_size() const noexcept {
        return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
    }
    std::size_t size() const noexcept { return samples_.size(); }

    float& at(int c, int y, int x) noexcept { return samples_[index(c, y, x)]; }
    float at(int c, int y, int x) const noexcept { return samples_[index(c, y, x)]; }

    std::span<float> plane(int c) noexcept {
        return {samples_.data() + static_cast<std::size_t>(c) * plane_size(), plane_size()};
    }
    std::span<const float> plane(int c) const noexcept {
        return {samples_.data() + static_cast<std::size_t>(c) * plane_size(), plane_size()};
    }

    std::span<float> samples() noexcept { return samples_; }
    std::span<const float> samples() const noexcept { return samples_; }

    bool same_dims(const Image& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }
    bool same_shape(const Image& other) const noexcept {
        return same_dims(other) && channels_ == other.channels_;
    }

    void check_finite() const {
        for (float v : samples_) {
            require(std::isfinite(v), ErrorKind::numeric, "image contains a non-finite sample");
        }
    }

    friend bool operator==(const Image& a, const Image& b) {
        return a.same_shape(b) && a.samples_ == b.samples_;
    }

private:
    std::size_t expected_size() const noexcept {
        return plane_size() * static_cast<std::size_t>(channels_);
    }
    std::size_t index(int c, int y, int x) const noexcept {
        return (static_cast<std::size_t>(c) * static_cast<std::size_t>(height_) +
                static_cast<std::size_t>(y)) *
                   static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }
    void check_dims() const {
        require(width_ > 0 && height_ > 0, ErrorKind::size, "image dimensions must be positive");
        require(channels_ >= 1, ErrorKind::size, "image needs at least one channel");
        constexpr std::size_t max_samples = std::size_t{1} << 34;
        require(static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_) *
                        static_cast<std::size_t>(channels_) <=
                    max_samples,
                ErrorKind::size, "image dimensions overflow");
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<float> samples_;
};

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
    require(a.same_shape(b), ErrorKind::shape,
            std::string(what) + ": shapes differ (" + std::to_string(a.width()) + "x" +
                std::to_string(a.height()) + "x" + std::to_string(a.channels()) + " vs " +
                std::to_string(b.width()) + "x" + std::to_string(b.height()) + "x" +
                std::to_string(b.channels()) + ")");
}

/// Copies a single channel out as a 1-channel image.
inline Image extract_channel(const Image& img, int c) {
    require(c >= 0 && c < img.channels(), ErrorKind::shape, "channel index out of range");
    auto src = img.plane(c);
    return Image(img.width(), img.height(), 1, std::vector<float>(src.begin(), src.end()));
}

/// Channels [first, first + count) as a new image.
inline Image slice_channels(const Image& img, int first, int count) {
    require(first >= 0 && count >= 1 && first + count <= img.channels(), ErrorKind::shape,
            "channel slice out of range");
    auto all = img.samples();
    auto begin = all.begin() + static_cast<std::ptrdiff_t>(first * img.plane_size());
    auto end = begin + static_cast<std::ptrdiff_t>(count * img.plane_size());
    return Image(img.width(), img.height(), count, std::vector<float>(begin, end));
}

}  // namespace metalens
