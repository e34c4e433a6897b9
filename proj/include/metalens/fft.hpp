#pragma once

#include <fftw3.h>

#include <cstddef>
#include <memory>
#include <mutex>
#include <new>

#include "metalens/error.hpp"

namespace metalens::detail {

// FFTW's planner is not reentrant; execution of an existing plan is.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

template <class T>
using FftwArray = std::unique_ptr<T[], FftwFree>;

template <class T>
FftwArray<T> fftw_array(std::size_t n) {
    void* p = fftw_malloc(sizeof(T) * (n == 0 ? 1 : n));
    if (p == nullptr) throw std::bad_alloc();
    return FftwArray<T>(static_cast<T*>(p));
}

/// Out-of-place 2D real<->half-complex transform pair of a fixed size.
///
/// All buffers passed to forward()/inverse() must come from fftw_array() so that
/// they share the alignment the plans were created with. The inverse is
/// unnormalized and overwrites its input.
class RealFft2d {
public:
    RealFft2d(int rows, int cols) : rows_(rows), cols_(cols) {
        require(rows > 0 && cols > 0, ErrorKind::size, "FFT dimensions must be positive");
        auto real = fftw_array<double>(real_size());
        auto spec = fftw_array<fftw_complex>(spectrum_size());
        std::lock_guard lock(fftw_planner_mutex());
        forward_ = fftw_plan_dft_r2c_2d(rows_, cols_, real.get(), spec.get(), FFTW_ESTIMATE);
        inverse_ = fftw_plan_dft_c2r_2d(rows_, cols_, spec.get(), real.get(), FFTW_ESTIMATE);
        require(forward_ != nullptr && inverse_ != nullptr, ErrorKind::numeric, "FFTW planning failed");
    }

    RealFft2d(const RealFft2d&) = delete;
    RealFft2d& operator=(const RealFft2d&) = delete;

    ~RealFft2d() {
        std::lock_guard lock(fftw_planner_mutex());
        if (forward_) fftw_destroy_plan(forward_);
        if (inverse_) fftw_destroy_plan(inverse_);
    }

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    int spectrum_cols() const noexcept { return cols_ / 2 + 1; }
    std::size_t real_size() const noexcept { return static_cast<std::size_t>(rows_) * cols_; }
    std::size_t spectrum_size() const noexcept { return static_cast<std::size_t>(rows_) * spectrum_cols(); }

    void forward(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(forward_, in, out); }
    void inverse(fftw_complex* in, double* out) const { fftw_execute_dft_c2r(inverse_, in, out); }

private:
    int rows_;
    int cols_;
    fftw_plan forward_ = nullptr;
    fftw_plan inverse_ = nullptr;
};

}  // namespace metalens::detail
