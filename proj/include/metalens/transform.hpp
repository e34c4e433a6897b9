#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <utility>

#include "metalens/error.hpp"

namespace metalens {

/// 3x3 projective matrix acting on homogeneous pixel coordinates (x, y, 1).
class Transform2D {
public:
    using Matrix = std::array<double, 9>;

    Transform2D() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}

    /// Normalizes so that m[2][2] = 1 and rejects singular matrices.
    explicit Transform2D(const Matrix& m) : m_(m) {
        require(std::abs(m_[8]) > 1e-12, ErrorKind::transform, "m[2][2] is zero");
        if (m_[8] != 1.0) {
            const double s = m_[8];
            for (double& v : m_) v /= s;
        }
        require(std::abs(det()) > 1e-12, ErrorKind::transform, "transform is singular");
    }

    static Transform2D identity() { return {}; }

    static Transform2D translation(double dx, double dy) {
        return Transform2D(Matrix{1, 0, dx, 0, 1, dy, 0, 0, 1});
    }

    /// Rotation by `degrees` and isotropic `scale` about (cx, cy).
    static Transform2D similarity(double degrees, double scale, double cx, double cy) {
        const double a = degrees * std::numbers::pi / 180.0;
        const double c = scale * std::cos(a);
        const double s = scale * std::sin(a);
        return Transform2D(Matrix{c, -s, cx - c * cx + s * cy, s, c, cy - s * cx - c * cy, 0, 0, 1});
    }

    double operator()(int row, int col) const noexcept { return m_[row * 3 + col]; }
    const Matrix& matrix() const noexcept { return m_; }

    double det() const noexcept {
        return m_[0] * (m_[4] * m_[8] - m_[5] * m_[7]) - m_[1] * (m_[3] * m_[8] - m_[5] * m_[6]) +
               m_[2] * (m_[3] * m_[7] - m_[4] * m_[6]);
    }

    Transform2D inverse() const {
        const double d = det();
        require(std::abs(d) > 1e-12, ErrorKind::transform, "transform is singular");
        Matrix r{
            (m_[4] * m_[8] - m_[5] * m_[7]), -(m_[1] * m_[8] - m_[2] * m_[7]), (m_[1] * m_[5] - m_[2] * m_[4]),
            -(m_[3] * m_[8] - m_[5] * m_[6]), (m_[0] * m_[8] - m_[2] * m_[6]), -(m_[0] * m_[5] - m_[2] * m_[3]),
            (m_[3] * m_[7] - m_[4] * m_[6]), -(m_[0] * m_[7] - m_[1] * m_[6]), (m_[0] * m_[4] - m_[1] * m_[3]),
        };
        for (double& v : r) v /= d;
        return Transform2D(r);
    }

    /// Maps (x, y); the second member is false when the point lands at or behind infinity.
    std::pair<std::array<double, 2>, bool> apply(double x, double y) const noexcept {
        const double w = m_[6] * x + m_[7] * y + m_[8];
        const double px = m_[0] * x + m_[1] * y + m_[2];
        const double py = m_[3] * x + m_[4] * y + m_[5];
        if (!(w > 1e-12)) return {{px, py}, false};
        return {{px / w, py / w}, true};
    }

    friend Transform2D operator*(const Transform2D& a, const Transform2D& b) {
        Matrix r{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += a.m_[i * 3 + k] * b.m_[k * 3 + j];
                r[i * 3 + j] = s;
            }
        return Transform2D(r);
    }

    /// ||a - b||_F over all nine entries.
    friend double frobenius_distance(const Transform2D& a, const Transform2D& b) {
        double s = 0.0;
        for (int i = 0; i < 9; ++i) s += (a.m_[i] - b.m_[i]) * (a.m_[i] - b.m_[i]);
        return std::sqrt(s);
    }

private:
    Matrix m_;
};

}  // namespace metalens
