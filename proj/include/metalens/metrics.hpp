#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "metalens/error.hpp"
#include "metalens/image.hpp"
#include "metalens/measurement.hpp"

namespace metalens {

/// Mean over all elements of the squared difference.
inline double mse(const Image& a, const Image& b) {
    require_same_shape(a, b, "mse");
    double sum = 0.0;
    auto sa = a.samples();
    auto sb = b.samples();
    for (std::size_t i = 0; i < sa.size(); ++i) {
        const double d = static_cast<double>(sa[i]) - sb[i];
        sum += d * d;
    }
    return sum / static_cast<double>(sa.size());
}

inline constexpr double kPsnrCapDb = 99.0;

/// 10 log10(peak^2 / mse), capped at 99 dB.
inline double psnr(const Image& a, const Image& b, double peak = 1.0) {
    const double m = mse(a, b);
    if (m < peak * peak * std::pow(10.0, -kPsnrCapDb / 10.0)) return kPsnrCapDb;
    return 10.0 * std::log10(peak * peak / m);
}

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), k1 = 0.01, k2 = 0.03, peak 1,
/// averaged over window positions fully inside the image. 3-channel inputs are averaged first.
inline double ssim(const Image& a_in, const Image& b_in) {
    require_same_shape(a_in, b_in, "ssim");
    const Image a = a_in.channels() == 3 ? color_average(a_in) : a_in;
    const Image b = b_in.channels() == 3 ? color_average(b_in) : b_in;
    require(a.channels() == 1, ErrorKind::shape, "ssim expects 1- or 3-channel images");
    constexpr int win = 11;
    constexpr int r = win / 2;
    require(a.width() >= win && a.height() >= win, ErrorKind::size, "image smaller than the 11x11 SSIM window");

    double g[win];
    double gsum = 0.0;
    for (int i = 0; i < win; ++i) gsum += g[i] = std::exp(-0.5 * (i - r) * (i - r) / (1.5 * 1.5));
    for (double& v : g) v /= gsum;

    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    const int w = a.width();
    const int h = a.height();
    const int ow = w - win + 1;
    const int oh = h - win + 1;
    // Horizontal pass of the five moments, then vertical pass at valid positions.
    std::vector<double> hx[5];
    for (auto& v : hx) v.assign(static_cast<std::size_t>(h) * ow, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double m[5] = {0, 0, 0, 0, 0};
            for (int i = 0; i < win; ++i) {
                const double va = a.at(0, y, x + i);
                const double vb = b.at(0, y, x + i);
                m[0] += g[i] * va;
                m[1] += g[i] * vb;
                m[2] += g[i] * va * va;
                m[3] += g[i] * vb * vb;
                m[4] += g[i] * va * vb;
            }
            for (int k = 0; k < 5; ++k) hx[k][static_cast<std::size_t>(y) * ow + x] = m[k];
        }
    double total = 0.0;
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double m[5] = {0, 0, 0, 0, 0};
            for (int i = 0; i < win; ++i)
                for (int k = 0; k < 5; ++k) m[k] += g[i] * hx[k][static_cast<std::size_t>(y + i) * ow + x];
            const double va = m[2] - m[0] * m[0];
            const double vb = m[3] - m[1] * m[1];
            const double cov = m[4] - m[0] * m[1];
            total += ((2 * m[0] * m[1] + c1) * (2 * cov + c2)) /
                     ((m[0] * m[0] + m[1] * m[1] + c1) * (va + vb + c2));
        }
    return total / (static_cast<double>(ow) * oh);
}

struct MetricRow {
    std::string name;
    double psnr_db = 0.0;
    double ssim = 0.0;
    double mse = 0.0;
};

inline MetricRow evaluate_pair(const std::string& name, const Image& restored, const Image& gt) {
    return {name, psnr(restored, gt), ssim(restored, gt), mse(restored, gt)};
}

/// CSV text with header `name,psnr_db,ssim,mse`, six decimals, LF line endings.
inline std::string format_report(const std::vector<MetricRow>& rows) {
    std::string out = "name,psnr_db,ssim,mse\n";
    char buf[128];
    for (const auto& r : rows) {
        require(r.name.find_first_of(",\n\r\"") == std::string::npos, ErrorKind::parameter,
                "report row names cannot contain commas, quotes or newlines");
        std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f\n", r.psnr_db, r.ssim, r.mse);
        out += r.name;
        out += buf;
    }
    return out;
}

inline void report(const std::vector<MetricRow>& rows, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorKind::io, "cannot open " + path.string() + " for writing");
    const std::string text = format_report(rows);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    require(static_cast<bool>(f), ErrorKind::io, "write failed for " + path.string());
}

inline std::vector<MetricRow> read_report(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorKind::io, "cannot open " + path.string());
    std::string line;
    require(static_cast<bool>(std::getline(f, line)) && line == "name,psnr_db,ssim,mse", ErrorKind::format,
            path.string() + ": missing report header");
    std::vector<MetricRow> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        MetricRow r;
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        require(fields.size() == 4, ErrorKind::format, path.string() + ": malformed row '" + line + "'");
        try {
            r = {fields[0], std::stod(fields[1]), std::stod(fields[2]), std::stod(fields[3])};
        } catch (const std::exception&) {
            fail(ErrorKind::format, path.string() + ": non-numeric field in '" + line + "'");
        }
        rows.push_back(r);
    }
    return rows;
}

}  // namespace metalens
