#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "metalens/error.hpp"
#include "metalens/image.hpp"
#include "metalens/kernel_grid.hpp"

namespace metalens {

enum class Colorspace { linear, srgb };

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorKind::io, "write failed for " + path.string());
}

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

inline void put_f32(std::vector<unsigned char>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

/// Little-endian cursor over a byte buffer; running off the end is a format error.
class ByteReader {
public:
    ByteReader(const std::vector<unsigned char>& bytes, std::string name)
        : bytes_(bytes), name_(std::move(name)) {}

    void expect_magic(std::string_view magic) {
        need(magic.size());
        require(std::equal(magic.begin(), magic.end(), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_)),
                ErrorKind::format, name_ + ": bad magic, expected " + std::string(magic));
        pos_ += magic.size();
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        require(bytes_.size() - pos_ >= n, ErrorKind::format, name_ + ": truncated file");
    }

    const std::vector<unsigned char>& bytes_;
    std::string name_;
    std::size_t pos_ = 0;
};

inline bool has_extension(const std::filesystem::path& path, std::string_view ext) {
    std::string e = path.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return e == ext;
}

inline double srgb_to_linear(double v) {
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

struct PnmHeader {
    char kind = 0;
    int width = 0;
    int height = 0;
    int maxval = 0;
    std::size_t data_offset = 0;
};

inline PnmHeader parse_pnm_header(const std::vector<unsigned char>& bytes, const std::string& name) {
    require(bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6'), ErrorKind::format,
            name + ": not a binary PGM/PPM (P5/P6)");
    PnmHeader h;
    h.kind = static_cast<char>(bytes[1]);
    std::size_t pos = 2;
    auto next_int = [&]() -> long long {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        require(pos < bytes.size() && std::isdigit(bytes[pos]), ErrorKind::format, name + ": malformed header");
        long long v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            require(v <= (1ll << 31), ErrorKind::size, name + ": header value overflows");
            ++pos;
        }
        return v;
    };
    const long long w = next_int();
    const long long hgt = next_int();
    const long long maxval = next_int();
    require(pos < bytes.size() && std::isspace(bytes[pos]), ErrorKind::format, name + ": malformed header");
    ++pos;
    require(w > 0 && hgt > 0, ErrorKind::format, name + ": zero dimension");
    require(w <= (1 << 20) && hgt <= (1 << 20), ErrorKind::size, name + ": dimensions overflow");
    require(maxval == 255 || maxval == 65535, ErrorKind::format, name + ": maxval must be 255 or 65535");
    h.width = static_cast<int>(w);
    h.height = static_cast<int>(hgt);
    h.maxval = static_cast<int>(maxval);
    h.data_offset = pos;
    return h;
}

inline Image load_pnm(const std::vector<unsigned char>& bytes, const std::string& name, Colorspace cs) {
    const PnmHeader h = parse_pnm_header(bytes, name);
    const int channels = h.kind == '6' ? 3 : 1;
    const std::size_t bps = h.maxval == 255 ? 1 : 2;
    const std::size_t pixels = static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height);
    require(bytes.size() - h.data_offset >= pixels * channels * bps, ErrorKind::format, name + ": truncated pixel data");

    Image img(h.width, h.height, channels);
    const unsigned char* p = bytes.data() + h.data_offset;
    for (std::size_t i = 0; i < pixels; ++i) {
        for (int c = 0; c < channels; ++c) {
            unsigned v = bps == 1 ? p[0] : (static_cast<unsigned>(p[0]) << 8) | p[1];
            p += bps;
            double s = static_cast<double>(v) / h.maxval;
            if (cs == Colorspace::srgb) s = srgb_to_linear(s);
            img.samples()[static_cast<std::size_t>(c) * pixels + i] = static_cast<float>(s);
        }
    }
    return img;
}

inline Image load_imgf(const std::vector<unsigned char>& bytes, const std::string& name) {
    ByteReader r(bytes, name);
    r.expect_magic("IMGF");
    const std::uint32_t w = r.u32();
    const std::uint32_t h = r.u32();
    const std::uint32_t c = r.u32();
    require(w > 0 && h > 0 && c > 0, ErrorKind::format, name + ": zero dimension");
    require(w <= (1u << 20) && h <= (1u << 20) && c <= 4096, ErrorKind::size, name + ": dimensions overflow");
    const std::uint64_t n = std::uint64_t{w} * h * c;
    require(r.remaining() >= n * 4, ErrorKind::format, name + ": truncated sample data");
    std::vector<float> samples(static_cast<std::size_t>(n));
    for (auto& v : samples) v = r.f32();
    return Image(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c), std::move(samples));
}

}  // namespace detail

/// Loads PGM/PPM (P5/P6, 8 or 16 bit) or IMGF. PNM samples are scaled to [0,1] and
/// optionally decoded from sRGB; IMGF samples load verbatim.
inline Image load_image(const std::filesystem::path& path, Colorspace colorspace = Colorspace::linear) {
    const auto bytes = detail::read_file(path);
    if (bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, "IMGF")) {
        return detail::load_imgf(bytes, path.string());
    }
    return detail::load_pnm(bytes, path.string(), colorspace);
}

inline std::vector<unsigned char> encode_imgf(const Image& img) {
    std::vector<unsigned char> out;
    out.reserve(16 + img.size() * 4);
    out.insert(out.end(), {'I', 'M', 'G', 'F'});
    detail::put_u32(out, static_cast<std::uint32_t>(img.width()));
    detail::put_u32(out, static_cast<std::uint32_t>(img.height()));
    detail::put_u32(out, static_cast<std::uint32_t>(img.channels()));
    for (float v : img.samples()) detail::put_f32(out, v);
    return out;
}

/// 16-bit binary PNM; samples clamped to [0,1]. Only 1- and 3-channel images have a PNM form.
inline std::vector<unsigned char> encode_pnm16(const Image& img) {
    require(img.channels() == 1 || img.channels() == 3, ErrorKind::shape,
            "PNM output needs 1 or 3 channels, got " + std::to_string(img.channels()));
    const std::string header = std::string(img.channels() == 3 ? "P6" : "P5") + "\n" +
                               std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n65535\n";
    std::vector<unsigned char> out(header.begin(), header.end());
    const std::size_t pixels = img.plane_size();
    out.reserve(out.size() + pixels * img.channels() * 2);
    for (std::size_t i = 0; i < pixels; ++i) {
        for (int c = 0; c < img.channels(); ++c) {
            const double v = std::clamp(static_cast<double>(img.samples()[c * pixels + i]), 0.0, 1.0);
            const auto q = static_cast<unsigned>(std::lround(v * 65535.0));
            out.push_back(static_cast<unsigned char>(q >> 8));
            out.push_back(static_cast<unsigned char>(q & 0xFFu));
        }
    }
    return out;
}

/// IMGF for a `.imgf` extension, 16-bit PNM otherwise.
inline void save_image(const Image& img, const std::filesystem::path& path) {
    detail::write_file(path, detail::has_extension(path, ".imgf") ? encode_imgf(img) : encode_pnm16(img));
}

inline std::vector<unsigned char> encode_psfg(const PsfGrid& grid) {
    std::vector<unsigned char> out;
    out.insert(out.end(), {'P', 'S', 'F', 'G'});
    const auto& l = grid.layout();
    for (int v : {1, l.grid_h, l.grid_w, l.kernel_k, l.channels, l.image_w, l.image_h})
        detail::put_u32(out, static_cast<std::uint32_t>(v));
    for (float v : grid.data()) detail::put_f32(out, v);
    return out;
}

inline void save_psf_grid(const PsfGrid& grid, const std::filesystem::path& path) {
    detail::write_file(path, encode_psfg(grid));
}

inline PsfGrid decode_psfg(const std::vector<unsigned char>& bytes, const std::string& name, bool renormalize) {
    detail::ByteReader r(bytes, name);
    r.expect_magic("PSFG");
    const std::uint32_t version = r.u32();
    require(version == 1, ErrorKind::format, name + ": unsupported PSFG version " + std::to_string(version));
    std::array<std::uint32_t, 6> f{};
    for (auto& v : f) v = r.u32();
    for (auto v : f) require(v <= (1u << 20), ErrorKind::size, name + ": header value overflows");
    PsfGrid::Layout layout{static_cast<int>(f[0]), static_cast<int>(f[1]), static_cast<int>(f[2]),
                           static_cast<int>(f[3]), static_cast<int>(f[4]), static_cast<int>(f[5])};
    require(layout.kernel_k % 2 == 1, ErrorKind::format, name + ": kernel size must be odd");
    // Layout checks run before the payload is sized.
    KernelField probe(layout);
    const std::uint64_t n = probe.data().size();
    require(r.remaining() >= n * 4, ErrorKind::format, name + ": truncated kernel data");
    std::vector<float> kernels(static_cast<std::size_t>(n));
    for (auto& v : kernels) v = r.f32();

    for (float v : kernels) {
        require(std::isfinite(v), ErrorKind::numeric, name + ": kernel entry is not finite");
        require(v >= 0.0f, ErrorKind::calibration, name + ": PSF entry is negative");
    }
    KernelField raw(layout, kernels);
    const double dev = raw.max_sum_deviation();
    require(renormalize || dev <= kPsfLoadTolerance, ErrorKind::calibration,
            name + ": kernel sum deviates from 1 by " + std::to_string(dev) + " (pass --renormalize to rescale)");
    if (renormalize || dev > kPsfSumTolerance) {
        // Unit-sum kernels are required downstream; small float drift is absorbed here.
        PsfGrid tmp(layout);
        std::copy(kernels.begin(), kernels.end(), tmp.data().begin());
        tmp.renormalize();
        tmp.validate();
        return tmp;
    }
    return PsfGrid(layout, std::move(kernels));
}

/// Loads a PSFG calibration file. Kernels whose sums are off by more than 1e-3 are
/// rejected unless `renormalize` is set.
inline PsfGrid load_psf_grid(const std::filesystem::path& path, bool renormalize = false) {
    return decode_psfg(detail::read_file(path), path.string(), renormalize);
}

}  // namespace metalens
