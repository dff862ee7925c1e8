#pragma once
// Raster and tensor types plus their on-disk codecs: binary PGM/PPM
// (maxval 255) and the MNT1 little-endian float32 tensor container.
//
// MNT1 layout:
//   bytes 0-3   magic "MNT1"
//   byte  4     dtype (0x01 = float32 little-endian)
//   byte  5     ndim in [1, 4]
//   ndim x u32  little-endian extents
//   payload     row-major float32 little-endian

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace lesionlens {

struct RasterImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;

    RasterImage() = default;
    RasterImage(int w, int h, int c, std::vector<std::uint8_t> pixels)
        : width(w), height(h), channels(c), data(std::move(pixels)) {
        if (w < 1 || h < 1) fail(ErrorKind::Format, "image dimensions must be positive");
        if (c != 1 && c != 3) fail(ErrorKind::Format, "image must have 1 or 3 channels, got " + std::to_string(c));
        if (data.size() != pixel_count() * static_cast<std::size_t>(c))
            fail(ErrorKind::Format, "pixel buffer size does not match dimensions");
    }
    RasterImage(int w, int h, int c, std::uint8_t fill = 0)
        : RasterImage(w, h, c, std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(w, 0)) *
                                                          static_cast<std::size_t>(std::max(h, 0)) *
                                                          static_cast<std::size_t>(std::max(c, 0)),
                                                      fill)) {}

    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }
    std::uint8_t& at(int row, int col, int ch = 0) {
        return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
    }
    std::uint8_t at(int row, int col, int ch = 0) const {
        return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
    }

    friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<std::uint32_t> extents, std::vector<float> values)
        : dims(std::move(extents)), data(std::move(values)) {
        if (dims.empty() || dims.size() > 4) fail(ErrorKind::Format, "tensor must have 1-4 axes");
        for (auto d : dims)
            if (d == 0) fail(ErrorKind::Format, "tensor extents must be >= 1");
        if (data.size() != element_count(dims)) fail(ErrorKind::Format, "tensor payload does not match extents");
        for (float v : data)
            if (!std::isfinite(v)) fail(ErrorKind::Data, "tensor contains a non-finite value");
    }

    static std::size_t element_count(std::span<const std::uint32_t> extents) {
        return std::accumulate(extents.begin(), extents.end(), std::size_t{1},
                               [](std::size_t a, std::uint32_t d) { return a * d; });
    }
    std::size_t rank() const noexcept { return dims.size(); }
    std::size_t size() const noexcept { return data.size(); }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorKind::Io, "read error on '" + path.string() + "'");
    return bytes;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::Io, "write error on '" + path.string() + "'");
}

class HeaderReader {
public:
    explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    // Skips whitespace and '#' comments, then reads a decimal integer.
    unsigned long read_uint() {
        skip_space_and_comments();
        if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) fail(ErrorKind::Format, "malformed PNM header");
        unsigned long v = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            v = v * 10 + (bytes_[pos_++] - '0');
            if (v > 1'000'000'000ul) fail(ErrorKind::Format, "PNM header value out of range");
        }
        return v;
    }

    void expect_single_space() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail(ErrorKind::Format, "malformed PNM header");
        ++pos_;
    }

    std::size_t position() const noexcept { return pos_; }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 2;
};

inline void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32le(const std::uint8_t* p) {
    return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
}

}  // namespace detail

inline RasterImage decode_pnm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        fail(ErrorKind::Format, "expected binary PGM (P5) or PPM (P6) magic");
    const int channels = bytes[1] == '5' ? 1 : 3;
    detail::HeaderReader header(bytes);
    const auto width = header.read_uint();
    const auto height = header.read_uint();
    const auto maxval = header.read_uint();
    if (width < 1 || height < 1 || width > 65535 || height > 65535)
        fail(ErrorKind::Format, "unsupported image dimensions");
    if (maxval != 255) fail(ErrorKind::Format, "only maxval 255 is supported, got " + std::to_string(maxval));
    header.expect_single_space();

    const std::size_t need = width * height * static_cast<std::size_t>(channels);
    const std::size_t start = header.position();
    if (bytes.size() - start < need) fail(ErrorKind::Format, "truncated PNM payload");
    return RasterImage(static_cast<int>(width), static_cast<int>(height), channels,
                       std::vector<std::uint8_t>(bytes.begin() + start, bytes.begin() + start + need));
}

inline std::vector<std::uint8_t> encode_pnm(const RasterImage& img) {
    if (img.channels != 1 && img.channels != 3)
        fail(ErrorKind::Format, "cannot encode a " + std::to_string(img.channels) + "-channel image");
    const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) +
                               " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.data.begin(), img.data.end());
    return out;
}

inline RasterImage load_image(const std::filesystem::path& path) { return decode_pnm(detail::read_file(path)); }

inline void write_image(const RasterImage& img, const std::filesystem::path& path) {
    detail::write_file(path, encode_pnm(img));
}

inline Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 6 || std::memcmp(bytes.data(), "MNT1", 4) != 0) fail(ErrorKind::Format, "missing MNT1 magic");
    if (bytes[4] != 0x01) fail(ErrorKind::Format, "unsupported MNT1 dtype code " + std::to_string(bytes[4]));
    const std::size_t ndim = bytes[5];
    if (ndim < 1 || ndim > 4) fail(ErrorKind::Format, "MNT1 ndim must be in [1,4], got " + std::to_string(ndim));
    if (bytes.size() < 6 + 4 * ndim) fail(ErrorKind::Format, "truncated MNT1 header");

    std::vector<std::uint32_t> dims(ndim);
    for (std::size_t i = 0; i < ndim; ++i) dims[i] = detail::get_u32le(bytes.data() + 6 + 4 * i);
    for (auto d : dims)
        if (d == 0) fail(ErrorKind::Format, "MNT1 extents must be >= 1");

    const std::size_t count = Tensor::element_count(dims);
    const std::size_t offset = 6 + 4 * ndim;
    if ((bytes.size() - offset) / 4 < count || (bytes.size() - offset) != count * 4)
        fail(ErrorKind::Format, "MNT1 payload size does not match extents");

    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i)
        values[i] = std::bit_cast<float>(detail::get_u32le(bytes.data() + offset + 4 * i));
    return Tensor(std::move(dims), std::move(values));
}

inline std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
    std::vector<std::uint8_t> out{'M', 'N', 'T', '1', 0x01, static_cast<std::uint8_t>(t.dims.size())};
    out.reserve(6 + 4 * t.dims.size() + 4 * t.data.size());
    for (auto d : t.dims) detail::put_u32le(out, d);
    for (float v : t.data) detail::put_u32le(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

inline Tensor load_tensor(const std::filesystem::path& path) { return decode_tensor(detail::read_file(path)); }

inline void write_tensor(const Tensor& t, const std::filesystem::path& path) {
    detail::write_file(path, encode_tensor(t));
}

// BT.601 luma with integer round-half-up; exact for R = G = B.
inline RasterImage to_grayscale(const RasterImage& img) {
    if (img.channels == 1) return img;
    if (img.channels != 3) fail(ErrorKind::Format, "grayscale conversion needs 1 or 3 channels");
    std::vector<std::uint8_t> gray(img.pixel_count());
    for (std::size_t i = 0; i < gray.size(); ++i) {
        const unsigned r = img.data[3 * i], g = img.data[3 * i + 1], b = img.data[3 * i + 2];
        gray[i] = static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
    }
    return RasterImage(img.width, img.height, 1, std::move(gray));
}

}  // namespace lesionlens
