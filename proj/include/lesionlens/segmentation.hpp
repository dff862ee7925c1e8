#pragma once
// Lesion segmentation: Otsu threshold, disk morphology, largest 4-connected
// component, hole filling.

#include <array>
#include <cstdint>
#include <vector>

#include "error.hpp"
#include "grid.hpp"
#include "imgio.hpp"

namespace lesionlens {

// Binary lesion region with its area and unweighted centroid.
// Invariants (when produced by segment_lesion): one 4-connected foreground
// component, no enclosed background holes, area >= 1.
class LesionMask {
public:
    static LesionMask from_bits(BinaryRaster bits) {
        LesionMask m;
        double sum_row = 0.0, sum_col = 0.0;
        std::size_t area = 0;
        for (int r = 0; r < bits.height; ++r)
            for (int c = 0; c < bits.width; ++c)
                if (bits(r, c)) {
                    bits(r, c) = 1;
                    ++area;
                    sum_row += r;
                    sum_col += c;
                }
        if (area == 0) fail(ErrorKind::EmptyMask, "lesion mask has no foreground pixels");
        m.bits_ = std::move(bits);
        m.area_ = area;
        m.centroid_row_ = sum_row / static_cast<double>(area);
        m.centroid_col_ = sum_col / static_cast<double>(area);
        return m;
    }

    int width() const noexcept { return bits_.width; }
    int height() const noexcept { return bits_.height; }
    std::size_t area() const noexcept { return area_; }
    double centroid_row() const noexcept { return centroid_row_; }
    double centroid_col() const noexcept { return centroid_col_; }
    const BinaryRaster& bits() const noexcept { return bits_; }
    bool operator()(int row, int col) const { return bits_(row, col) != 0; }
    bool contains(int row, int col) const { return bits_.contains(row, col) && bits_(row, col) != 0; }

private:
    BinaryRaster bits_;
    std::size_t area_ = 0;
    double centroid_row_ = 0.0;
    double centroid_col_ = 0.0;
};

inline std::array<std::size_t, 256> histogram(const RasterImage& gray) {
    if (gray.channels != 1) fail(ErrorKind::Format, "histogram needs a 1-channel image");
    std::array<std::size_t, 256> hist{};
    for (auto v : gray.data) ++hist[v];
    return hist;
}

// Threshold t maximizing between-class variance of {<= t} vs {> t}.
// Ties resolve to the smallest t.
inline int otsu_threshold(const RasterImage& gray) {
    const auto hist = histogram(gray);
    const double total = static_cast<double>(gray.pixel_count());
    double total_sum = 0.0;
    int distinct = 0;
    for (int v = 0; v < 256; ++v) {
        total_sum += static_cast<double>(v) * static_cast<double>(hist[v]);
        distinct += hist[v] > 0;
    }
    if (distinct < 2) fail(ErrorKind::DegenerateInput, "image has fewer than two distinct intensities");

    double best = -1.0;
    int best_t = 0;
    double n0 = 0.0, s0 = 0.0;
    for (int t = 0; t < 255; ++t) {
        n0 += static_cast<double>(hist[t]);
        s0 += static_cast<double>(t) * static_cast<double>(hist[t]);
        const double n1 = total - n0;
        if (n0 == 0.0 || n1 == 0.0) continue;
        const double mu0 = s0 / n0;
        const double mu1 = (total_sum - s0) / n1;
        const double between = (n0 / total) * (n1 / total) * (mu0 - mu1) * (mu0 - mu1);
        if (between > best) {
            best = between;
            best_t = t;
        }
    }
    return best_t;
}

inline BinaryRaster binarize(const RasterImage& gray, int threshold, bool lesion_is_dark = true) {
    if (gray.channels != 1) fail(ErrorKind::Format, "binarize needs a 1-channel image");
    BinaryRaster out(gray.width, gray.height);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const int v = gray.data[i];
        out.data[i] = lesion_is_dark ? (v <= threshold) : (v >= threshold);
    }
    return out;
}

enum class MorphOp { Erode, Dilate, Open, Close };

namespace detail {

// Disk-element erosion/dilation. Offsets falling outside the raster are
// ignored, so shapes touching the frame are not eroded by it.
inline BinaryRaster morph_basic(const BinaryRaster& in, int radius, bool dilate) {
    const auto disk = disk_offsets(radius);
    BinaryRaster out(in.width, in.height);
    for (int r = 0; r < in.height; ++r) {
        for (int c = 0; c < in.width; ++c) {
            bool v = !dilate;
            for (const auto& o : disk) {
                const int rr = r + o.drow, cc = c + o.dcol;
                if (!in.contains(rr, cc)) continue;
                if (dilate && in(rr, cc)) { v = true; break; }
                if (!dilate && !in(rr, cc)) { v = false; break; }
            }
            out(r, c) = v;
        }
    }
    return out;
}

}  // namespace detail

inline BinaryRaster morph(const BinaryRaster& in, MorphOp op, int radius) {
    if (radius < 1) fail(ErrorKind::DegenerateInput, "morphology radius must be >= 1");
    switch (op) {
        case MorphOp::Erode: return detail::morph_basic(in, radius, false);
        case MorphOp::Dilate: return detail::morph_basic(in, radius, true);
        case MorphOp::Open: return detail::morph_basic(detail::morph_basic(in, radius, false), radius, true);
        case MorphOp::Close: return detail::morph_basic(detail::morph_basic(in, radius, true), radius, false);
    }
    return in;
}

// 4-connected labeling in row-major seed order; labels start at 1.
inline Grid<int> label_components(const BinaryRaster& in, std::vector<std::size_t>* sizes = nullptr) {
    Grid<int> labels(in.width, in.height, 0);
    if (sizes) sizes->assign(1, 0);
    int next = 0;
    std::vector<std::pair<int, int>> stack;
    for (int r = 0; r < in.height; ++r) {
        for (int c = 0; c < in.width; ++c) {
            if (!in(r, c) || labels(r, c)) continue;
            ++next;
            std::size_t count = 0;
            labels(r, c) = next;
            stack.assign(1, {r, c});
            while (!stack.empty()) {
                const auto [pr, pc] = stack.back();
                stack.pop_back();
                ++count;
                for (const auto& o : kNeighbors4) {
                    const int nr = pr + o.drow, nc = pc + o.dcol;
                    if (in.contains(nr, nc) && in(nr, nc) && !labels(nr, nc)) {
                        labels(nr, nc) = next;
                        stack.push_back({nr, nc});
                    }
                }
            }
            if (sizes) sizes->push_back(count);
        }
    }
    return labels;
}

// Keeps the largest component; on equal areas the one seen first in row-major order wins.
inline BinaryRaster largest_component(const BinaryRaster& in) {
    std::vector<std::size_t> sizes;
    const auto labels = label_components(in, &sizes);
    if (sizes.size() < 2) fail(ErrorKind::EmptyMask, "no foreground pixels to select a component from");
    std::size_t best = 1;
    for (std::size_t i = 2; i < sizes.size(); ++i)
        if (sizes[i] > sizes[best]) best = i;
    BinaryRaster out(in.width, in.height);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = labels.data[i] == static_cast<int>(best);
    return out;
}

inline BinaryRaster fill_holes(const BinaryRaster& in) {
    BinaryRaster outside(in.width, in.height);
    std::vector<std::pair<int, int>> stack;
    auto seed = [&](int r, int c) {
        if (!in(r, c) && !outside(r, c)) {
            outside(r, c) = 1;
            stack.push_back({r, c});
        }
    };
    for (int c = 0; c < in.width; ++c) {
        seed(0, c);
        seed(in.height - 1, c);
    }
    for (int r = 0; r < in.height; ++r) {
        seed(r, 0);
        seed(r, in.width - 1);
    }
    while (!stack.empty()) {
        const auto [r, c] = stack.back();
        stack.pop_back();
        for (const auto& o : kNeighbors4) {
            const int nr = r + o.drow, nc = c + o.dcol;
            if (in.contains(nr, nc)) seed(nr, nc);
        }
    }
    BinaryRaster out(in.width, in.height);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = !outside.data[i];
    return out;
}

// Foreground pixels with at least one 4-neighbour in the background or off the raster.
inline BinaryRaster boundary_pixels(const BinaryRaster& in) {
    BinaryRaster out(in.width, in.height);
    for (int r = 0; r < in.height; ++r)
        for (int c = 0; c < in.width; ++c) {
            if (!in(r, c)) continue;
            for (const auto& o : kNeighbors4) {
                const int nr = r + o.drow, nc = c + o.dcol;
                if (!in.contains(nr, nc) || !in(nr, nc)) {
                    out(r, c) = 1;
                    break;
                }
            }
        }
    return out;
}

struct SegmentationOptions {
    bool lesion_is_dark = true;
    int morph_radius = 3;
};

inline constexpr int kMinSegmentationSide = 16;

// grayscale -> otsu -> binarize -> open -> close -> largest component -> fill holes
inline LesionMask segment_lesion(const RasterImage& img, const SegmentationOptions& opts = {}) {
    if (img.width < kMinSegmentationSide || img.height < kMinSegmentationSide)
        fail(ErrorKind::DegenerateInput, "image must be at least 16x16 for segmentation");
    const auto gray = to_grayscale(img);
    const int t = otsu_threshold(gray);
    // Otsu assigns level t to the darker class, so a light lesion starts at t + 1.
    auto bits = opts.lesion_is_dark ? binarize(gray, t, true) : binarize(gray, t + 1, false);
    bits = morph(bits, MorphOp::Open, opts.morph_radius);
    bits = morph(bits, MorphOp::Close, opts.morph_radius);
    bits = largest_component(bits);
    return LesionMask::from_bits(fill_holes(bits));
}

}  // namespace lesionlens
