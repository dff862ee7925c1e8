#pragma once
// GradCAM++ heatmaps from final-conv activation/gradient dumps and the
// attention-vs-lesion alignment scores.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "error.hpp"
#include "grid.hpp"
#include "imgio.hpp"
#include "segmentation.hpp"

namespace lesionlens {

// Final-conv feature maps A^k and d(class score)/dA^k, both [K, h, w].
struct ConvDump {
    Tensor activations;
    Tensor gradients;
    int class_index = 0;

    int channels() const { return static_cast<int>(activations.dims[0]); }
    int height() const { return static_cast<int>(activations.dims[1]); }
    int width() const { return static_cast<int>(activations.dims[2]); }
};

namespace detail {

// Accepts [K,h,w] or a leading singleton batch axis [1,K,h,w].
inline Tensor squeeze_batch(Tensor t) {
    if (t.rank() == 4) {
        if (t.dims[0] != 1) fail(ErrorKind::ShapeMismatch, "conv dumps with batch size > 1 are not supported");
        t.dims.erase(t.dims.begin());
    }
    if (t.rank() != 3) fail(ErrorKind::ShapeMismatch, "conv dump must have shape [K,h,w]");
    return t;
}

}  // namespace detail

inline ConvDump make_conv_dump(Tensor activations, Tensor gradients, int class_index) {
    ConvDump d{detail::squeeze_batch(std::move(activations)), detail::squeeze_batch(std::move(gradients)),
               class_index};
    if (d.activations.dims != d.gradients.dims)
        fail(ErrorKind::ShapeMismatch, "activation and gradient dumps have different shapes");
    if (class_index < 0) fail(ErrorKind::ShapeMismatch, "class index must be non-negative");
    return d;
}

inline constexpr double kGradCamEpsilon = 1e-8;

// Per channel k: alpha = g^2 / (2 g^2 + S_k g^3 + eps) with S_k the spatial sum
// of A^k (alpha = 0 when that denominator is below eps in magnitude);
// w_k = sum alpha * relu(g); map = relu(sum_k w_k A^k).
inline ScalarMap gradcampp(const ConvDump& dump) {
    if (dump.activations.dims != dump.gradients.dims || dump.activations.rank() != 3)
        fail(ErrorKind::ShapeMismatch, "conv dump must hold two [K,h,w] tensors of equal shape");
    const int K = dump.channels(), h = dump.height(), w = dump.width();
    const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    std::vector<double> weights(K, 0.0);
    for (int k = 0; k < K; ++k) {
        const float* A = dump.activations.data.data() + k * plane;
        const float* G = dump.gradients.data.data() + k * plane;
        double sum_a = 0.0;
        for (std::size_t i = 0; i < plane; ++i) sum_a += A[i];
        double wk = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            const double g = G[i];
            const double g2 = g * g;
            const double denom = 2.0 * g2 + sum_a * g2 * g + kGradCamEpsilon;
            const double alpha = std::abs(denom) < kGradCamEpsilon ? 0.0 : g2 / denom;
            wk += alpha * std::max(g, 0.0);
        }
        weights[k] = wk;
    }
    ScalarMap map(w, h, 0.0);
    for (std::size_t i = 0; i < plane; ++i) {
        double v = 0.0;
        for (int k = 0; k < K; ++k) v += weights[k] * dump.activations.data[k * plane + i];
        map.data[i] = std::max(v, 0.0);
    }
    return map;
}

// Corner-aligned bilinear resampling: output corners coincide with input corners.
inline ScalarMap upsample_bilinear(const ScalarMap& src, int width, int height) {
    if (width < src.width || height < src.height)
        fail(ErrorKind::ShapeMismatch, "upsampling target is smaller than the source");
    ScalarMap out(width, height, 0.0);
    const double sy = height > 1 ? static_cast<double>(src.height - 1) / (height - 1) : 0.0;
    const double sx = width > 1 ? static_cast<double>(src.width - 1) / (width - 1) : 0.0;
    for (int r = 0; r < height; ++r) {
        const double y = r * sy;
        const int y0 = std::min(static_cast<int>(std::floor(y)), src.height - 1);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double fy = y - y0;
        for (int c = 0; c < width; ++c) {
            const double x = c * sx;
            const int x0 = std::min(static_cast<int>(std::floor(x)), src.width - 1);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double fx = x - x0;
            const double top = src(y0, x0) + fx * (src(y0, x1) - src(y0, x0));
            const double bottom = src(y1, x0) + fx * (src(y1, x1) - src(y1, x0));
            out(r, c) = top + fy * (bottom - top);
        }
    }
    return out;
}

// Heatmap with values in [0,1]; min 0 and max 1 unless the source was constant.
struct AttentionMap {
    ScalarMap values;

    int width() const noexcept { return values.width; }
    int height() const noexcept { return values.height; }
    double operator()(int row, int col) const { return values(row, col); }
};

inline AttentionMap normalize_map(const ScalarMap& map) {
    const auto [lo_it, hi_it] = std::minmax_element(map.data.begin(), map.data.end());
    const double lo = *lo_it, hi = *hi_it;
    AttentionMap out{ScalarMap(map.width, map.height, 0.0)};
    if (hi > lo)
        for (std::size_t i = 0; i < map.size(); ++i) out.values.data[i] = (map.data[i] - lo) / (hi - lo);
    return out;
}

// Wraps values already in [0,1] without renormalizing them.
inline AttentionMap attention_from_unit_values(ScalarMap values) {
    for (double v : values.data)
        if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::Data, "attention values must lie in [0,1]");
    return AttentionMap{std::move(values)};
}

inline AttentionMap attention_from_pgm(const RasterImage& gray) {
    if (gray.channels != 1) fail(ErrorKind::Format, "heatmap image must be single-channel");
    ScalarMap values(gray.width, gray.height, 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) values.data[i] = gray.data[i] / 255.0;
    return AttentionMap{std::move(values)};
}

inline RasterImage attention_to_pgm(const AttentionMap& H) {
    std::vector<std::uint8_t> px(H.values.size());
    for (std::size_t i = 0; i < px.size(); ++i)
        px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(H.values.data[i], 0.0, 1.0) * 255.0));
    return RasterImage(H.width(), H.height(), 1, std::move(px));
}

// GradCAM++ -> bilinear upsampling to (width, height) -> min-max normalization.
inline AttentionMap attention_map(const ConvDump& dump, int width, int height) {
    return normalize_map(upsample_bilinear(gradcampp(dump), width, height));
}

inline constexpr int kBorderDilationRadius = 5;

// Boundary pixels of the lesion dilated by a disk; radius 0 keeps the bare boundary.
inline BinaryRaster border_band(const LesionMask& mask, int dilation_radius) {
    const auto boundary = boundary_pixels(mask.bits());
    if (dilation_radius <= 0) return boundary;
    return morph(boundary, MorphOp::Dilate, dilation_radius);
}

namespace detail {

inline double weighted_mean(const AttentionMap& H, const BinaryRaster& region) {
    if (!H.values.same_shape(region)) fail(ErrorKind::ShapeMismatch, "heatmap and mask dimensions differ");
    double num = 0.0;
    std::size_t den = 0;
    for (std::size_t i = 0; i < region.size(); ++i)
        if (region.data[i]) {
            num += H.values.data[i];
            ++den;
        }
    if (den == 0) fail(ErrorKind::EmptyMask, "alignment region is empty");
    return num / static_cast<double>(den);
}

}  // namespace detail

// sum(M_border * H) / sum(M_border)
inline double border_alignment(const AttentionMap& H, const LesionMask& mask,
                               int dilation_radius = kBorderDilationRadius) {
    if (!H.values.same_shape(mask.bits())) fail(ErrorKind::ShapeMismatch, "heatmap and mask dimensions differ");
    return detail::weighted_mean(H, border_band(mask, dilation_radius));
}

// sum(M * H) / sum(M) over the whole lesion.
inline double lesion_alignment(const AttentionMap& H, const LesionMask& mask) {
    return detail::weighted_mean(H, mask.bits());
}

}  // namespace lesionlens
