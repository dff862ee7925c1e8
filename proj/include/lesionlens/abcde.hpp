#pragma once
// Automated A/B/C/D criterion scores and the composite risk level.
//
//   A  asymmetry: symmetric difference of the mask and its reflection about
//      the horizontal and vertical centroid axes, |M xor R(M)| / (2 area)
//   B  border: clamped isoperimetric deficit 1 - 4 pi A / P^2 of the traced
//      outer contour, plus a Douglas-Peucker vertex count
//   C  color: k-means (k = 6) over lesion RGB, clusters with >= 5% coverage
//   D  diameter: minimum enclosing circle of the boundary pixel centres
//
// Evolution is not computable from a single image and is not represented.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "error.hpp"
#include "grid.hpp"
#include "imgio.hpp"
#include "rng.hpp"
#include "segmentation.hpp"

namespace lesionlens {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

inline double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

// ---------------------------------------------------------------- asymmetry

enum class AxisAggregation { Mean, Max };

struct AsymmetryAxes {
    double horizontal = 0.0;  // reflection across the row through the centroid
    double vertical = 0.0;    // reflection across the column through the centroid
};

namespace detail {

// Nearest-pixel reflection of index i about a real-valued axis at `center`:
// i -> floor(2 center + 0.5) - i, an involution on the integers.
inline int reflection_pivot(double center) { return static_cast<int>(std::floor(2.0 * center + 0.5)); }

inline double axis_asymmetry(const LesionMask& mask, bool about_row) {
    const int pivot = reflection_pivot(about_row ? mask.centroid_row() : mask.centroid_col());
    std::size_t diff = 0;
    for (int r = 0; r < mask.height(); ++r)
        for (int c = 0; c < mask.width(); ++c) {
            const int rr = about_row ? pivot - r : r;
            const int cc = about_row ? c : pivot - c;
            diff += mask(r, c) != mask.contains(rr, cc);
        }
    return static_cast<double>(diff) / (2.0 * static_cast<double>(mask.area()));
}

}  // namespace detail

inline AsymmetryAxes asymmetry_axes(const LesionMask& mask) {
    return {detail::axis_asymmetry(mask, true), detail::axis_asymmetry(mask, false)};
}

inline double asymmetry_score(const LesionMask& mask, AxisAggregation agg = AxisAggregation::Mean) {
    const auto axes = asymmetry_axes(mask);
    return agg == AxisAggregation::Mean ? 0.5 * (axes.horizontal + axes.vertical)
                                        : std::max(axes.horizontal, axes.vertical);
}

// ------------------------------------------------------------------- border

struct PixelCoord {
    int row = 0;
    int col = 0;
    friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

namespace detail {

// Clockwise Moore neighbourhood starting at west (rows grow downward).
inline constexpr Offset kMoore[8] = {{0, -1}, {-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}};

inline int moore_index(int drow, int dcol) {
    for (int i = 0; i < 8; ++i)
        if (kMoore[i].drow == drow && kMoore[i].dcol == dcol) return i;
    return -1;
}

}  // namespace detail

// Outer contour by Moore-neighbour tracing, clockwise from the first
// foreground pixel in row-major order, stopped by Jacob's criterion.
// The closing pixel is not repeated.
inline std::vector<PixelCoord> trace_contour(const LesionMask& mask) {
    PixelCoord start{-1, -1};
    for (int r = 0; r < mask.height() && start.row < 0; ++r)
        for (int c = 0; c < mask.width(); ++c)
            if (mask(r, c)) {
                start = {r, c};
                break;
            }

    std::vector<PixelCoord> contour{start};
    PixelCoord p = start;
    int back = 0;  // direction from p to its background backtrack pixel
    bool have_second = false;
    PixelCoord second{};
    const std::size_t cap = 8 * mask.area() + 8;

    while (contour.size() <= cap) {
        int found = -1;
        for (int k = 1; k <= 8; ++k) {
            const int d = (back + k) % 8;
            if (mask.contains(p.row + detail::kMoore[d].drow, p.col + detail::kMoore[d].dcol)) {
                found = d;
                break;
            }
        }
        if (found < 0) break;  // isolated pixel
        const PixelCoord q{p.row + detail::kMoore[found].drow, p.col + detail::kMoore[found].dcol};
        if (p == start) {
            if (have_second && q == second) break;
            if (!have_second) {
                have_second = true;
                second = q;
            }
        }
        const auto& prev = detail::kMoore[(found + 7) % 8];
        back = detail::moore_index(prev.drow - detail::kMoore[found].drow, prev.dcol - detail::kMoore[found].dcol);
        p = q;
        contour.push_back(p);
    }
    if (contour.size() > 1 && contour.back() == start) contour.pop_back();
    return contour;
}

// Closed polyline length; diagonal steps count sqrt(2).
inline double contour_perimeter(const std::vector<PixelCoord>& contour) {
    if (contour.size() < 2) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < contour.size(); ++i) {
        const auto& a = contour[i];
        const auto& b = contour[(i + 1) % contour.size()];
        total += std::hypot(static_cast<double>(a.row - b.row), static_cast<double>(a.col - b.col));
    }
    return total;
}

namespace detail {

inline double segment_distance(Point2 p, Point2 a, Point2 b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    if (len2 == 0.0) return distance(p, a);
    const double t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
    return distance(p, {a.x + t * dx, a.y + t * dy});
}

inline void douglas_peucker(const std::vector<Point2>& pts, std::size_t first, std::size_t last, double eps,
                            std::vector<bool>& keep) {
    std::vector<std::pair<std::size_t, std::size_t>> stack{{first, last}};
    while (!stack.empty()) {
        const auto [lo, hi] = stack.back();
        stack.pop_back();
        if (hi <= lo + 1) continue;
        double best = -1.0;
        std::size_t best_i = lo;
        for (std::size_t i = lo + 1; i < hi; ++i) {
            const double d = segment_distance(pts[i], pts[lo], pts[hi % pts.size()]);
            if (d > best) {
                best = d;
                best_i = i;
            }
        }
        if (best > eps) {
            keep[best_i] = true;
            stack.push_back({lo, best_i});
            stack.push_back({best_i, hi});
        }
    }
}

}  // namespace detail

// Vertex count of the Douglas-Peucker simplification of a closed polygon.
// The polygon is split at vertex 0 and the vertex farthest from it.
inline int simplified_vertex_count(const std::vector<Point2>& closed, double tolerance) {
    const std::size_t n = closed.size();
    if (n < 3) return static_cast<int>(n);
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 1; i < n; ++i) {
        const double d = distance(closed[0], closed[i]);
        if (d > far_d) {
            far_d = d;
            far = i;
        }
    }
    std::vector<bool> keep(n, false);
    keep[0] = keep[far] = true;
    detail::douglas_peucker(closed, 0, far, tolerance, keep);
    detail::douglas_peucker(closed, far, n, tolerance, keep);  // index n wraps to 0
    return static_cast<int>(std::count(keep.begin(), keep.end(), true));
}

struct BorderResult {
    double score = 0.0;
    int vertex_count = 0;
    double perimeter = 0.0;
};

inline constexpr double kDouglasPeuckerFraction = 0.02;

inline BorderResult border_score(const LesionMask& mask, double dp_fraction = kDouglasPeuckerFraction) {
    const auto contour = trace_contour(mask);
    BorderResult out;
    out.perimeter = contour_perimeter(contour);
    if (out.perimeter > 0.0) {
        const double area = static_cast<double>(mask.area());
        const double deficit = 1.0 - 4.0 * std::numbers::pi * area / (out.perimeter * out.perimeter);
        out.score = std::clamp(deficit, 0.0, 1.0);
    }
    std::vector<Point2> pts;
    pts.reserve(contour.size());
    for (const auto& p : contour) pts.push_back({static_cast<double>(p.col), static_cast<double>(p.row)});
    out.vertex_count = simplified_vertex_count(pts, dp_fraction * out.perimeter);
    return out;
}

// -------------------------------------------------------------------- color

struct DominantColor {
    std::array<std::uint8_t, 3> rgb{};
    double coverage = 0.0;
};

struct ColorResult {
    int color_count = 1;
    double color_std = 0.0;
    std::vector<DominantColor> dominant_colors;
    bool used_fallback = false;  // lesion smaller than k: distinct colours counted directly
};

struct ColorOptions {
    int clusters = 6;
    double min_coverage = 0.05;
    int max_iterations = 50;
    double shift_tolerance = 0.5;
    std::uint64_t seed = 42;
};

using Rgb = std::array<double, 3>;

struct KMeansResult {
    std::vector<Rgb> centers;
    std::vector<std::size_t> counts;
    std::vector<int> assignment;
    int iterations = 0;
};

namespace detail {

inline double sq_dist(const Rgb& a, const Rgb& b) {
    const double d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
    return d0 * d0 + d1 * d1 + d2 * d2;
}

inline int nearest_center(const Rgb& p, const std::vector<Rgb>& centers) {
    int best = 0;
    double best_d = sq_dist(p, centers[0]);
    for (std::size_t j = 1; j < centers.size(); ++j) {
        const double d = sq_dist(p, centers[j]);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(j);
        }
    }
    return best;
}

}  // namespace detail

// Lloyd's k-means. Seeding: one seeded random point, then repeatedly the point
// farthest from all chosen centres (lowest index on ties). Seeding stops early
// once every point coincides with a centre, so k may shrink for data with
// fewer than k distinct values.
inline KMeansResult kmeans(const std::vector<Rgb>& points, int k, std::uint64_t seed, int max_iterations,
                           double shift_tolerance) {
    KMeansResult out;
    if (points.empty() || k < 1) return out;
    Rng rng(seed);
    out.centers.push_back(points[rng.below(points.size())]);
    std::vector<double> min_d(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) min_d[i] = detail::sq_dist(points[i], out.centers[0]);
    while (static_cast<int>(out.centers.size()) < k) {
        std::size_t far = 0;
        for (std::size_t i = 1; i < points.size(); ++i)
            if (min_d[i] > min_d[far]) far = i;
        if (min_d[far] == 0.0) break;
        out.centers.push_back(points[far]);
        for (std::size_t i = 0; i < points.size(); ++i)
            min_d[i] = std::min(min_d[i], detail::sq_dist(points[i], out.centers.back()));
    }

    const std::size_t kk = out.centers.size();
    out.assignment.assign(points.size(), 0);
    for (out.iterations = 1; out.iterations <= max_iterations; ++out.iterations) {
        std::vector<Rgb> sums(kk, Rgb{0, 0, 0});
        std::vector<std::size_t> counts(kk, 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            const int a = detail::nearest_center(points[i], out.centers);
            out.assignment[i] = a;
            ++counts[a];
            for (int ch = 0; ch < 3; ++ch) sums[a][ch] += points[i][ch];
        }
        double shift = 0.0;
        for (std::size_t j = 0; j < kk; ++j) {
            if (counts[j] == 0) continue;
            Rgb next{};
            for (int ch = 0; ch < 3; ++ch) next[ch] = sums[j][ch] / static_cast<double>(counts[j]);
            shift = std::max(shift, std::sqrt(detail::sq_dist(next, out.centers[j])));
            out.centers[j] = next;
        }
        if (shift < shift_tolerance) break;
    }
    out.iterations = std::min(out.iterations, max_iterations);

    out.counts.assign(kk, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        out.assignment[i] = detail::nearest_center(points[i], out.centers);
        ++out.counts[out.assignment[i]];
    }
    return out;
}

namespace detail {

inline std::vector<Rgb> lesion_pixels(const RasterImage& img, const LesionMask& mask) {
    if (img.width != mask.width() || img.height != mask.height())
        fail(ErrorKind::ShapeMismatch, "image and mask dimensions differ");
    std::vector<Rgb> out;
    out.reserve(mask.area());
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            if (!mask(r, c)) continue;
            if (img.channels == 3)
                out.push_back({double(img.at(r, c, 0)), double(img.at(r, c, 1)), double(img.at(r, c, 2))});
            else
                out.push_back({double(img.at(r, c)), double(img.at(r, c)), double(img.at(r, c))});
        }
    return out;
}

inline std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l)); }

}  // namespace detail

// Grayscale images are treated as R = G = B.
inline ColorResult color_analysis(const RasterImage& img, const LesionMask& mask, const ColorOptions& opts = {}) {
    const auto pixels = detail::lesion_pixels(img, mask);
    const double n = static_cast<double>(pixels.size());
    ColorResult out;

    double std_sum = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
        double mean = 0.0;
        for (const auto& p : pixels) mean += p[ch];
        mean /= n;
        double var = 0.0;
        for (const auto& p : pixels) var += (p[ch] - mean) * (p[ch] - mean);
        std_sum += std::sqrt(var / n);
    }
    out.color_std = std::clamp(std_sum / 3.0 / 255.0, 0.0, 1.0);

    std::vector<DominantColor> candidates;
    if (pixels.size() < static_cast<std::size_t>(opts.clusters)) {
        out.used_fallback = true;
        std::map<std::array<std::uint8_t, 3>, std::size_t> unique;
        for (const auto& p : pixels) ++unique[{detail::to_byte(p[0]), detail::to_byte(p[1]), detail::to_byte(p[2])}];
        for (const auto& [rgb, count] : unique) candidates.push_back({rgb, static_cast<double>(count) / n});
    } else {
        const auto km = kmeans(pixels, opts.clusters, opts.seed, opts.max_iterations, opts.shift_tolerance);
        for (std::size_t j = 0; j < km.centers.size(); ++j) {
            if (km.counts[j] == 0) continue;
            const auto& c = km.centers[j];
            candidates.push_back({{detail::to_byte(c[0]), detail::to_byte(c[1]), detail::to_byte(c[2])},
                                  static_cast<double>(km.counts[j]) / n});
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const DominantColor& a, const DominantColor& b) { return a.coverage > b.coverage; });
    for (const auto& c : candidates)
        if (c.coverage >= opts.min_coverage) out.dominant_colors.push_back(c);
    if (out.dominant_colors.empty()) out.dominant_colors.push_back(candidates.front());
    out.color_count = static_cast<int>(out.dominant_colors.size());
    return out;
}

// ------------------------------------------------------------------ diameter

struct Circle {
    Point2 center;
    double radius = 0.0;
};

namespace detail {

inline bool in_circle(const Circle& c, Point2 p) { return distance(c.center, p) <= c.radius + 1e-9 * (1.0 + c.radius); }

inline Circle circle_from(Point2 a, Point2 b) {
    return {{(a.x + b.x) / 2.0, (a.y + b.y) / 2.0}, distance(a, b) / 2.0};
}

inline Circle circle_from(Point2 a, Point2 b, Point2 c) {
    const double bx = b.x - a.x, by = b.y - a.y;
    const double cx = c.x - a.x, cy = c.y - a.y;
    const double d = 2.0 * (bx * cy - by * cx);
    const double scale = std::max({std::abs(bx), std::abs(by), std::abs(cx), std::abs(cy), 1e-300});
    if (std::abs(d) <= 1e-12 * scale * scale) {
        // Collinear: the widest pair spans the others.
        Circle best = circle_from(a, b);
        for (const Circle& cand : {circle_from(a, c), circle_from(b, c)})
            if (cand.radius > best.radius) best = cand;
        return best;
    }
    const double b2 = bx * bx + by * by, c2 = cx * cx + cy * cy;
    const Point2 center{a.x + (cy * b2 - by * c2) / d, a.y + (bx * c2 - cx * b2) / d};
    return {center, std::max({distance(center, a), distance(center, b), distance(center, c)})};
}

}  // namespace detail

// Welzl's algorithm in its iterative move-to-front form over a seeded shuffle.
inline Circle min_enclosing_circle(std::vector<Point2> pts, std::uint64_t seed = 42) {
    if (pts.empty()) fail(ErrorKind::DegenerateInput, "minimum enclosing circle of an empty point set");
    Rng rng(seed);
    rng.shuffle(pts);
    Circle c{pts[0], 0.0};
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (detail::in_circle(c, pts[i])) continue;
        c = {pts[i], 0.0};
        for (std::size_t j = 0; j < i; ++j) {
            if (detail::in_circle(c, pts[j])) continue;
            c = detail::circle_from(pts[i], pts[j]);
            for (std::size_t k = 0; k < j; ++k)
                if (!detail::in_circle(c, pts[k])) c = detail::circle_from(pts[i], pts[j], pts[k]);
        }
    }
    return c;
}

struct DiameterResult {
    double diameter_px = 0.0;
    double bbox_diagonal_px = 0.0;
    Circle circle;
};

inline DiameterResult diameter_report(const LesionMask& mask, std::uint64_t seed = 42) {
    const auto boundary = boundary_pixels(mask.bits());
    std::vector<Point2> pts;
    int min_r = mask.height(), max_r = -1, min_c = mask.width(), max_c = -1;
    for (int r = 0; r < mask.height(); ++r)
        for (int c = 0; c < mask.width(); ++c) {
            if (!boundary(r, c)) continue;
            pts.push_back({static_cast<double>(c), static_cast<double>(r)});
            min_r = std::min(min_r, r);
            max_r = std::max(max_r, r);
            min_c = std::min(min_c, c);
            max_c = std::max(max_c, c);
        }
    DiameterResult out;
    out.circle = min_enclosing_circle(std::move(pts), seed);
    out.diameter_px = 2.0 * out.circle.radius;
    out.bbox_diagonal_px = std::hypot(static_cast<double>(max_r - min_r), static_cast<double>(max_c - min_c));
    return out;
}

// --------------------------------------------------------------------- risk

enum class RiskLevel { Low, Medium, High };

inline std::string_view to_string(RiskLevel r) {
    switch (r) {
        case RiskLevel::Low: return "low";
        case RiskLevel::Medium: return "medium";
        case RiskLevel::High: return "high";
    }
    return "low";
}

struct RiskThresholds {
    double asymmetry = 0.3;
    double border = 0.4;
    int colors = 3;
    double diameter_px = 114.0;
};

struct CriterionFlags {
    bool asymmetry = false;
    bool border = false;
    bool color = false;
    bool diameter = false;

    int count() const noexcept { return int(asymmetry) + int(border) + int(color) + int(diameter); }
    // Subset of "ABCD" in order, e.g. "CD".
    std::string letters() const {
        std::string s;
        if (asymmetry) s += 'A';
        if (border) s += 'B';
        if (color) s += 'C';
        if (diameter) s += 'D';
        return s;
    }
    friend bool operator==(const CriterionFlags&, const CriterionFlags&) = default;
};

struct RiskResult {
    CriterionFlags flags;
    RiskLevel risk = RiskLevel::Low;
};

inline RiskLevel risk_from_flag_count(int count) {
    if (count >= 3) return RiskLevel::High;
    if (count == 2) return RiskLevel::Medium;
    return RiskLevel::Low;
}

// Strict inequalities: a value equal to its threshold does not flag.
inline RiskResult risk_stratify(double asymmetry, double border, int color_count, double diameter_px,
                                const RiskThresholds& th = {}) {
    RiskResult out;
    out.flags.asymmetry = asymmetry > th.asymmetry;
    out.flags.border = border > th.border;
    out.flags.color = color_count > th.colors;
    out.flags.diameter = diameter_px > th.diameter_px;
    out.risk = risk_from_flag_count(out.flags.count());
    return out;
}

// ------------------------------------------------------------------- report

struct AbcdeOptions {
    AxisAggregation asymmetry_aggregation = AxisAggregation::Mean;
    double dp_fraction = kDouglasPeuckerFraction;
    ColorOptions color;
    std::uint64_t mec_seed = 42;
    RiskThresholds thresholds;
};

struct AbcdeReport {
    double asymmetry = 0.0;
    AsymmetryAxes asymmetry_axes;
    double border = 0.0;
    int vertex_count = 0;
    double perimeter_px = 0.0;
    int color_count = 1;
    double color_std = 0.0;
    std::vector<DominantColor> dominant_colors;
    double diameter_px = 0.0;
    double bbox_diagonal_px = 0.0;
    CriterionFlags flags;
    RiskLevel risk = RiskLevel::Low;
};

inline AbcdeReport compute_abcde(const RasterImage& img, const LesionMask& mask, const AbcdeOptions& opts = {}) {
    AbcdeReport rep;
    rep.asymmetry_axes = asymmetry_axes(mask);
    rep.asymmetry = opts.asymmetry_aggregation == AxisAggregation::Mean
                        ? 0.5 * (rep.asymmetry_axes.horizontal + rep.asymmetry_axes.vertical)
                        : std::max(rep.asymmetry_axes.horizontal, rep.asymmetry_axes.vertical);
    const auto border = border_score(mask, opts.dp_fraction);
    rep.border = border.score;
    rep.vertex_count = border.vertex_count;
    rep.perimeter_px = border.perimeter;
    const auto color = color_analysis(img, mask, opts.color);
    rep.color_count = color.color_count;
    rep.color_std = color.color_std;
    rep.dominant_colors = color.dominant_colors;
    const auto diam = diameter_report(mask, opts.mec_seed);
    rep.diameter_px = diam.diameter_px;
    rep.bbox_diagonal_px = diam.bbox_diagonal_px;
    const auto risk = risk_stratify(rep.asymmetry, rep.border, rep.color_count, rep.diameter_px, opts.thresholds);
    rep.flags = risk.flags;
    rep.risk = risk.risk;
    return rep;
}

}  // namespace lesionlens
