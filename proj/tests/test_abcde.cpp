#include <gtest/gtest.h>

#include <numbers>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace lesionlens;

namespace {

LesionMask mask_of(const BinaryRaster& b) { return LesionMask::from_bits(b); }

BinaryRaster rotate90(const BinaryRaster& b) {
    BinaryRaster out(b.height, b.width);
    for (int r = 0; r < b.height; ++r)
        for (int c = 0; c < b.width; ++c) out(c, b.height - 1 - r) = b(r, c);
    return out;
}

BinaryRaster star_bits(int size, double inner, double outer, int spikes) {
    BinaryRaster b(size, size);
    const double cx = (size - 1) / 2.0;
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const double ang = std::atan2(r - cx, c - cx);
            const double rad = std::hypot(r - cx, c - cx);
            const double limit = inner + (outer - inner) * 0.5 * (1 + std::cos(spikes * ang));
            b(r, c) = rad <= limit;
        }
    return b;
}

}  // namespace

TEST(Asymmetry, CenteredSquareIsSymmetric) {
    const auto m = mask_of(fixtures::rect_bits(20, 20, 5, 5, 14, 14));
    EXPECT_NEAR(asymmetry_score(m), 0.0, 0.02);
}

TEST(Asymmetry, LShapeMatchesReflectionOracle) {
    BinaryRaster l(8, 8);
    for (int r = 1; r <= 6; ++r) l(r, 1) = l(r, 2) = 1;
    for (int c = 3; c <= 6; ++c) l(5, c) = l(6, c) = 1;
    const auto m = mask_of(l);
    EXPECT_EQ(asymmetry_score(m), oracle::asymmetry(l));
    EXPECT_GT(asymmetry_score(m), 0.1);
}

TEST(Asymmetry, RandomMasksMatchOracleExactly) {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = fixtures::random_lesion_mask(rng, 16, 16);
        EXPECT_EQ(asymmetry_score(m), oracle::asymmetry(m.bits()));
    }
}

TEST(Asymmetry, MaxAggregationAndRange) {
    Rng rng(32);
    for (int trial = 0; trial < 30; ++trial) {
        const auto m = fixtures::random_lesion_mask(rng, 20, 14);
        const auto axes = asymmetry_axes(m);
        EXPECT_EQ(asymmetry_score(m, AxisAggregation::Max), std::max(axes.horizontal, axes.vertical));
        EXPECT_GE(asymmetry_score(m), 0.0);
        EXPECT_LE(asymmetry_score(m), 1.0);
    }
}

TEST(Asymmetry, RotationSwapsAxes) {
    Rng rng(33);
    for (int trial = 0; trial < 30; ++trial) {
        const auto m = fixtures::random_lesion_mask(rng, 18, 18);
        const auto rot = mask_of(rotate90(m.bits()));
        EXPECT_NEAR(asymmetry_score(m), asymmetry_score(rot), 0.02);
    }
}

TEST(Border, ContourOfSquare) {
    const auto m = mask_of(fixtures::rect_bits(10, 10, 2, 2, 5, 5));
    const auto contour = trace_contour(m);
    EXPECT_EQ(contour.size(), 12u);
    EXPECT_EQ(contour.front(), (PixelCoord{2, 2}));
    EXPECT_EQ(contour[1], (PixelCoord{2, 3}));  // clockwise: heads east first
    EXPECT_DOUBLE_EQ(contour_perimeter(contour), 12.0);
    const auto b = border_score(m);
    EXPECT_EQ(b.vertex_count, 4);
    // 1 - 4 pi 16 / 144
    EXPECT_NEAR(b.score, std::max(0.0, 1.0 - 4 * std::numbers::pi * 16 / 144.0), 1e-12);
}

TEST(Border, SinglePixelAndLine) {
    BinaryRaster one(5, 5);
    one(2, 2) = 1;
    const auto b1 = border_score(mask_of(one));
    EXPECT_EQ(b1.score, 0.0);
    EXPECT_EQ(b1.vertex_count, 1);

    const auto line = mask_of(fixtures::rect_bits(10, 3, 1, 1, 1, 8));
    const auto contour = trace_contour(line);
    EXPECT_EQ(contour.size(), 14u);  // out along the row and back
    EXPECT_DOUBLE_EQ(contour_perimeter(contour), 14.0);
}

TEST(Border, DigitalDiskIsNearlyCircular) {
    const auto m = mask_of(fixtures::disk_bits(256, 40));
    const auto b = border_score(m);
    EXPECT_LE(b.score, 0.15);
    EXPECT_GE(b.vertex_count, 6);
}

TEST(Border, StarScoresAboveEqualAreaDisk) {
    const auto star = mask_of(star_bits(200, 30, 70, 8));
    const int radius = static_cast<int>(std::lround(std::sqrt(star.area() / std::numbers::pi)));
    const auto disk = mask_of(fixtures::disk_bits(200, radius));
    EXPECT_NEAR(static_cast<double>(disk.area()), static_cast<double>(star.area()), 0.05 * star.area());
    EXPECT_GT(border_score(star).score, border_score(disk).score);
    EXPECT_GT(border_score(star).vertex_count, border_score(disk).vertex_count);
}

TEST(Border, ScoreInUnitRangeOnRandomMasks) {
    Rng rng(34);
    for (int trial = 0; trial < 30; ++trial) {
        const auto b = border_score(fixtures::random_lesion_mask(rng, 24, 24));
        EXPECT_GE(b.score, 0.0);
        EXPECT_LE(b.score, 1.0);
        EXPECT_GE(b.vertex_count, 1);
    }
}

TEST(Color, UniformLesion) {
    RasterImage img(20, 20, 3, 0);
    for (int r = 0; r < 20; ++r)
        for (int c = 0; c < 20; ++c) {
            img.at(r, c, 0) = 120;
            img.at(r, c, 1) = 72;
            img.at(r, c, 2) = 40;
        }
    const auto res = color_analysis(img, mask_of(fixtures::rect_bits(20, 20, 4, 4, 15, 15)));
    EXPECT_EQ(res.color_count, 1);
    EXPECT_EQ(res.color_std, 0.0);
    ASSERT_EQ(res.dominant_colors.size(), 1u);
    EXPECT_EQ(res.dominant_colors[0].rgb, (std::array<std::uint8_t, 3>{120, 72, 40}));
    EXPECT_DOUBLE_EQ(res.dominant_colors[0].coverage, 1.0);
}

TEST(Color, TwoColorMixture) {
    RasterImage img(20, 20, 3, 0);
    for (int r = 0; r < 20; ++r)
        for (int c = 0; c < 20; ++c) {
            const bool left = c < 10;
            img.at(r, c, 0) = left ? 90 : 200;
            img.at(r, c, 1) = left ? 50 : 160;
            img.at(r, c, 2) = left ? 30 : 140;
        }
    const auto res = color_analysis(img, mask_of(fixtures::rect_bits(20, 20, 0, 0, 19, 19)));
    EXPECT_EQ(res.color_count, 2);
    ASSERT_EQ(res.dominant_colors.size(), 2u);
    EXPECT_DOUBLE_EQ(res.dominant_colors[0].coverage, 0.5);
    EXPECT_DOUBLE_EQ(res.dominant_colors[1].coverage, 0.5);
    // Per-channel population std is half the channel gap: (55 + 55 + 55) / 3 / 255.
    EXPECT_NEAR(res.color_std, 55.0 / 255.0, 1e-12);
}

TEST(Color, SixBlocksGiveSixColorsAndMinorClusterIgnored) {
    RasterImage img(60, 10, 3, 0);
    const std::uint8_t palette[6][3] = {{20, 20, 20}, {120, 60, 30}, {200, 180, 160},
                                        {60, 60, 160}, {230, 230, 40}, {140, 20, 140}};
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 60; ++c)
            for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = palette[c / 10][ch];
    const auto full = color_analysis(img, mask_of(fixtures::rect_bits(60, 10, 0, 0, 9, 59)));
    EXPECT_EQ(full.color_count, 6);
    double total = 0;
    for (const auto& c : full.dominant_colors) total += c.coverage;
    EXPECT_LE(total, 1.0 + 1e-9);

    // Shrink the last colour below 5% coverage.
    for (int r = 0; r < 10; ++r)
        for (int c = 50; c < 60; ++c)
            for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = palette[c < 52 ? 5 : 4][ch];
    const auto reduced = color_analysis(img, mask_of(fixtures::rect_bits(60, 10, 0, 0, 9, 59)));
    EXPECT_EQ(reduced.color_count, 5);
}

TEST(Color, FallbackBelowClusterCount) {
    RasterImage img(5, 5, 3, 0);
    BinaryRaster b(5, 5);
    b(1, 1) = b(1, 2) = b(1, 3) = 1;
    img.at(1, 1, 0) = 255;
    img.at(1, 2, 0) = 255;
    const auto res = color_analysis(img, mask_of(b));
    EXPECT_TRUE(res.used_fallback);
    EXPECT_EQ(res.color_count, 2);
}

TEST(Color, KMeansIsDeterministic) {
    Rng rng(35);
    RasterImage img(40, 40, 3);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
    const auto m = mask_of(fixtures::rect_bits(40, 40, 0, 0, 39, 39));
    const auto a = color_analysis(img, m, {.seed = 5});
    const auto b = color_analysis(img, m, {.seed = 5});
    ASSERT_EQ(a.dominant_colors.size(), b.dominant_colors.size());
    for (std::size_t i = 0; i < a.dominant_colors.size(); ++i) {
        EXPECT_EQ(a.dominant_colors[i].rgb, b.dominant_colors[i].rgb);
        EXPECT_EQ(a.dominant_colors[i].coverage, b.dominant_colors[i].coverage);
    }
    EXPECT_GE(a.color_count, 1);
    EXPECT_LE(a.color_count, 6);
}

TEST(Mec, SmallCases) {
    const auto two = min_enclosing_circle({{0, 0}, {6, 8}});
    EXPECT_NEAR(two.radius, 5.0, 1e-12);
    EXPECT_NEAR(two.center.x, 3.0, 1e-12);
    EXPECT_NEAR(two.center.y, 4.0, 1e-12);

    const auto tri = min_enclosing_circle({{0, 0}, {4, 0}, {0, 3}});
    EXPECT_NEAR(tri.radius, 2.5, 1e-12);
    EXPECT_NEAR(tri.center.x, 2.0, 1e-12);
    EXPECT_NEAR(tri.center.y, 1.5, 1e-12);

    const auto one = min_enclosing_circle({{3, -2}});
    EXPECT_EQ(one.radius, 0.0);

    const auto collinear = min_enclosing_circle({{0, 0}, {1, 1}, {2, 2}, {5, 5}});
    EXPECT_NEAR(collinear.radius, std::hypot(5, 5) / 2, 1e-12);
}

TEST(Mec, RandomSetsMatchBruteForce) {
    Rng rng(36);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<Point2> pts(2 + rng.below(40));
        for (auto& p : pts) p = {rng.uniform() * 100 - 50, rng.uniform() * 100 - 50};
        const auto got = min_enclosing_circle(pts, trial);
        const auto want = oracle::min_enclosing_circle(pts);
        EXPECT_NEAR(got.radius, want.r, 1e-6);
        for (const auto& p : pts) EXPECT_LE(distance(p, got.center), got.radius + 1e-7);
    }
}

TEST(Mec, LargeInputCoversAllPoints) {
    Rng rng(37);
    std::vector<Point2> pts(200);
    for (auto& p : pts) p = {rng.normal(0, 10), rng.normal(0, 10)};
    const auto c = min_enclosing_circle(pts);
    for (const auto& p : pts) EXPECT_LE(distance(p, c.center), c.radius + 1e-7);
    EXPECT_NEAR(c.radius, oracle::min_enclosing_circle(pts).r, 1e-6);
}

TEST(Diameter, DiskAndSinglePixel) {
    const auto d = diameter_report(mask_of(fixtures::disk_bits(256, 40)));
    EXPECT_NEAR(d.diameter_px, 80.0, 2.0);
    EXPECT_NEAR(d.bbox_diagonal_px, 80.0 * std::sqrt(2.0), 3.0);

    BinaryRaster one(5, 5);
    one(2, 3) = 1;
    const auto s = diameter_report(mask_of(one));
    EXPECT_EQ(s.diameter_px, 0.0);
    EXPECT_EQ(s.bbox_diagonal_px, 0.0);
}

TEST(Risk, ReferenceRuleCases) {
    const auto nevus = risk_stratify(0.026, 0.116, 6, 213);
    EXPECT_EQ(nevus.flags.letters(), "CD");
    EXPECT_EQ(nevus.risk, RiskLevel::Medium);
    const auto mel = risk_stratify(0.12, 0.26, 6, 409);
    EXPECT_EQ(mel.flags.letters(), "CD");
    EXPECT_EQ(mel.risk, RiskLevel::Medium);
}

TEST(Risk, LowHighAndBoundaries) {
    EXPECT_EQ(risk_stratify(0, 0, 1, 10).flags.count(), 0);
    EXPECT_EQ(risk_stratify(0, 0, 1, 10).risk, RiskLevel::Low);
    const auto all = risk_stratify(0.5, 0.5, 5, 200);
    EXPECT_EQ(all.flags.letters(), "ABCD");
    EXPECT_EQ(all.risk, RiskLevel::High);
    const auto edge = risk_stratify(0.3, 0.4, 3, 114);
    EXPECT_EQ(edge.flags.count(), 0);
    EXPECT_EQ(risk_stratify(0.31, 0, 1, 0).risk, RiskLevel::Low);
    EXPECT_EQ(risk_stratify(0.31, 0.41, 4, 0).risk, RiskLevel::High);
}

TEST(Risk, MonotoneInEveryCriterion) {
    Rng rng(38);
    for (int trial = 0; trial < 500; ++trial) {
        const double a = rng.uniform(), b = rng.uniform(), d = rng.uniform() * 300;
        const int c = 1 + static_cast<int>(rng.below(6));
        const auto base = static_cast<int>(risk_stratify(a, b, c, d).risk);
        const double bump = rng.uniform() * 0.5;
        EXPECT_GE(static_cast<int>(risk_stratify(a + bump, b, c, d).risk), base);
        EXPECT_GE(static_cast<int>(risk_stratify(a, b + bump, c, d).risk), base);
        EXPECT_GE(static_cast<int>(risk_stratify(a, b, c + 1, d).risk), base);
        EXPECT_GE(static_cast<int>(risk_stratify(a, b, c, d + 100 * bump).risk), base);
    }
}

TEST(Abcde, FullReportOnDisk) {
    const auto img = fixtures::dark_disk_image(256, 40);
    const auto mask = segment_lesion(img);
    const auto rep = compute_abcde(img, mask);
    EXPECT_LE(rep.asymmetry, 0.05);
    EXPECT_LE(rep.border, 0.15);
    EXPECT_EQ(rep.color_count, 1);
    EXPECT_NEAR(rep.diameter_px, 80.0, 2.0);
    EXPECT_EQ(rep.risk, RiskLevel::Low);
    EXPECT_EQ(rep.flags.count(), 0);
}
