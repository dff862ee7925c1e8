#pragma once
// Dense 2-D row-major grid used for masks and heatmaps.

#include <cstddef>
#include <vector>

#include "error.hpp"

namespace lesionlens {

template <class T>
struct Grid {
    int width = 0;
    int height = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(int w, int h, T fill = T{}) : width(w), height(h), data(checked_size(w, h), fill) {}

    std::size_t size() const noexcept { return data.size(); }
    bool contains(int row, int col) const noexcept {
        return row >= 0 && col >= 0 && row < height && col < width;
    }
    std::size_t index(int row, int col) const noexcept {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col);
    }
    T& operator()(int row, int col) { return data[index(row, col)]; }
    const T& operator()(int row, int col) const { return data[index(row, col)]; }

    bool same_shape(int w, int h) const noexcept { return width == w && height == h; }
    template <class U>
    bool same_shape(const Grid<U>& other) const noexcept {
        return width == other.width && height == other.height;
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    static std::size_t checked_size(int w, int h) {
        if (w < 1 || h < 1) fail(ErrorKind::ShapeMismatch, "grid dimensions must be positive");
        return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    }
};

// 0 = background, 1 = foreground.
using BinaryRaster = Grid<unsigned char>;
using ScalarMap = Grid<double>;

struct Offset {
    int drow;
    int dcol;
};

// Offsets of a digital disk: drow^2 + dcol^2 <= radius^2.
inline std::vector<Offset> disk_offsets(int radius) {
    std::vector<Offset> out;
    for (int dr = -radius; dr <= radius; ++dr)
        for (int dc = -radius; dc <= radius; ++dc)
            if (dr * dr + dc * dc <= radius * radius) out.push_back({dr, dc});
    return out;
}

inline constexpr Offset kNeighbors4[4] = {{-1, 0}, {0, -1}, {0, 1}, {1, 0}};

}  // namespace lesionlens
