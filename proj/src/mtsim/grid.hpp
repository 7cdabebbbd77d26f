#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace mtsim {

// Dense row-major table indexed by (prompt, response).
template <class T>
struct Grid {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(int r, int c, T fill = T{}) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {
        if (r < 0 || c < 0) throw std::invalid_argument("Grid: negative dimensions");
    }

    T& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    const T& operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    std::span<T> row(int r) { return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)}; }
    std::span<const T> row(int r) const {
        return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
    }

    bool same_shape(const Grid& other) const { return rows == other.rows && cols == other.cols; }

    bool all_finite() const {
        if constexpr (std::is_floating_point_v<T>) {
            for (T v : data)
                if (!std::isfinite(v)) return false;
        }
        return true;
    }
};

using Matrix = Grid<double>;
using IntGrid = Grid<int>;

}  // namespace mtsim
