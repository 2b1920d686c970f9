#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "isac/common.hpp"

namespace isac {

/// Dense row-major complex matrix (rows x cols).
struct CxMat {
    int rows = 0;
    int cols = 0;
    std::vector<cxd> data;

    CxMat() = default;
    CxMat(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c) {}

    cxd& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    const cxd& operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

/// Dense complex cube, slice-major: [slice][row][col] with each slice a
/// contiguous rows x cols row-major block. Used for antenna x subcarrier x
/// symbol tensors (slice = antenna element).
struct CxCube {
    int slices = 0;
    int rows = 0;
    int cols = 0;
    std::vector<cxd> data;

    CxCube() = default;
    CxCube(int s, int r, int c)
        : slices(s), rows(r), cols(c), data(static_cast<std::size_t>(s) * r * c) {}

    cxd& operator()(int s, int r, int c) {
        return data[(static_cast<std::size_t>(s) * rows + r) * cols + c];
    }
    const cxd& operator()(int s, int r, int c) const {
        return data[(static_cast<std::size_t>(s) * rows + r) * cols + c];
    }

    cxd* slice_ptr(int s) { return data.data() + static_cast<std::size_t>(s) * rows * cols; }
    const cxd* slice_ptr(int s) const {
        return data.data() + static_cast<std::size_t>(s) * rows * cols;
    }
};

}  // namespace isac
