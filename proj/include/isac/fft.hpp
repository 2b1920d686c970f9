#pragma once

#include <fftw3.h>

#include "isac/tensor.hpp"

namespace isac {

// FFTW plan creation is not thread-safe; these helpers are meant to be called
// from one thread at a time. Transforms are unnormalized (FFTW convention).

/// In-place IFFT (e^{+j...}) of length mat.rows applied to every column.
inline void ifft_columns(CxMat& mat) {
    fftw_complex* buf = reinterpret_cast<fftw_complex*>(mat.data.data());
    int n = mat.rows;
    fftw_plan plan = fftw_plan_many_dft(1, &n, mat.cols,
                                        buf, nullptr, mat.cols, 1,
                                        buf, nullptr, mat.cols, 1,
                                        FFTW_BACKWARD, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
}

/// In-place FFT (e^{-j...}) of length mat.cols applied to every row.
inline void fft_rows(CxMat& mat) {
    fftw_complex* buf = reinterpret_cast<fftw_complex*>(mat.data.data());
    int n = mat.cols;
    fftw_plan plan = fftw_plan_many_dft(1, &n, mat.rows,
                                        buf, nullptr, 1, mat.cols,
                                        buf, nullptr, 1, mat.cols,
                                        FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
}

}  // namespace isac
