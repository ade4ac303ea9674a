// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#include "texthawk/posenc.hpp"

#include <cmath>
#include <stdexcept>

namespace texthawk {

namespace {
// standard transformer encoding: pe[pos, 2f] = sin(pos * w_f),
// pe[pos, 2f+1] = cos(pos * w_f), w_f = 10000^(-2f/d)
void fill_axis(Tensor& pe, int64_t row, int64_t offset, int64_t d, double pos) {
    for (int64_t f = 0; f < d / 2; ++f) {
        double w = std::pow(10000.0, -2.0 * static_cast<double>(f) / static_cast<double>(d));
        pe.at(row, offset + 2 * f) = static_cast<float>(std::sin(pos * w));
        pe.at(row, offset + 2 * f + 1) = static_cast<float>(std::cos(pos * w));
    }
}
}  // namespace

Tensor sincos_2d(int64_t rows, int64_t cols, int64_t dim) {
    if (dim % 4) throw std::invalid_argument("sincos_2d: dim must be divisible by 4");
    Tensor pe = Tensor::zeros({rows * cols, dim});
    const int64_t half = dim / 2;
    for (int64_t i = 0; i < rows; ++i) {
        for (int64_t j = 0; j < cols; ++j) {
            int64_t t = i * cols + j;
            fill_axis(pe, t, 0, half, static_cast<double>(i));
            fill_axis(pe, t, half, half, static_cast<double>(j));
        }
    }
    return pe;
}

Tensor sincos_1d(const std::vector<int64_t>& positions, int64_t dim) {
    if (dim % 2) throw std::invalid_argument("sincos_1d: dim must be even");
    Tensor pe = Tensor::zeros({static_cast<int64_t>(positions.size()), dim});
    for (size_t i = 0; i < positions.size(); ++i)
        fill_axis(pe, static_cast<int64_t>(i), 0, dim, static_cast<double>(positions[i]));
    return pe;
}

}  // namespace texthawk
