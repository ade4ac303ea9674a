// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "texthawk/tensor.hpp"

namespace texthawk {

// Factorized 2-D sinusoidal encodings over a rows x cols patch grid,
// [rows*cols, dim] row-major. First dim/2 channels encode the row index,
// the rest the column index; frequencies geometric from 1 down to 1e-4.
Tensor sincos_2d(int64_t rows, int64_t cols, int64_t dim);

// 1-D variant used for text positions in the decoder stub.
Tensor sincos_1d(const std::vector<int64_t>& positions, int64_t dim);

}  // namespace texthawk
