// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "texthawk/tensor.hpp"

namespace texthawk {

// Decodes any PNG to [h, w, 3] floats in [0,1] (gray/palette/alpha expanded).
Tensor read_png(const std::string& path);

// Expects [h, w, 3] in [0,1]; values are clamped and quantized to 8 bits.
void write_png(const Tensor& image, const std::string& path);

}  // namespace texthawk
