// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "texthawk/rng.hpp"
#include "texthawk/tape.hpp"
#include "texthawk/tensor.hpp"

namespace texthawk {

// Two learnable per-head endpoint embeddings plus a learnable scale.
// Endpoints are renormalized to norm `scale` on every forward, so the
// interpolation always runs between points on the same hypersphere.
struct SpePair {
    Tensor e0_raw;  // [d_head]
    Tensor e1_raw;
    Tensor scale;  // {1}, initialized to sqrt(d_head)

    // draws endpoints from N(0,1); rejects antipodal pairs (theta within
    // 1e-6 of pi) by redrawing
    static SpePair init(int64_t d_head, Rng& rng);
    void validate() const;
};

// Fraction convention for index i on an axis of extent m:
// t = i/(m-1) for m > 1, t = 0.5 for the singleton axis.
double axis_fraction(int64_t index, int64_t extent);

// Slerp between the normalized endpoints; falls back to linear interpolation
// when the endpoints are within 1e-6 radians of each other.
Var spe_interpolate(Tape& tape, SpePair& pair, float t);

// Factorized position embedding for one head: row Slerp + column Slerp.
Var spe_for_position(Tape& tape, SpePair& row_pair, SpePair& col_pair, float row_t, float col_t);

}  // namespace texthawk
