// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "texthawk/tensor.hpp"

namespace texthawk {

// Deterministic generator: splitmix64 for the integer stream, Box-Muller for
// normals. Identical seeds give identical streams on every platform (the
// normal path additionally depends on libm's log/sqrt/cos/sin, which are
// stable on any single platform).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64();
    // uniform in [0, 1), 24 bits of mantissa
    float next_uniform();
    float next_normal();

    Tensor uniform(std::vector<int64_t> shape, float lo, float hi);
    Tensor normal(std::vector<int64_t> shape, float mean, float stddev);

    // Derives an independent child seed; streams for distinct labels do not
    // collide in practice (splitmix64 mixing of seed ^ hash(label)).
    uint64_t fork(uint64_t label) const;

private:
    uint64_t state_;
    bool has_spare_ = false;
    float spare_ = 0.0f;
};

}  // namespace texthawk
