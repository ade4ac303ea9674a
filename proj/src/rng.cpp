// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#include "texthawk/rng.hpp"

#include <cmath>

namespace texthawk {

namespace {
uint64_t splitmix64_step(uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}
}  // namespace

uint64_t Rng::next_u64() { return splitmix64_step(state_); }

float Rng::next_uniform() {
    return static_cast<float>(next_u64() >> 40) * 0x1p-24f;
}

float Rng::next_normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller on two fresh uniforms; u1 kept away from 0
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1p-53;
    double u2 = static_cast<double>(next_u64() >> 11) * 0x1p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = static_cast<float>(r * std::sin(a));
    has_spare_ = true;
    return static_cast<float>(r * std::cos(a));
}

Tensor Rng::uniform(std::vector<int64_t> shape, float lo, float hi) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (float& v : t.data) v = lo + (hi - lo) * next_uniform();
    return t;
}

Tensor Rng::normal(std::vector<int64_t> shape, float mean, float stddev) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (float& v : t.data) v = mean + stddev * next_normal();
    return t;
}

uint64_t Rng::fork(uint64_t label) const {
    uint64_t s = state_ ^ (label * 0xD1342543DE82EF95ull + 0x2545F4914F6CDD1Dull);
    return splitmix64_step(s);
}

}  // namespace texthawk
