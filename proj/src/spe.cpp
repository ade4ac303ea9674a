// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#include "texthawk/spe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace texthawk {

namespace {
double raw_cos_angle(const Tensor& a, const Tensor& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        dot += static_cast<double>(a.data[i]) * b.data[i];
        na += static_cast<double>(a.data[i]) * a.data[i];
        nb += static_cast<double>(b.data[i]) * b.data[i];
    }
    return dot / std::sqrt(na * nb);
}
}  // namespace

SpePair SpePair::init(int64_t d_head, Rng& rng) {
    SpePair p;
    p.scale = Tensor::scalar(std::sqrt(static_cast<float>(d_head)));
    for (int attempt = 0; attempt < 64; ++attempt) {
        p.e0_raw = rng.normal({d_head}, 0.0f, 1.0f);
        p.e1_raw = rng.normal({d_head}, 0.0f, 1.0f);
        if (raw_cos_angle(p.e0_raw, p.e1_raw) > std::cos(3.14159265358979323846 - 1e-6)) {
            p.validate();
            return p;
        }
    }
    throw std::runtime_error("spe: could not draw non-antipodal endpoints");
}

void SpePair::validate() const {
    if (e0_raw.shape != e1_raw.shape || e0_raw.rank() != 1 || scale.numel() != 1)
        throw std::invalid_argument("spe: malformed pair");
    double c = raw_cos_angle(e0_raw, e1_raw);
    if (std::acos(std::clamp(c, -1.0, 1.0)) > 3.14159265358979323846 - 1e-6)
        throw std::invalid_argument("spe: antipodal endpoints");
}

double axis_fraction(int64_t index, int64_t extent) {
    if (extent < 1 || index < 0 || index >= extent)
        throw std::invalid_argument("axis_fraction: index out of range");
    if (extent == 1) return 0.5;
    return static_cast<double>(index) / static_cast<double>(extent - 1);
}

Var spe_interpolate(Tape& tape, SpePair& pair, float t) {
    if (t < 0.0f || t > 1.0f) throw std::invalid_argument("spe_interpolate: t outside [0,1]");
    Var e0r = tape.param(&pair.e0_raw);
    Var e1r = tape.param(&pair.e1_raw);
    Var s = tape.param(&pair.scale);
    Var u0 = tape.div(e0r, tape.norm2(e0r));
    Var u1 = tape.div(e1r, tape.norm2(e1r));
    Var e0 = tape.mul(u0, s);
    Var e1 = tape.mul(u1, s);
    double c = raw_cos_angle(pair.e0_raw, pair.e1_raw);
    if (c <= -(1.0 - 1e-9)) throw std::invalid_argument("spe_interpolate: antipodal endpoints");
    if (c >= 1.0 - 1e-12) {
        // theta ~ 0: sin(theta) underflows, fall back to lerp
        return tape.add(tape.scale(e0, 1.0f - t), tape.scale(e1, t));
    }
    Var theta = tape.acos(tape.dot(u0, u1));
    Var sin_theta = tape.sin(theta);
    Var c0 = tape.div(tape.sin(tape.scale(theta, 1.0f - t)), sin_theta);
    Var c1 = tape.div(tape.sin(tape.scale(theta, t)), sin_theta);
    return tape.add(tape.mul(e0, c0), tape.mul(e1, c1));
}

Var spe_for_position(Tape& tape, SpePair& row_pair, SpePair& col_pair, float row_t, float col_t) {
    return tape.add(spe_interpolate(tape, row_pair, row_t), spe_interpolate(tape, col_pair, col_t));
}

}  // namespace texthawk
