// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "texthawk/config.hpp"
#include "texthawk/packer.hpp"

namespace texthawk {

// Parallel map over [0, n) honoring the TEXTHAWK_KIT_THREADS cap. Output
// ordering is by index, never by completion.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

struct TokenBudget {
    GridChoice choice;
    int64_t raw = 0;      // sub-images * (H/p) * (W/p)
    int64_t emitted = 0;  // raw / 16
    int resa_ratio = 16;
    int baseline_ratio = 4;  // resample-only prior MLLMs
};
TokenBudget token_budget(ImageShape shape, const CropConfig& cfg);

struct ForwardResult {
    GridChoice choice;
    int64_t sub_images = 0;
    int64_t raw_tokens = 0;
    int64_t emitted_tokens = 0;
    Tensor visual_tokens;  // [emitted, llm_dim]
    bool compression_law_ok = false;
    std::array<double, 4> stage_sensitivity{};  // filled when requested
};

ForwardResult run_forward(const RunConfig& cfg, const Tensor& image,
                          bool compute_sensitivities = false);

struct GradCheckResult {
    std::string group;
    double max_rel_err = 0.0;
    double max_abs_grad = 0.0;
    bool pass = false;
};

// Gradient check per parameter group. Resampler groups are probed against a
// seeded scalar loss taken directly on the resampler output; decoder-stub and
// detection-head groups against the full weighted LM + l1 box loss. Each
// group is compared along its analytic gradient direction with a 4th-order
// central-difference stencil, with the step chosen so the loss delta sits
// well above f32 rounding noise.
std::vector<GradCheckResult> gradcheck(const RunConfig& cfg, double tol = 1e-3);

// A small config whose full pipeline is cheap enough for finite differences.
RunConfig desk_gradcheck_config(uint64_t seed);

// Synthetic "document": white page with dark text-like strokes; deterministic.
Tensor synthetic_document_image(int64_t h, int64_t w, uint64_t seed);

}  // namespace texthawk
