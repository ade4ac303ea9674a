// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "texthawk/encoder.hpp"
#include "texthawk/grid.hpp"
#include "texthawk/grounding.hpp"
#include "texthawk/llm.hpp"
#include "texthawk/resampler.hpp"

namespace texthawk {

struct RunConfig {
    CropConfig crop;
    EncoderConfig encoder;
    ResamplerConfig resampler;
    RoutingTable routing = RoutingTable::standard(5);
    LlmConfig llm;
    LossWeights losses;
    uint64_t seed = 0;

    void validate() const;
};

// JSON round-trip; loading materializes every default so the saved file is
// a self-contained record of the run.
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);
std::string run_config_json(const RunConfig& cfg);

}  // namespace texthawk
