// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "texthawk/tensor.hpp"

namespace texthawk {

struct EncoderConfig {
    int depth = 8;
    int dim = 64;
    int heads = 4;
    int channels = 3;
    std::array<int, 4> tap_layers{2, 4, 6, 8};  // 1-based, strictly increasing
    int patch = 14;

    void validate() const;
};

struct FeatureMap {
    int stage = 0;  // 0 = shallowest tap, 3 = deepest
    int64_t rows = 0;
    int64_t cols = 0;
    Tensor features;  // [rows*cols, dim]
};

// Frozen desk-scale ViT stand-in. Weights are drawn once from the seed at
// construction and never change; encode() is a pure function of the image.
class Encoder {
public:
    Encoder(EncoderConfig cfg, uint64_t seed);

    // sub_image is [H, W, channels] with H, W divisible by patch; returns the
    // residual stream snapshot at each tap layer, shallowest first
    std::array<FeatureMap, 4> encode(const Tensor& sub_image) const;

    uint64_t weights_checksum() const;
    const EncoderConfig& config() const { return cfg_; }

private:
    struct Block {
        Tensor wq, wk, wv, wo;      // [dim, dim]
        Tensor ffn1, ffn2;          // [dim, 4*dim], [4*dim, dim]
        Tensor ln1_g, ln1_b, ln2_g, ln2_b;
    };
    EncoderConfig cfg_;
    Tensor embed_;       // [patch*patch*channels, dim]
    Tensor embed_bias_;  // [dim]
    std::vector<Block> blocks_;
};

// Feature file: tensor dump plus a sidecar "<path>.meta" holding
// "stage=<i> rows=<r> cols=<c>".
void features_dump(const FeatureMap& fm, const std::string& path);
FeatureMap features_load(const std::string& path);

}  // namespace texthawk
